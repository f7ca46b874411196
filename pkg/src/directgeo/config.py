"""YAML scenario documents.

Every key carries its unit in its name. Unknown keys are rejected, and
validation errors report the offending key path with its line in the file.
"""

from __future__ import annotations

from pathlib import Path
from typing import Annotated, Literal, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from directgeo.backend import DEFAULT_BATCH_SIZE, DEFAULT_MEMORY_BUDGET
from directgeo.bench import DEFAULT_COARSE_SIZES, DEFAULT_FINE_WINDOW
from directgeo.geodesy import GeodeticCoord, build_candidate_grid
from directgeo.geoloc import DEFAULT_EXCLUSION_CELLS, DEFAULT_K_SIGMA
from directgeo.scene import CircularOrbit, EmitterDef, GridSpec, Scenario, StateTable
from directgeo.waveform import GPS_L1_HZ, Chirp, Sawtooth, Spoofer, Tone


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class CaptureConfig(_Strict):
    sample_rate_hz: float = Field(gt=0)
    duration_s: float = Field(gt=0, le=0.05)
    center_freq_hz: float = Field(GPS_L1_HZ, gt=0)
    n_snapshots: int = Field(1, ge=1)
    snapshot_spacing_s: float = Field(1.0, gt=0)
    start_epoch_s: float = 0.0


class NoiseConfig(_Strict):
    seed: int = 0
    power: float = Field(1.0, ge=0)
    enabled: bool = True


class CircularOrbitConfig(_Strict):
    altitude_m: float = Field(ge=200e3, le=2000e3)
    inclination_deg: float = Field(ge=0, le=180)
    raan_deg: float
    phase_deg: float


class OverpassConfig(_Strict):
    """Circular orbit whose ground track crosses (lat, lon) at ``time_s``."""

    lat_deg: float = Field(ge=-90, le=90)
    lon_deg: float
    time_s: float
    altitude_m: float = Field(ge=200e3, le=2000e3)
    inclination_deg: float = Field(ge=0, le=180)
    ascending: bool = True


class StateTableConfig(_Strict):
    epochs_s: list[float] = Field(min_length=2)
    positions_m: list[tuple[float, float, float]]
    velocities_m_per_s: list[tuple[float, float, float]]

    @model_validator(mode="after")
    def _lengths(self):
        if not len(self.epochs_s) == len(self.positions_m) == len(self.velocities_m_per_s):
            raise ValueError("epochs_s, positions_m and velocities_m_per_s need equal lengths")
        if any(b <= a for a, b in zip(self.epochs_s, self.epochs_s[1:])):
            raise ValueError("epochs_s must increase strictly")
        return self


class ReceiverConfig(_Strict):
    name: str | None = None
    circular_orbit: CircularOrbitConfig | None = None
    overpass: OverpassConfig | None = None
    state_table: StateTableConfig | None = None

    @model_validator(mode="after")
    def _one_source(self):
        given = [k for k in ("circular_orbit", "overpass", "state_table") if getattr(self, k)]
        if len(given) != 1:
            raise ValueError("receiver needs exactly one of circular_orbit, overpass, state_table")
        return self

    def trajectory(self):
        import numpy as np

        if self.circular_orbit:
            o = self.circular_orbit
            return CircularOrbit(o.altitude_m, o.inclination_deg, o.raan_deg, o.phase_deg)
        if self.overpass:
            o = self.overpass
            return CircularOrbit.overpass(o.lat_deg, o.lon_deg, o.time_s, o.altitude_m,
                                          o.inclination_deg, o.ascending)
        t = self.state_table
        return StateTable(np.array(t.epochs_s), np.array(t.positions_m), np.array(t.velocities_m_per_s))


class SpooferWaveform(_Strict):
    kind: Literal["spoofer"]
    prn: int = Field(1, ge=1, le=32)
    data_seed: int = 0


class ToneWaveform(_Strict):
    kind: Literal["tone"]
    offset_hz: float = 0.0


class ChirpWaveform(_Strict):
    kind: Literal["chirp"]
    bandwidth_hz: float = Field(gt=0)
    period_s: float = Field(gt=0)


class SawtoothWaveform(_Strict):
    """``period_s`` is the full up-then-down period."""

    kind: Literal["sawtooth"]
    bandwidth_hz: float = Field(gt=0)
    period_s: float = Field(gt=0)


WaveformConfig = Annotated[Union[SpooferWaveform, ToneWaveform, ChirpWaveform, SawtoothWaveform],
                           Field(discriminator="kind")]


class EmitterConfig(_Strict):
    name: str = ""
    lat_deg: float = Field(ge=-90, le=90)
    lon_deg: float
    alt_m: float = 0.0
    snr_db: float = 0.0
    ref_range_m: float = Field(1.0e6, gt=0)
    waveform: WaveformConfig

    def spec(self):
        w = self.waveform
        if isinstance(w, SpooferWaveform):
            return Spoofer(prn=w.prn, data_seed=w.data_seed)
        if isinstance(w, ToneWaveform):
            return Tone(w.offset_hz)
        if isinstance(w, ChirpWaveform):
            return Chirp(w.bandwidth_hz, w.period_s)
        return Sawtooth(w.bandwidth_hz, w.period_s / 2.0)


class GridConfig(_Strict):
    lat_min_deg: float = Field(ge=-90, le=90)
    lat_max_deg: float = Field(ge=-90, le=90)
    lon_min_deg: float
    lon_max_deg: float
    spacing_deg: float = Field(gt=0)
    altitude_m: float = 0.0

    def spec(self) -> GridSpec:
        return GridSpec(self.lat_min_deg, self.lat_max_deg, self.lon_min_deg, self.lon_max_deg,
                        self.spacing_deg, self.altitude_m)

    def build(self):
        return build_candidate_grid(self.lat_min_deg, self.lat_max_deg, self.lon_min_deg,
                                    self.lon_max_deg, self.spacing_deg, self.altitude_m)


class DetectionConfig(_Strict):
    k_sigma: float = Field(DEFAULT_K_SIGMA, gt=0)
    exclusion_radius_cells: int = Field(DEFAULT_EXCLUSION_CELLS, ge=0)
    normalize: Literal["none", "median"] = "none"


class ComputeConfig(_Strict):
    backend: Literal["serial", "parallel"] = "parallel"
    batch_size: int = Field(DEFAULT_BATCH_SIZE, ge=1)
    workers: int | None = Field(None, ge=1)
    memory_budget_bytes: int = Field(DEFAULT_MEMORY_BUDGET, ge=1)


class BenchConfig(_Strict):
    candidate_counts: list[int] = Field(default_factory=lambda: [10_000, 100_000])
    n_samples: int = Field(10_240, ge=1)
    sample_rate_hz: float = Field(2.048e6, gt=0)
    seed: int = 0
    coarse_sizes: list[int] = Field(default_factory=lambda: list(DEFAULT_COARSE_SIZES))
    fine_window: int = Field(DEFAULT_FINE_WINDOW, ge=0)
    scan_repetitions: int = Field(3, ge=3)
    compare_repetitions: int = Field(10, ge=3)


class ScenarioConfig(_Strict):
    capture: CaptureConfig
    noise: NoiseConfig = NoiseConfig()
    receivers: list[ReceiverConfig] = Field(min_length=2)
    emitters: list[EmitterConfig] = []
    grid: GridConfig | None = None
    detection: DetectionConfig = DetectionConfig()
    compute: ComputeConfig = ComputeConfig()
    bench: BenchConfig = BenchConfig()

    def scenario(self) -> Scenario:
        c = self.capture
        emitters = [EmitterDef(GeodeticCoord(e.lat_deg, e.lon_deg, e.alt_m), e.spec(), e.snr_db,
                               e.ref_range_m, e.name) for e in self.emitters]
        names = [r.name or f"rx{i}" for i, r in enumerate(self.receivers)]
        return Scenario([r.trajectory() for r in self.receivers], emitters,
                        n_snapshots=c.n_snapshots, snapshot_spacing_s=c.snapshot_spacing_s,
                        duration_s=c.duration_s, sample_rate_hz=c.sample_rate_hz,
                        center_freq_hz=c.center_freq_hz, noise_seed=self.noise.seed,
                        noise_power=self.noise.power, add_noise=self.noise.enabled,
                        start_epoch_s=c.start_epoch_s,
                        grid=self.grid.spec() if self.grid else None, receiver_names=names)


def _node_line(node, loc) -> int | None:
    """1-based line of the deepest YAML node reachable along ``loc``."""
    line = node.start_mark.line + 1 if node is not None else None
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            nxt = next(((k, v) for k, v in node.value if k.value == key), None)
            if nxt is None:
                break
            line = nxt[0].start_mark.line + 1
            node = nxt[1]
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            # discriminated-union tags and similar synthetic path parts
            continue
    return line


def _format_errors(exc: ValidationError, root, source: str) -> str:
    out = []
    for err in exc.errors():
        loc = [p for p in err["loc"]]
        key = ".".join(str(p) for p in loc) or "<document>"
        line = _node_line(root, loc)
        msg = err["msg"]
        if err["type"] == "extra_forbidden":
            msg = "unknown key"
        out.append(f"{source}:{line}: {key}: {msg}")
    return "\n".join(out)


def loads_config(text: str, source: str = "<string>") -> ScenarioConfig:
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: invalid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc, root, source)) from None


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    return loads_config(path.read_text(encoding="utf-8"), str(path))


def parse_scenario(path) -> Scenario:
    """Validated :class:`Scenario` from a YAML document."""
    cfg = load_config(path)
    try:
        return cfg.scenario()
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def shipped_config(name: str) -> Path:
    """Path of a config file bundled with the package (``name`` without suffix)."""
    p = Path(__file__).with_name("configs") / f"{name}.yaml"
    if not p.exists():
        raise FileNotFoundError(f"no shipped config named {name!r}")
    return p
