"""Scenario simulation: receiver trajectories and received baseband captures.

The channel applies a constant delay, Doppler rotation and 1/range
amplitude per snapshot and receiver, then adds circular white Gaussian noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Protocol, Sequence

import numpy as np
from scipy import fft as sp_fft

from directgeo.geodesy import WGS84_A, WGS84_B, GeodeticCoord, lla_to_ecef
from directgeo.waveform import GPS_L1_HZ, BasebandCapture, WaveformSpec, generate

SPEED_OF_LIGHT = 299_792_458.0
MU_EARTH = 3.986004418e14

MAX_SNAPSHOT_S = 0.05
# guard samples on each side of the transmit buffer for the FFT shift
_TX_PAD = 256


@dataclass(frozen=True)
class EcefStateVector:
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(3)
        v = np.asarray(self.velocity, dtype=float).reshape(3)
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(v))):
            raise ValueError("state vector must be finite")
        if np.linalg.norm(p) <= WGS84_B:
            raise ValueError("receiver position must lie above the Earth's surface")
        if np.linalg.norm(v) >= 1e5:
            raise ValueError("receiver speed must be below 1e5 m/s")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "velocity", v)


@dataclass(frozen=True)
class EmitterDef:
    location: GeodeticCoord
    waveform: WaveformSpec
    ref_snr_db: float = 0.0
    ref_range_m: float = 1.0e6
    name: str = ""

    def __post_init__(self):
        if not self.ref_range_m > 0:
            raise ValueError("ref_range_m must be positive")

    @property
    def position(self) -> np.ndarray:
        return lla_to_ecef(self.location)


class Trajectory(Protocol):
    def states(self, epochs_s: Sequence[float]) -> list[EcefStateVector]: ...


def propagate_circular_orbit(alt_m: float, inclination_deg: float, raan_deg: float,
                             phase_deg: float, epochs: Sequence[float]) -> list[EcefStateVector]:
    """Two-body circular orbit, with ECEF taken equal to inertial (no Earth rotation).

    ``phase_deg`` is the argument of latitude at epoch 0.
    """
    if not 200e3 <= alt_m <= 2000e3:
        raise ValueError(f"altitude {alt_m} m outside [200 km, 2000 km]")
    r = WGS84_A + alt_m
    n = math.sqrt(MU_EARTH / r**3)
    inc, raan = math.radians(inclination_deg), math.radians(raan_deg)
    rot_x = np.array([[1, 0, 0], [0, math.cos(inc), -math.sin(inc)], [0, math.sin(inc), math.cos(inc)]])
    rot_z = np.array([[math.cos(raan), -math.sin(raan), 0], [math.sin(raan), math.cos(raan), 0], [0, 0, 1]])
    rot = rot_z @ rot_x
    t = np.asarray(epochs, dtype=float)
    u = math.radians(phase_deg) + n * t
    pos = r * np.stack([np.cos(u), np.sin(u), np.zeros_like(u)], axis=-1) @ rot.T
    vel = r * n * np.stack([-np.sin(u), np.cos(u), np.zeros_like(u)], axis=-1) @ rot.T
    return [EcefStateVector(p, v) for p, v in zip(pos, vel)]


def overpass_elements(lat_deg: float, lon_deg: float, time_s: float, alt_m: float,
                      inclination_deg: float, ascending: bool = True) -> tuple[float, float]:
    """(raan_deg, phase_deg) of a circular orbit whose sub-satellite point
    crosses the given location at ``time_s``."""
    target = lla_to_ecef(GeodeticCoord(lat_deg, lon_deg, 0.0))
    lat_gc = math.asin(target[2] / np.linalg.norm(target))
    lon = math.atan2(target[1], target[0])
    inc = math.radians(inclination_deg)
    s = math.sin(lat_gc) / math.sin(inc) if math.sin(inc) != 0 else float("inf")
    if abs(s) > 1:
        raise ValueError(f"latitude {lat_deg} unreachable at inclination {inclination_deg}")
    u = math.asin(s) if ascending else math.pi - math.asin(s)
    raan = lon - math.atan2(math.cos(inc) * math.sin(u), math.cos(u))
    n = math.sqrt(MU_EARTH / (WGS84_A + alt_m) ** 3)
    return math.degrees(raan) % 360.0, math.degrees(u - n * time_s) % 360.0


@dataclass(frozen=True)
class CircularOrbit:
    alt_m: float
    inclination_deg: float
    raan_deg: float
    phase_deg: float

    @classmethod
    def overpass(cls, lat_deg, lon_deg, time_s, alt_m, inclination_deg, ascending=True):
        raan, phase = overpass_elements(lat_deg, lon_deg, time_s, alt_m, inclination_deg, ascending)
        return cls(alt_m, inclination_deg, raan, phase)

    def states(self, epochs_s):
        return propagate_circular_orbit(self.alt_m, self.inclination_deg, self.raan_deg,
                                        self.phase_deg, epochs_s)


@dataclass(frozen=True)
class StateTable:
    """Explicit ECEF states, linearly interpolated between tabulated epochs."""

    epochs_s: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray

    def states(self, epochs_s):
        t = np.asarray(self.epochs_s, dtype=float)
        out = []
        for e in epochs_s:
            if not t[0] - 1e-9 <= e <= t[-1] + 1e-9:
                raise ValueError(f"epoch {e} s outside state table [{t[0]}, {t[-1]}]")
            p = [np.interp(e, t, self.positions[:, i]) for i in range(3)]
            v = [np.interp(e, t, self.velocities[:, i]) for i in range(3)]
            out.append(EcefStateVector(np.array(p), np.array(v)))
        return out


@dataclass(frozen=True)
class GridSpec:
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float
    spacing_deg: float
    altitude_m: float = 0.0


@dataclass
class Scenario:
    receivers: list
    emitters: list[EmitterDef]
    n_snapshots: int = 1
    snapshot_spacing_s: float = 1.0
    duration_s: float = 0.005
    sample_rate_hz: float = 5e6
    center_freq_hz: float = GPS_L1_HZ
    noise_seed: int = 0
    noise_power: float = 1.0
    add_noise: bool = True
    start_epoch_s: float = 0.0
    grid: GridSpec | None = None
    receiver_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.receivers) < 2:
            raise ValueError("a scenario needs at least two receivers")
        if self.n_snapshots < 1:
            raise ValueError("n_snapshots must be >= 1")
        if not 0 < self.duration_s <= MAX_SNAPSHOT_S:
            raise ValueError(f"capture duration must be in (0, {MAX_SNAPSHOT_S}] s")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.noise_power < 0:
            raise ValueError("noise_power must be non-negative")
        if not self.receiver_names:
            self.receiver_names = [f"rx{i}" for i in range(len(self.receivers))]

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate_hz))

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.center_freq_hz

    def epochs(self) -> np.ndarray:
        return self.start_epoch_s + self.snapshot_spacing_s * np.arange(self.n_snapshots)

    def receiver_states(self) -> list[list[EcefStateVector]]:
        """``states[snapshot][receiver]``."""
        epochs = self.epochs()
        per_rx = [rx.states(epochs) for rx in self.receivers]
        return [list(row) for row in zip(*per_rx)]


@dataclass
class Snapshot:
    epoch_s: float
    states: list[EcefStateVector]
    captures: list[BasebandCapture]

    def __post_init__(self):
        if len(self.states) != len(self.captures) or len(self.states) < 2:
            raise ValueError("snapshot needs matching states and captures for >= 2 receivers")
        c0 = self.captures[0]
        for c in self.captures[1:]:
            if c.sample_rate_hz != c0.sample_rate_hz or c.n_samples != c0.n_samples:
                raise ValueError("captures in a snapshot must share f_s and length")


def channel_parameters(emitter_pos, rx: EcefStateVector, wavelength_m: float) -> tuple[float, float, float]:
    """(range_m, delay_s, doppler_hz) for a stationary emitter."""
    r = rx.position - emitter_pos
    rho = float(np.linalg.norm(r))
    doppler = -float(np.dot(r / rho, rx.velocity)) / wavelength_m
    return rho, rho / SPEED_OF_LIGHT, doppler


def amplitude(emitter: EmitterDef, rho: float, noise_power: float = 1.0) -> float:
    return math.sqrt(noise_power * 10.0 ** (emitter.ref_snr_db / 10.0)) * emitter.ref_range_m / rho


def _shift_from_spectrum(tx_spec: np.ndarray, tx_k0: int, f_s: float, capture_start_s: float,
                         delay_s: float, n_samples: int) -> np.ndarray:
    """Samples of ``x(capture_start + k/f_s - delay)`` for k < n_samples."""
    length = tx_spec.size
    d = (capture_start_s - delay_s) * f_s - tx_k0
    n_int = math.floor(d)
    frac = d - n_int
    if n_int < 0 or n_int + n_samples > length:
        raise ValueError("delay exceeds the transmit buffer")
    if frac == 0.0:
        z = sp_fft.ifft(tx_spec)
    else:
        z = sp_fft.ifft(tx_spec * np.exp(2j * np.pi * sp_fft.fftfreq(length) * frac))
    return z[n_int:n_int + n_samples]


def _apply_doppler(x: np.ndarray, doppler_hz: float, f_s: float) -> np.ndarray:
    cycles = np.mod(np.arange(x.size) * (doppler_hz / f_s), 1.0)
    return x * np.exp(2j * np.pi * cycles)


def synthesize_received(emitter: EmitterDef, rx: EcefStateVector, transmit: BasebandCapture,
                        capture_start_s: float, n_samples: int,
                        noise_power: float = 1.0) -> BasebandCapture:
    """Noise-free received capture of one emitter at one receiver.

    ``transmit`` holds the emitted baseband on absolute time starting at its
    ``start_time_s``; it must cover ``[capture_start - delay,
    capture_start - delay + n_samples / f_s)``. Delay is split into an
    integer shift and a fractional linear-phase shift.
    """
    f_s = transmit.sample_rate_hz
    lam = SPEED_OF_LIGHT / transmit.center_freq_hz
    rho, tau, dop = channel_parameters(emitter.position, rx, lam)
    tx_k0 = int(round(transmit.start_time_s * f_s))
    x = _shift_from_spectrum(sp_fft.fft(transmit.samples), tx_k0, f_s, capture_start_s, tau, n_samples)
    y = amplitude(emitter, rho, noise_power) * _apply_doppler(x, dop, f_s)
    return BasebandCapture(y, f_s, start_time_s=capture_start_s, center_freq_hz=transmit.center_freq_hz)


def noise_rng(noise_seed: int, snapshot: int, receiver: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([noise_seed & 0xFFFFFFFFFFFFFFFF,
                                                         snapshot, receiver]))


def _transmit_window(sc: Scenario, emitter: EmitterDef, epoch: float,
                     delays: Sequence[float]) -> BasebandCapture:
    f_s = sc.sample_rate_hz
    k_first = math.floor((epoch - max(delays)) * f_s) - _TX_PAD
    k_last = math.ceil((epoch - min(delays)) * f_s) + sc.n_samples + _TX_PAD
    length = sp_fft.next_fast_len(k_last - k_first)
    tx = generate(emitter.waveform, f_s, length / f_s, start_time_s=k_first / f_s)
    tx.center_freq_hz = sc.center_freq_hz
    return tx


def simulate_snapshot(sc: Scenario, index: int, states: list[EcefStateVector]) -> Snapshot:
    f_s, n = sc.sample_rate_hz, sc.n_samples
    epoch = float(sc.epochs()[index])
    lam = sc.wavelength_m
    total = [np.zeros(n, dtype=np.complex128) for _ in states]
    for em in sc.emitters:
        params = [channel_parameters(em.position, st, lam) for st in states]
        tx = _transmit_window(sc, em, epoch, [p[1] for p in params])
        spec = sp_fft.fft(tx.samples)
        tx_k0 = int(round(tx.start_time_s * f_s))
        for acc, (rho, tau, dop) in zip(total, params):
            x = _shift_from_spectrum(spec, tx_k0, f_s, epoch, tau, n)
            acc += amplitude(em, rho, sc.noise_power) * _apply_doppler(x, dop, f_s)
    if sc.add_noise and sc.noise_power > 0:
        scale = math.sqrt(sc.noise_power / 2.0)
        for r, acc in enumerate(total):
            w = noise_rng(sc.noise_seed, index, r).standard_normal((2, n))
            acc += scale * (w[0] + 1j * w[1])
    caps = [BasebandCapture(acc, f_s, start_time_s=epoch, center_freq_hz=sc.center_freq_hz)
            for acc in total]
    return Snapshot(epoch, list(states), caps)


def iter_snapshots(sc: Scenario) -> Iterator[Snapshot]:
    for i, states in enumerate(sc.receiver_states()):
        yield simulate_snapshot(sc, i, states)


def simulate_scenario(sc: Scenario) -> list[Snapshot]:
    return list(iter_snapshots(sc))
