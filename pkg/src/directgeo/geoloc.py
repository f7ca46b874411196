"""Direct geolocation: geometry prediction, position-domain correlation,
noncoherent accumulation and threshold detection."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from directgeo.backend import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_MEMORY_BUDGET,
    ParallelBackend,
    plan_batches,
    stage_pair,
)
from directgeo.geodesy import CandidateGrid, GeodeticCoord
from directgeo.kernels import correlate_point_numpy
from directgeo.scene import SPEED_OF_LIGHT, EcefStateVector, Snapshot
from directgeo.waveform import GPS_L1_HZ, BasebandCapture

log = logging.getLogger(__name__)

DEFAULT_K_SIGMA = 5.0
DEFAULT_EXCLUSION_CELLS = 5


def wavelength(center_freq_hz: float = GPS_L1_HZ) -> float:
    return SPEED_OF_LIGHT / center_freq_hz


def round_half_away(x):
    """Nearest integer, ties away from zero (unlike numpy's half-to-even)."""
    x = np.asarray(x, dtype=float)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


@dataclass(frozen=True)
class GeometryPrediction:
    range_m: float
    delay_s: float
    doppler_hz: float
    unit_range: np.ndarray


@dataclass(frozen=True)
class PairOffsets:
    tdoa_samples: int
    fdoa_hz: float


def predict_geometry(p_c, s: EcefStateVector, wavelength_m: float) -> GeometryPrediction:
    r = s.position - np.asarray(p_c, dtype=float)
    rho = float(np.linalg.norm(r))
    if rho == 0.0:
        raise ValueError("candidate coincides with receiver position")
    unit = r / rho
    return GeometryPrediction(rho, rho / SPEED_OF_LIGHT, -float(unit @ s.velocity) / wavelength_m, unit)


def predict_pair_offsets(p_c, s_i: EcefStateVector, s_j: EcefStateVector, f_s: float,
                         wavelength_m: float) -> PairOffsets:
    gi = predict_geometry(p_c, s_i, wavelength_m)
    gj = predict_geometry(p_c, s_j, wavelength_m)
    tdoa = int(round_half_away((gj.delay_s - gi.delay_s) * f_s))
    return PairOffsets(tdoa, gj.doppler_hz - gi.doppler_hz)


def _delay_doppler(points: np.ndarray, s: EcefStateVector, wavelength_m: float):
    r = s.position[None, :] - points
    rho = np.sqrt(np.einsum("ij,ij->i", r, r))
    if np.any(rho == 0.0):
        raise ValueError("candidate coincides with receiver position")
    return rho / SPEED_OF_LIGHT, -(r @ s.velocity) / rho / wavelength_m


def grid_pair_offsets(points: np.ndarray, s_i: EcefStateVector, s_j: EcefStateVector,
                      f_s: float, wavelength_m: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised offsets for every candidate: (tdoa_samples int64, fdoa_hz)."""
    tau_i, f_i = _delay_doppler(points, s_i, wavelength_m)
    tau_j, f_j = _delay_doppler(points, s_j, wavelength_m)
    return round_half_away((tau_j - tau_i) * f_s), f_j - f_i


def _check_pair(y1: BasebandCapture, y2: BasebandCapture) -> None:
    if y1.sample_rate_hz != y2.sample_rate_hz:
        raise ValueError("captures differ in sample rate")
    if y1.n_samples != y2.n_samples:
        raise ValueError("captures differ in length")


def correlate_point(y1: BasebandCapture, y2: BasebandCapture, off: PairOffsets) -> float:
    """Position-domain correlation value for one candidate's offsets."""
    _check_pair(y1, y2)
    return correlate_point_numpy(y1.samples, y2.samples, int(off.tdoa_samples),
                                 float(off.fdoa_hz), y1.sample_rate_hz)


@dataclass(eq=False)
class CorrelationGrid:
    grid: CandidateGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.size,):
            raise ValueError(f"expected {self.grid.size} values, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError("correlation values must be finite and non-negative")

    def image(self) -> np.ndarray:
        """Values as a (lat_count, lon_count) array, row 0 = lat_start."""
        return self.values.reshape(self.grid.shape)

    def argmax(self) -> int:
        return int(np.argmax(self.values))


@dataclass(frozen=True)
class EmitterEstimate:
    location: GeodeticCoord
    index: int
    cell: tuple[int, int]
    score: float
    score_zsigma: float


def _default_backend():
    return ParallelBackend()


def correlate_snapshot(grid: CandidateGrid, snap: Snapshot, pair: tuple[int, int] = (0, 1),
                       backend=None, batch_size: int | None = None,
                       memory_budget_bytes: int = DEFAULT_MEMORY_BUDGET,
                       wavelength_m: float | None = None) -> CorrelationGrid:
    i, j = pair
    if not (0 <= i < len(snap.captures) and 0 <= j < len(snap.captures)) or i == j:
        raise ValueError(f"invalid receiver pair {pair} for {len(snap.captures)} receivers")
    backend = backend or _default_backend()
    y1, y2 = snap.captures[i], snap.captures[j]
    lam = wavelength_m or wavelength(y1.center_freq_hz)
    f_s = y1.sample_rate_hz
    tdoa, fdoa = grid_pair_offsets(grid.points, snap.states[i], snap.states[j], f_s, lam)
    staged = stage_pair(y1, y2)
    plan = plan_batches(grid.size, batch_size or getattr(backend, "batch_size", DEFAULT_BATCH_SIZE),
                        memory_budget_bytes, staged.n_samples)
    values = backend.correlate_all(staged, tdoa, fdoa, plan)
    return CorrelationGrid(grid, values)


def all_pairs(n_receivers: int) -> list[tuple[int, int]]:
    return list(itertools.combinations(range(n_receivers), 2))


def correlate_snapshot_pairs(grid: CandidateGrid, snap: Snapshot,
                             pairs: Sequence[tuple[int, int]] | None = None,
                             backend=None, **kwargs) -> CorrelationGrid:
    """Sum of per-pair grids (every unique pair by default)."""
    pairs = list(pairs) if pairs else all_pairs(len(snap.captures))
    grids = [correlate_snapshot(grid, snap, p, backend, **kwargs) for p in pairs]
    return accumulate_grids(grids)


def accumulate_grids(grids: Sequence[CorrelationGrid], normalize: str | None = None) -> CorrelationGrid:
    """Noncoherent (elementwise) sum.

    ``normalize="median"`` divides each grid by its median first.
    """
    grids = list(grids)
    if not grids:
        raise ValueError("no grids to accumulate")
    ref = grids[0].grid
    total = np.zeros(ref.size)
    for g in grids:
        if not g.grid.same_lattice(ref):
            raise ValueError("grids reference different candidate lattices")
        if normalize == "median":
            med = float(np.median(g.values))
            total += g.values / med if med > 0 else g.values
        elif normalize is None:
            total += g.values
        else:
            raise ValueError(f"unknown normalisation {normalize!r}")
    return CorrelationGrid(ref, total)


def detect_emitters(grid: CorrelationGrid, k_sigma: float = DEFAULT_K_SIGMA,
                    exclusion_radius_cells: int = DEFAULT_EXCLUSION_CELLS) -> list[EmitterEstimate]:
    """Local maxima above ``mean + k_sigma * std``, accepted greedily by score.

    A candidate is rejected when it lies within ``exclusion_radius_cells``
    (Chebyshev distance) of an already accepted detection.
    """
    v = grid.values
    if v.size == 0:
        raise ValueError("empty grid")
    mu, sigma = float(v.mean()), float(v.std())
    if sigma == 0.0:
        return []
    threshold = mu + k_sigma * sigma
    img = grid.image()
    peaks = img == ndimage.maximum_filter(img, size=3, mode="constant", cval=-np.inf)
    cand = np.flatnonzero(peaks.ravel() & (v > threshold))
    cand = cand[np.argsort(-v[cand], kind="stable")]
    accepted: list[tuple[int, int]] = []
    out = []
    for idx in cand:
        r, c = grid.grid.cell(int(idx))
        if any(max(abs(r - ar), abs(c - ac)) <= exclusion_radius_cells for ar, ac in accepted):
            continue
        accepted.append((r, c))
        out.append(EmitterEstimate(grid.grid.coord(int(idx)), int(idx), (r, c), float(v[idx]),
                                   (float(v[idx]) - mu) / sigma))
    return out


@dataclass
class GeolocationResult:
    snapshot_grids: list[CorrelationGrid]
    accumulated: CorrelationGrid
    detections: list[EmitterEstimate] = field(default_factory=list)


def direct_geolocate(grid: CandidateGrid, snapshots: Sequence[Snapshot], backend=None,
                     pairs: Sequence[tuple[int, int]] | None = None,
                     k_sigma: float = DEFAULT_K_SIGMA,
                     exclusion_radius_cells: int = DEFAULT_EXCLUSION_CELLS,
                     normalize: str | None = None, batch_size: int | None = None,
                     memory_budget_bytes: int = DEFAULT_MEMORY_BUDGET) -> GeolocationResult:
    """Full pipeline: per-snapshot grids, accumulation on the host, detection."""
    backend = backend or _default_backend()
    per_snapshot = []
    for n, snap in enumerate(snapshots):
        g = correlate_snapshot_pairs(grid, snap, pairs, backend, batch_size=batch_size,
                                     memory_budget_bytes=memory_budget_bytes)
        log.debug("snapshot %d: peak %.4g at %d", n, g.values.max(), g.argmax())
        per_snapshot.append(g)
    acc = accumulate_grids(per_snapshot, normalize=normalize)
    return GeolocationResult(per_snapshot, acc, detect_emitters(acc, k_sigma, exclusion_radius_cells))
