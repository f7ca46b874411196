"""WGS84 geodetic/ECEF conversions and candidate-grid construction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_B = WGS84_A * (1.0 - WGS84_F)
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)

DEFAULT_MAX_GRID_POINTS = 4_000_000

_LAT_TOL_RAD = 1e-12
_MAX_ITER = 50


@dataclass(frozen=True)
class GeodeticCoord:
    lat_deg: float
    lon_deg: float
    alt_m: float = 0.0

    def __post_init__(self):
        if not -90.0 <= self.lat_deg <= 90.0:
            raise ValueError(f"latitude {self.lat_deg} outside [-90, 90]")
        if not -180.0 <= self.lon_deg < 180.0:
            raise ValueError(f"longitude {self.lon_deg} outside [-180, 180)")
        if not math.isfinite(self.alt_m):
            raise ValueError("altitude must be finite")


def wrap_lon(lon_deg):
    """Wrap longitude(s) into [-180, 180)."""
    return (np.asarray(lon_deg, dtype=float) + 180.0) % 360.0 - 180.0


def lla_to_ecef_array(lat_deg, lon_deg, alt_m=0.0) -> np.ndarray:
    """Vectorised forward transform; returns an (..., 3) array in meters."""
    lat = np.radians(np.asarray(lat_deg, dtype=float))
    lon = np.radians(np.asarray(lon_deg, dtype=float))
    alt = np.asarray(alt_m, dtype=float)
    sin_lat = np.sin(lat)
    cos_lat = np.cos(lat)
    n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * sin_lat**2)
    x = (n + alt) * cos_lat * np.cos(lon)
    y = (n + alt) * cos_lat * np.sin(lon)
    z = (n * (1.0 - WGS84_E2) + alt) * sin_lat
    return np.stack(np.broadcast_arrays(x, y, z), axis=-1)


def lla_to_ecef(g: GeodeticCoord) -> np.ndarray:
    return lla_to_ecef_array(g.lat_deg, g.lon_deg, g.alt_m)


def ecef_to_lla_array(xyz) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised inverse transform (fixed-point iteration on latitude).

    Returns ``(lat_deg, lon_deg, alt_m)``. Raises ValueError for the Earth's
    center, where latitude is undefined.
    """
    xyz = np.asarray(xyz, dtype=float)
    x, y, z = xyz[..., 0], xyz[..., 1], xyz[..., 2]
    p = np.hypot(x, y)
    if np.any((p == 0.0) & (z == 0.0)):
        raise ValueError("ECEF origin has no geodetic coordinates")

    lat = np.arctan2(z, p * (1.0 - WGS84_E2))
    for _ in range(_MAX_ITER):
        sin_lat = np.sin(lat)
        n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * sin_lat**2)
        new_lat = np.arctan2(z + WGS84_E2 * n * sin_lat, p)
        done = np.all(np.abs(new_lat - lat) < _LAT_TOL_RAD)
        lat = new_lat
        if done:
            break

    sin_lat = np.sin(lat)
    # Valid at the poles, unlike p / cos(lat) - N.
    alt = p * np.cos(lat) + z * sin_lat - WGS84_A * np.sqrt(1.0 - WGS84_E2 * sin_lat**2)
    lon = wrap_lon(np.degrees(np.arctan2(y, x)))
    return np.degrees(lat), lon, alt


def ecef_to_lla(p) -> GeodeticCoord:
    lat, lon, alt = ecef_to_lla_array(np.asarray(p, dtype=float).reshape(3))
    return GeodeticCoord(float(lat), float(lon), float(alt))


def _axis_count(span: float, step: float) -> int:
    # small slack so 10 / 0.01 counts 1001 nodes rather than 1000
    return int(math.floor(span / step + 1e-9)) + 1


@dataclass(frozen=True, eq=False)
class CandidateGrid:
    """Lat/lon lattice at a fixed altitude, flattened lat-major.

    Flat index ``i`` corresponds to ``(row, col) = divmod(i, lon_count)``
    with ``row`` stepping latitude upward from ``lat_start``.
    """

    lat_start: float
    lat_step: float
    lat_count: int
    lon_start: float
    lon_step: float
    lon_count: int
    altitude_m: float
    points: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.lat_count, self.lon_count

    @property
    def size(self) -> int:
        return self.lat_count * self.lon_count

    @property
    def lat_values(self) -> np.ndarray:
        return self.lat_start + self.lat_step * np.arange(self.lat_count)

    @property
    def lon_values(self) -> np.ndarray:
        return self.lon_start + self.lon_step * np.arange(self.lon_count)

    def flat_index(self, row: int, col: int) -> int:
        if not (0 <= row < self.lat_count and 0 <= col < self.lon_count):
            raise IndexError(f"cell ({row}, {col}) outside grid {self.shape}")
        return row * self.lon_count + col

    def cell(self, index: int) -> tuple[int, int]:
        if not 0 <= index < self.size:
            raise IndexError(f"flat index {index} outside grid of {self.size}")
        return divmod(int(index), self.lon_count)

    def coord(self, index: int) -> GeodeticCoord:
        row, col = self.cell(index)
        lon = float(wrap_lon(self.lon_start + self.lon_step * col))
        return GeodeticCoord(self.lat_start + self.lat_step * row, lon, self.altitude_m)

    def latlon(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened (lat, lon) arrays in grid order."""
        lat, lon = np.meshgrid(self.lat_values, self.lon_values, indexing="ij")
        return lat.ravel(), lon.ravel()

    def nearest_index(self, lat_deg: float, lon_deg: float) -> int:
        row = int(np.clip(round((lat_deg - self.lat_start) / self.lat_step), 0, self.lat_count - 1)) \
            if self.lat_count > 1 else 0
        col = int(np.clip(round((lon_deg - self.lon_start) / self.lon_step), 0, self.lon_count - 1)) \
            if self.lon_count > 1 else 0
        return self.flat_index(row, col)

    def same_lattice(self, other: "CandidateGrid") -> bool:
        return self is other or self.axes() == other.axes()

    def axes(self) -> tuple:
        return (self.lat_start, self.lat_step, self.lat_count,
                self.lon_start, self.lon_step, self.lon_count, self.altitude_m)


def grid_from_axes(lat_start, lat_step, lat_count, lon_start, lon_step, lon_count,
                   altitude_m=0.0) -> CandidateGrid:
    lat = lat_start + lat_step * np.arange(lat_count)
    lon = lon_start + lon_step * np.arange(lon_count)
    lat2, lon2 = np.meshgrid(lat, lon, indexing="ij")
    points = lla_to_ecef_array(lat2.ravel(), lon2.ravel(), altitude_m)
    points.setflags(write=False)
    return CandidateGrid(float(lat_start), float(lat_step), int(lat_count),
                         float(lon_start), float(lon_step), int(lon_count),
                         float(altitude_m), points)


def build_candidate_grid(lat_min: float, lat_max: float, lon_min: float, lon_max: float,
                         spacing_deg: float, altitude_m: float = 0.0,
                         max_points: int = DEFAULT_MAX_GRID_POINTS) -> CandidateGrid:
    """Build the lattice covering ``[lat_min, lat_max] x [lon_min, lon_max]``.

    Each axis gets ``floor(span / spacing) + 1`` nodes starting at the minimum.
    Longitudes may exceed 180 to cross the antimeridian; they are wrapped
    before conversion.
    """
    if not spacing_deg > 0:
        raise ValueError("spacing_deg must be positive")
    if lat_max < lat_min or lon_max < lon_min:
        raise ValueError("grid bounds are empty")
    if lat_min < -90 or lat_max > 90:
        raise ValueError("latitude bounds outside [-90, 90]")
    n_lat = _axis_count(lat_max - lat_min, spacing_deg)
    n_lon = _axis_count(lon_max - lon_min, spacing_deg)
    if n_lat * n_lon > max_points:
        raise ValueError(
            f"grid of {n_lat}x{n_lon} = {n_lat * n_lon} points exceeds cap of {max_points}")
    return grid_from_axes(lat_min, spacing_deg, n_lat, lon_min, spacing_deg, n_lon, altitude_m)
