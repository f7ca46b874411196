"""On-disk formats: DGIQ captures, DGGR grids, CSV tables and PGM heatmaps.

Binary layouts (all little-endian):

DGIQ: magic ``b"DGIQ"``, u16 version, f64 sample_rate_hz, f64 center_freq_hz,
f64 start_time_s, u64 sample_count, then ``sample_count`` interleaved
(I, Q) float32 pairs.

DGGR: magic ``b"DGGR"``, u16 version, f64 lat_start_deg, f64 lat_step_deg,
u64 lat_count, f64 lon_start_deg, f64 lon_step_deg, u64 lon_count,
f64 altitude_m, then ``lat_count * lon_count`` float64 values in grid order.
"""

from __future__ import annotations

import csv
import re
import struct
from pathlib import Path

import numpy as np

from directgeo.geodesy import grid_from_axes
from directgeo.geoloc import CorrelationGrid, EmitterEstimate
from directgeo.waveform import BasebandCapture

IQ_MAGIC = b"DGIQ"
GRID_MAGIC = b"DGGR"
FORMAT_VERSION = 1
IQ_HEADER = struct.Struct("<4sHdddQ")
GRID_HEADER = struct.Struct("<4sHddQddQd")


class FormatError(ValueError):
    pass


def encode_iq(capture: BasebandCapture) -> bytes:
    x = np.asarray(capture.samples)
    payload = np.empty(2 * x.size, dtype="<f4")
    payload[0::2] = x.real
    payload[1::2] = x.imag
    head = IQ_HEADER.pack(IQ_MAGIC, FORMAT_VERSION, capture.sample_rate_hz, capture.center_freq_hz,
                          capture.start_time_s, x.size)
    return head + payload.tobytes()


def decode_iq(data: bytes, source: str = "<bytes>") -> BasebandCapture:
    if len(data) < IQ_HEADER.size:
        raise FormatError(f"{source}: truncated header")
    magic, version, fs, fc, t0, count = IQ_HEADER.unpack_from(data)
    if magic != IQ_MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{source}: unsupported version {version}")
    payload = len(data) - IQ_HEADER.size
    if payload != 8 * count:
        raise FormatError(f"{source}: header says {count} samples, payload holds {payload} bytes")
    iq = np.frombuffer(data, dtype="<f4", offset=IQ_HEADER.size)
    samples = (iq[0::2] + 1j * iq[1::2]).astype(np.complex64)
    return BasebandCapture(samples, fs, start_time_s=t0, center_freq_hz=fc)


def write_iq(capture: BasebandCapture, path) -> Path:
    path = Path(path)
    path.write_bytes(encode_iq(capture))
    return path


def read_iq(path) -> BasebandCapture:
    path = Path(path)
    return decode_iq(path.read_bytes(), str(path))


def encode_grid(grid: CorrelationGrid) -> bytes:
    g = grid.grid
    head = GRID_HEADER.pack(GRID_MAGIC, FORMAT_VERSION, g.lat_start, g.lat_step, g.lat_count,
                            g.lon_start, g.lon_step, g.lon_count, g.altitude_m)
    return head + np.asarray(grid.values, dtype="<f8").tobytes()


def decode_grid(data: bytes, source: str = "<bytes>") -> CorrelationGrid:
    if len(data) < GRID_HEADER.size:
        raise FormatError(f"{source}: truncated header")
    magic, version, la0, dla, nla, lo0, dlo, nlo, alt = GRID_HEADER.unpack_from(data)
    if magic != GRID_MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{source}: unsupported version {version}")
    if len(data) - GRID_HEADER.size != 8 * nla * nlo:
        raise FormatError(f"{source}: payload does not hold {nla}x{nlo} values")
    values = np.frombuffer(data, dtype="<f8", offset=GRID_HEADER.size).astype(float)
    return CorrelationGrid(grid_from_axes(la0, dla, nla, lo0, dlo, nlo, alt), values)


def write_grid(grid: CorrelationGrid, path, fmt: str = "csv") -> Path:
    """Write ``grid`` as ``csv`` (lat_deg, lon_deg, value) or ``binary`` (DGGR)."""
    path = Path(path)
    if fmt == "binary":
        path.write_bytes(encode_grid(grid))
    elif fmt == "csv":
        lat, lon = grid.grid.latlon()
        with path.open("w", newline="", encoding="ascii") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lat_deg", "lon_deg", "value"])
            for a, b, v in zip(lat, lon, grid.values):
                w.writerow([f"{a:.17g}", f"{b:.17g}", f"{v:.17g}"])
    else:
        raise ValueError(f"unknown grid format {fmt!r}")
    return path


def read_grid(path) -> CorrelationGrid:
    path = Path(path)
    return decode_grid(path.read_bytes(), str(path))


def read_grid_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1], data[:, 2]


def write_detections(detections: list[EmitterEstimate], path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "lat_deg", "lon_deg", "alt_m", "grid_index", "row", "col", "score",
                    "score_zsigma"])
        for n, d in enumerate(detections, 1):
            w.writerow([n, f"{d.location.lat_deg:.17g}", f"{d.location.lon_deg:.17g}",
                        f"{d.location.alt_m:.17g}", d.index, d.cell[0], d.cell[1],
                        f"{d.score:.17g}", f"{d.score_zsigma:.17g}"])
    return path


def scale_to_u16(img: np.ndarray) -> np.ndarray:
    """Linear min -> 0, max -> 65535; a constant image maps to zeros."""
    lo, hi = float(img.min()), float(img.max())
    if hi == lo:
        return np.zeros(img.shape, dtype=np.uint16)
    return np.round((img - lo) / (hi - lo) * 65535.0).astype(np.uint16)


def write_pgm(img: np.ndarray, path) -> Path:
    """16-bit binary PGM (P5) of a 2-D array, row 0 at the top.

    Pixel words are big-endian as Netpbm requires.
    """
    px = scale_to_u16(np.asarray(img, dtype=float))
    h, w = px.shape
    path = Path(path)
    path.write_bytes(f"P5\n{w} {h}\n65535\n".encode("ascii") + px.astype(">u2").tobytes())
    return path


def heatmap_pixels(grid: CorrelationGrid) -> np.ndarray:
    """uint16 image with row 0 = northernmost latitude."""
    img = grid.image()
    if grid.grid.lat_step >= 0:
        img = img[::-1]
    return scale_to_u16(img)


def render_heatmap(grid: CorrelationGrid, path) -> Path:
    img = grid.image()
    return write_pgm(img[::-1] if grid.grid.lat_step >= 0 else img, path)


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if not m or int(m.group(3)) != 65535:
        raise FormatError(f"{path}: not a 16-bit P5 graymap")
    w, h = int(m.group(1)), int(m.group(2))
    body = data[m.end():]
    if len(body) != 2 * w * h:
        raise FormatError(f"{path}: expected {2 * w * h} pixel bytes, found {len(body)}")
    return np.frombuffer(body, dtype=">u2").reshape(h, w).astype(np.uint16)
