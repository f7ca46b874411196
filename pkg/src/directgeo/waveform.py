"""Baseband interference waveforms and spectral estimators.

Every generator samples an absolute time axis ``t_k = (k0 + k) / f_s`` where
``k0`` is the capture's start sample, so a waveform evaluated over
overlapping windows agrees sample for sample. The returned capture still
indexes its own samples from ``t = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np
from scipy import signal

GPS_L1_HZ = 1575.42e6
CA_CHIP_RATE = 1.023e6
CA_LENGTH = 1023
NAV_BIT_RATE = 50.0

# G2 phase-selector taps (1-based register stages) for PRN 1..32.
CA_G2_TAPS = (
    (2, 6), (3, 7), (4, 8), (5, 9), (1, 9), (2, 10), (1, 8), (2, 9),
    (3, 10), (2, 3), (3, 4), (5, 6), (6, 7), (7, 8), (8, 9), (9, 10),
    (1, 4), (2, 5), (3, 6), (4, 7), (5, 8), (6, 9), (1, 3), (4, 6),
    (5, 7), (6, 8), (7, 9), (8, 10), (1, 6), (2, 7), (3, 8), (4, 9),
)


@dataclass
class BasebandCapture:
    samples: np.ndarray
    sample_rate_hz: float
    start_time_s: float = 0.0
    center_freq_hz: float = GPS_L1_HZ

    def __post_init__(self):
        self.samples = np.ascontiguousarray(self.samples, dtype=np.complex128)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("capture needs a non-empty 1-D sample array")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample rate must be positive")

    @property
    def n_samples(self) -> int:
        return self.samples.size

    @property
    def sample_period_s(self) -> float:
        return 1.0 / self.sample_rate_hz

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) / self.sample_rate_hz


@dataclass(frozen=True)
class Spoofer:
    prn: int = 1
    data_seed: int = 0
    # extra PRN channels summed with the first (power-normalised)
    extra_prns: tuple[int, ...] = ()
    chip_rate: float = CA_CHIP_RATE
    nav_bit_rate: float = NAV_BIT_RATE

    def __post_init__(self):
        for p in (self.prn, *self.extra_prns):
            _check_prn(p)
        if self.chip_rate != CA_CHIP_RATE or self.nav_bit_rate != NAV_BIT_RATE:
            raise ValueError("spoofer chip and nav-bit rates are fixed to GPS L1 C/A")


@dataclass(frozen=True)
class Tone:
    offset_hz: float = 0.0


@dataclass(frozen=True)
class Chirp:
    bandwidth_hz: float
    period_s: float

    def __post_init__(self):
        _check_sweep(self.bandwidth_hz, self.period_s)


@dataclass(frozen=True)
class Sawtooth:
    """Up-chirp followed by its conjugate; full period is ``2 * chirp_period_s``."""

    bandwidth_hz: float
    chirp_period_s: float

    def __post_init__(self):
        _check_sweep(self.bandwidth_hz, self.chirp_period_s)

    @property
    def period_s(self) -> float:
        return 2.0 * self.chirp_period_s


WaveformSpec = Union[Spoofer, Tone, Chirp, Sawtooth]


def _check_prn(prn):
    if isinstance(prn, bool) or not isinstance(prn, (int, np.integer)) or not 1 <= prn <= 32:
        raise ValueError(f"PRN must be an integer in 1..32, got {prn!r}")


def _check_sweep(bandwidth_hz, period_s):
    if not bandwidth_hz > 0:
        raise ValueError("bandwidth_hz must be positive")
    if not period_s > 0:
        raise ValueError("period must be positive")


@lru_cache(maxsize=None)
def _ca_bits(prn: int) -> tuple[int, ...]:
    s1, s2 = CA_G2_TAPS[prn - 1]
    g1 = [1] * 10
    g2 = [1] * 10
    out = []
    for _ in range(CA_LENGTH):
        out.append(g1[9] ^ g2[s1 - 1] ^ g2[s2 - 1])
        fb1 = g1[2] ^ g1[9]
        fb2 = g2[1] ^ g2[2] ^ g2[5] ^ g2[7] ^ g2[8] ^ g2[9]
        g1 = [fb1] + g1[:9]
        g2 = [fb2] + g2[:9]
    return tuple(out)


def generate_ca_code(prn: int) -> np.ndarray:
    """GPS L1 C/A Gold code for ``prn`` as 1023 chips in {+1, -1} (bit 0 -> +1)."""
    _check_prn(prn)
    bits = np.array(_ca_bits(int(prn)), dtype=np.int8)
    return (1 - 2 * bits).astype(np.int8)


def _sample_index(f_s: float, duration_s: float, start_time_s: float) -> tuple[np.ndarray, int]:
    if not f_s > 0:
        raise ValueError("sample rate must be positive")
    if not duration_s > 0:
        raise ValueError("duration must be positive")
    n = int(round(duration_s * f_s))
    if n < 1:
        raise ValueError("duration shorter than one sample")
    k0_f = start_time_s * f_s
    k0 = int(round(k0_f))
    if abs(k0 - k0_f) > 1e-6 * max(1.0, abs(k0_f)):
        raise ValueError("start_time_s must fall on the sample grid")
    return np.arange(k0, k0 + n, dtype=np.int64), k0


def _splitmix64(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64) + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def nav_bits(bit_index: np.ndarray, seed: int, prn: int) -> np.ndarray:
    """Pseudorandom +/-1 navigation bits addressed by absolute bit index.

    Counter-based, so any window of the bit stream can be produced without
    generating what precedes it.
    """
    key = _splitmix64(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))[0] ^ np.uint64(prn)
    with np.errstate(over="ignore"):
        h = _splitmix64(bit_index.astype(np.int64).view(np.uint64) ^ key)
    return np.where(h & np.uint64(1), -1.0, 1.0)


def _capture(samples, f_s, k0) -> BasebandCapture:
    return BasebandCapture(samples, f_s, start_time_s=k0 / f_s)


def generate_spoofer(spec: Spoofer, f_s: float, duration_s: float, seed: int | None = None,
                     start_time_s: float = 0.0) -> BasebandCapture:
    """C/A code times 50 bit/s nav data, zero-order-hold sampled.

    ``seed`` overrides ``spec.data_seed`` for the nav-data stream.
    """
    k, k0 = _sample_index(f_s, duration_s, start_time_s)
    data_seed = spec.data_seed if seed is None else seed
    kf = k.astype(np.float64)
    # integer-valued numerators keep chip/bit boundaries exact
    chip = np.floor(kf * spec.chip_rate / f_s).astype(np.int64)
    bit = np.floor(kf * spec.nav_bit_rate / f_s).astype(np.int64)
    prns = (spec.prn, *spec.extra_prns)
    out = np.zeros(k.size, dtype=np.complex128)
    for p in prns:
        code = generate_ca_code(p).astype(np.float64)
        out += code[chip % CA_LENGTH] * nav_bits(bit, data_seed, p)
    if len(prns) > 1:
        out /= np.sqrt(len(prns))
    return _capture(out, f_s, k0)


def generate_tone(spec: Tone, f_s: float, duration_s: float,
                  start_time_s: float = 0.0) -> BasebandCapture:
    if abs(spec.offset_hz) >= f_s / 2:
        raise ValueError(f"tone offset {spec.offset_hz} Hz beyond Nyquist for f_s={f_s}")
    k, k0 = _sample_index(f_s, duration_s, start_time_s)
    # reduce the cycle count mod 1 before scaling by 2*pi
    cycles = np.mod(k.astype(np.float64) * (spec.offset_hz / f_s), 1.0)
    return _capture(np.exp(2j * np.pi * cycles), f_s, k0)


def chirp_phase(u: np.ndarray, bandwidth_hz: float, period_s: float) -> np.ndarray:
    """Phase in cycles of one chirp at in-period time ``u``."""
    return bandwidth_hz / (2.0 * period_s) * u * u - 0.5 * bandwidth_hz * u


def _check_complex_sampling(bandwidth_hz, f_s):
    if bandwidth_hz >= f_s:
        raise ValueError(f"sweep bandwidth {bandwidth_hz} Hz not below f_s={f_s}")


def generate_chirp(spec: Chirp, f_s: float, duration_s: float,
                   start_time_s: float = 0.0) -> BasebandCapture:
    _check_complex_sampling(spec.bandwidth_hz, f_s)
    k, k0 = _sample_index(f_s, duration_s, start_time_s)
    u = np.mod(k / f_s, spec.period_s)
    cyc = np.mod(chirp_phase(u, spec.bandwidth_hz, spec.period_s), 1.0)
    return _capture(np.exp(2j * np.pi * cyc), f_s, k0)


def generate_sawtooth(spec: Sawtooth, f_s: float, duration_s: float,
                      start_time_s: float = 0.0) -> BasebandCapture:
    _check_complex_sampling(spec.bandwidth_hz, f_s)
    k, k0 = _sample_index(f_s, duration_s, start_time_s)
    t_c = spec.chirp_period_s
    u = np.mod(k / f_s, 2.0 * t_c)
    second = u >= t_c
    u = np.where(second, u - t_c, u)
    cyc = np.mod(chirp_phase(u, spec.bandwidth_hz, t_c), 1.0)
    cyc = np.where(second, -cyc, cyc)
    return _capture(np.exp(2j * np.pi * cyc), f_s, k0)


def generate(spec: WaveformSpec, f_s: float, duration_s: float, seed: int | None = None,
             start_time_s: float = 0.0) -> BasebandCapture:
    """Dispatch on the waveform variant."""
    if isinstance(spec, Spoofer):
        return generate_spoofer(spec, f_s, duration_s, seed=seed, start_time_s=start_time_s)
    if isinstance(spec, Tone):
        return generate_tone(spec, f_s, duration_s, start_time_s=start_time_s)
    if isinstance(spec, Chirp):
        return generate_chirp(spec, f_s, duration_s, start_time_s=start_time_s)
    if isinstance(spec, Sawtooth):
        return generate_sawtooth(spec, f_s, duration_s, start_time_s=start_time_s)
    raise TypeError(f"unknown waveform spec {type(spec).__name__}")


def estimate_psd(capture: BasebandCapture, segment_len: int = 1024,
                 overlap: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Welch PSD (Hann window), two-sided and sorted by frequency.

    Returns ``(freq_hz, psd)`` with ``psd`` in power per hertz, so
    ``psd.sum() * df`` approximates the mean-square sample value.
    """
    x = np.asarray(capture.samples)
    if x.size == 0:
        raise ValueError("empty capture")
    if segment_len > x.size:
        raise ValueError(f"segment_len {segment_len} exceeds capture length {x.size}")
    f, p = signal.welch(x, fs=capture.sample_rate_hz, window="hann", nperseg=segment_len,
                        noverlap=int(segment_len * overlap), return_onesided=False,
                        detrend=False, scaling="density")
    return np.fft.fftshift(f), np.fft.fftshift(p)


def compute_spectrogram(capture: BasebandCapture, window_len: int = 256,
                        hop: int | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Short-time magnitude spectrum.

    Returns ``(freq_hz, time_s, mag)`` where ``mag`` has one column per
    window, ``floor((N - window_len) / hop) + 1`` columns in total. Hop
    defaults to half the window.
    """
    x = np.asarray(capture.samples)
    if x.size == 0:
        raise ValueError("empty capture")
    if window_len > x.size:
        raise ValueError(f"window_len {window_len} exceeds capture length {x.size}")
    hop = window_len // 2 if hop is None else hop
    if hop < 1:
        raise ValueError("hop must be >= 1")
    win = signal.get_window("hann", window_len)
    starts = np.arange(0, x.size - window_len + 1, hop)
    frames = x[starts[:, None] + np.arange(window_len)] * win
    mag = np.abs(np.fft.fft(frames, axis=1)).T / win.sum()
    f = np.fft.fftfreq(window_len, 1.0 / capture.sample_rate_hz)
    t = (starts + window_len / 2) / capture.sample_rate_hz
    return np.fft.fftshift(f), t, np.fft.fftshift(mag, axes=0)
