"""Position-domain correlation kernels.

Both kernels evaluate

    S = | sum_k y1[k] * conj(y2[k + d]) * exp(j 2 pi df k / f_s) |

over the indices where ``k + d`` lies inside ``y2`` (truncated, no wrap).
The Doppler phase is reduced modulo one cycle before scaling by 2 pi.
"""

from __future__ import annotations

import math

import numba
import numpy as np

ANCHOR = 256


def overlap(n: int, d: int) -> tuple[int, int]:
    """Range ``[lo, hi)`` of k with both k and k + d inside ``[0, n)``."""
    lo = max(0, -d)
    hi = min(n, n - d)
    return lo, max(lo, hi)


def correlate_point_numpy(y1: np.ndarray, y2: np.ndarray, tdoa: int, fdoa_hz: float,
                          f_s: float) -> float:
    lo, hi = overlap(y1.size, int(tdoa))
    if hi == lo:
        return 0.0
    k = np.arange(lo, hi)
    prod = y1[lo:hi] * np.conj(y2[lo + tdoa:hi + tdoa])
    rot = np.exp(2j * np.pi * np.mod(k * (fdoa_hz / f_s), 1.0))
    return float(abs(np.dot(prod, rot)))


@numba.njit(nogil=True, cache=True)
def correlate_batch_kernel(y1, y2, tdoa, fdoa, f_s, out):
    """Fill ``out[c]`` for each candidate; sequential sum per candidate.

    The Doppler phasor advances by complex multiplication and is recomputed
    exactly every ``ANCHOR`` samples, bounding recurrence drift.
    """
    n = y1.size
    two_pi = 2.0 * math.pi
    for c in range(tdoa.size):
        d = tdoa[c]
        step = fdoa[c] / f_s
        lo = max(0, -d)
        hi = min(n, n - d)
        w_re = math.cos(two_pi * step)
        w_im = math.sin(two_pi * step)
        acc_re = 0.0
        acc_im = 0.0
        k = lo
        while k < hi:
            cyc = k * step
            cyc -= math.floor(cyc)
            r_re = math.cos(two_pi * cyc)
            r_im = math.sin(two_pi * cyc)
            stop = min(hi, k + ANCHOR)
            for m in range(k, stop):
                a = y1[m]
                b = y2[m + d]
                p_re = a.real * b.real + a.imag * b.imag
                p_im = a.imag * b.real - a.real * b.imag
                acc_re += p_re * r_re - p_im * r_im
                acc_im += p_re * r_im + p_im * r_re
                t = r_re * w_re - r_im * w_im
                r_im = r_re * w_im + r_im * w_re
                r_re = t
            k = stop
        out[c] = math.sqrt(acc_re * acc_re + acc_im * acc_im)
