"""Compute backends for batched position-domain correlation.

A backend evaluates per-candidate correlation values for one receiver pair
of one snapshot. Captures are staged once; candidate offsets then stream
through in batches following a :class:`BatchPlan`. Each batch is one
load / compute / offload step: gather the batch's offsets, evaluate, and
write into the host-side output array. Accumulation across snapshots and
detection never run here.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from directgeo.kernels import correlate_batch_kernel, correlate_point_numpy

log = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 8
DEFAULT_MEMORY_BUDGET = 2 * 1024**3

# per-candidate bytes: int64 TDOA + float64 FDOA in, float64 S out
OFFSET_BYTES = 16
OUTPUT_BYTES = 8
SAMPLE_BYTES = 16


class BackendError(RuntimeError):
    pass


def estimate_working_set(batch_size: int, n_samples: int) -> tuple[int, int]:
    """(batch term, capture term) in bytes."""
    return batch_size * (OFFSET_BYTES + OUTPUT_BYTES), 2 * n_samples * SAMPLE_BYTES


@dataclass(frozen=True)
class BatchPlan:
    n_points: int
    batch_size: int
    memory_budget_bytes: int
    working_set_bytes: int

    @property
    def n_batches(self) -> int:
        return math.ceil(self.n_points / self.batch_size)

    def ranges(self) -> list[tuple[int, int]]:
        b = self.batch_size
        return [(s, min(s + b, self.n_points)) for s in range(0, self.n_points, b)]


def plan_batches(n_points: int, batch_size: int = DEFAULT_BATCH_SIZE,
                 memory_budget_bytes: int = DEFAULT_MEMORY_BUDGET,
                 n_samples: int = 0) -> BatchPlan:
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    batch_size = min(batch_size, n_points)
    batch_term, capture_term = estimate_working_set(batch_size, n_samples)
    total = batch_term + capture_term
    if total > memory_budget_bytes:
        limiting = "capture" if capture_term >= batch_term else "batch"
        raise BackendError(
            f"working set {total} B exceeds budget {memory_budget_bytes} B "
            f"(limiting term: {limiting}; batch {batch_term} B, captures {capture_term} B)")
    return BatchPlan(n_points, batch_size, memory_budget_bytes, total)


@dataclass(frozen=True)
class BackendDescriptor:
    name: str
    kind: str  # "serial-reference" | "parallel-batched"
    workers: int
    device: str = "cpu"


@dataclass(frozen=True)
class StagedPair:
    y1: np.ndarray
    y2: np.ndarray
    sample_rate_hz: float

    @property
    def n_samples(self) -> int:
        return self.y1.size


def stage_pair(y1, y2) -> StagedPair:
    """Validate and pin two captures as read-only contiguous buffers."""
    if y1.sample_rate_hz != y2.sample_rate_hz:
        raise ValueError("captures differ in sample rate")
    if y1.n_samples != y2.n_samples:
        raise ValueError("captures differ in length")
    a = np.array(y1.samples, dtype=np.complex128, order="C")
    b = np.array(y2.samples, dtype=np.complex128, order="C")
    a.setflags(write=False)
    b.setflags(write=False)
    return StagedPair(a, b, float(y1.sample_rate_hz))


def _as_offset_arrays(offsets) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(offsets, tuple) and len(offsets) == 2 and isinstance(offsets[0], np.ndarray):
        tdoa, fdoa = offsets
    else:
        tdoa = np.array([o.tdoa_samples for o in offsets], dtype=np.int64)
        fdoa = np.array([o.fdoa_hz for o in offsets], dtype=np.float64)
    tdoa = np.ascontiguousarray(tdoa, dtype=np.int64)
    fdoa = np.ascontiguousarray(fdoa, dtype=np.float64)
    if tdoa.shape != fdoa.shape or tdoa.ndim != 1:
        raise ValueError("TDOA and FDOA arrays must be 1-D and equal length")
    return tdoa, fdoa


class SerialBackend:
    """Reference: one numpy correlation per candidate, in grid order."""

    def __init__(self, batch_size: int = DEFAULT_BATCH_SIZE,
                 memory_budget_bytes: int = DEFAULT_MEMORY_BUDGET):
        self.batch_size = batch_size
        self.memory_budget_bytes = memory_budget_bytes
        self.descriptor = BackendDescriptor("serial", "serial-reference", 1)

    def correlate_batch(self, staged: StagedPair, tdoa: np.ndarray, fdoa: np.ndarray) -> np.ndarray:
        out = np.empty(tdoa.size)
        for i in range(tdoa.size):
            out[i] = correlate_point_numpy(staged.y1, staged.y2, int(tdoa[i]), float(fdoa[i]),
                                           staged.sample_rate_hz)
        return out

    def correlate_all(self, staged: StagedPair, tdoa, fdoa, plan: BatchPlan | None = None) -> np.ndarray:
        tdoa, fdoa = _as_offset_arrays((tdoa, fdoa))
        plan = plan or plan_batches(tdoa.size, self.batch_size, self.memory_budget_bytes,
                                    staged.n_samples)
        out = np.empty(tdoa.size)
        for a, b in plan.ranges():
            out[a:b] = self.correlate_batch(staged, tdoa[a:b], fdoa[a:b])
        return out


class ParallelBackend:
    """Batches dealt round-robin to a thread pool running a GIL-free kernel.

    Every candidate is reduced sequentially by a single worker, so results do
    not depend on the worker count or the batch size.
    """

    def __init__(self, workers: int | None = None, batch_size: int = DEFAULT_BATCH_SIZE,
                 memory_budget_bytes: int = DEFAULT_MEMORY_BUDGET):
        self.workers = max(1, workers or os.cpu_count() or 1)
        self.batch_size = batch_size
        self.memory_budget_bytes = memory_budget_bytes
        self.descriptor = BackendDescriptor("parallel", "parallel-batched", self.workers)

    def correlate_batch(self, staged: StagedPair, tdoa: np.ndarray, fdoa: np.ndarray) -> np.ndarray:
        out = np.empty(tdoa.size)
        correlate_batch_kernel(staged.y1, staged.y2, np.ascontiguousarray(tdoa, dtype=np.int64),
                               np.ascontiguousarray(fdoa, dtype=np.float64),
                               staged.sample_rate_hz, out)
        return out

    def correlate_all(self, staged: StagedPair, tdoa, fdoa, plan: BatchPlan | None = None) -> np.ndarray:
        tdoa, fdoa = _as_offset_arrays((tdoa, fdoa))
        plan = plan or plan_batches(tdoa.size, self.batch_size, self.memory_budget_bytes,
                                    staged.n_samples)
        try:
            out = np.empty(tdoa.size)
        except MemoryError as exc:
            raise BackendError(f"cannot allocate output for {tdoa.size} candidates") from exc
        ranges = plan.ranges()
        y1, y2, f_s = staged.y1, staged.y2, staged.sample_rate_hz

        def run(worker: int) -> None:
            for a, b in ranges[worker::self.workers]:
                correlate_batch_kernel(y1, y2, tdoa[a:b], fdoa[a:b], f_s, out[a:b])

        if self.workers == 1:
            run(0)
        else:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                list(pool.map(run, range(self.workers)))
        return out


BACKENDS = {"serial": SerialBackend, "parallel": ParallelBackend}


def get_backend(name: str, **kwargs):
    try:
        cls = BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown backend {name!r}; choose from {sorted(BACKENDS)}") from None
    if cls is SerialBackend:
        kwargs.pop("workers", None)
    return cls(**kwargs)


def correlate_batch(backend, candidates, y1, y2) -> np.ndarray:
    """Correlation values for a batch of pair offsets on two captures.

    ``candidates`` is a sequence of objects with ``tdoa_samples`` and
    ``fdoa_hz`` attributes, or a ``(tdoa, fdoa)`` tuple of arrays.
    """
    tdoa, fdoa = _as_offset_arrays(candidates)
    if tdoa.size == 0:
        raise ValueError("empty batch")
    return backend.correlate_batch(stage_pair(y1, y2), tdoa, fdoa)
