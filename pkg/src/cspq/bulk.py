"""Dataset-scale encoding: chunk-major block streaming plus the naive
vector-major order for comparison.

The execution plan never changes the produced codes, only how the work is
scheduled: chunk-major keeps one codebook hot across a whole block of
vectors; workers own disjoint block ranges of the output, so no locks are
needed and results are deterministic under any scheduling.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .core import Codebook, ConfigError, PQCodes, PQParams
from .kernels import (
    _VARIANT_IDS,
    _drive_chunk_major,
    _drive_vector_major,
    EncoderVariant,
    native_lane_width,
)

CHUNK_MAJOR = "chunk_major"
VECTOR_MAJOR = "vector_major"


@dataclass(frozen=True)
class ExecutionPlan:
    order: str = CHUNK_MAJOR
    block_size: int = 4096
    variant: EncoderVariant = EncoderVariant.BLOCKED
    w: int | None = None  # None -> native lane width
    workers: int = 1

    def __post_init__(self):
        if self.order not in (CHUNK_MAJOR, VECTOR_MAJOR):
            raise ConfigError(f"unknown order {self.order!r}")
        if self.block_size < 1:
            raise ConfigError(f"block_size must be >= 1, got {self.block_size}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.w is not None and self.w < 1:
            raise ConfigError(f"w must be >= 1, got {self.w}")

    def resolved_w(self) -> int:
        return self.w if self.w is not None else native_lane_width()


@dataclass(frozen=True)
class CodebookSet:
    """All m codebooks stacked into contiguous arrays for the jitted drivers.

    Built once per train/load; this is the resident working set (both
    layouts plus biases), shared read-only by every worker.
    """

    rowmajor: np.ndarray     # (m, k, sub_dim) float32
    transposed: np.ndarray   # (m, sub_dim, k) float32
    biases: np.ndarray       # (m, k) float32

    @classmethod
    def from_codebooks(cls, codebooks) -> "CodebookSet":
        if isinstance(codebooks, cls):
            return codebooks
        cbs = list(codebooks)
        if not cbs:
            raise ConfigError("no codebooks given")
        k, sub = cbs[0].k, cbs[0].sub_dim
        for cb in cbs:
            if cb.k != k or cb.sub_dim != sub:
                raise ConfigError("codebooks disagree on sub_dim or k")
        rm = np.ascontiguousarray(np.stack([cb.centroids_rowmajor for cb in cbs]))
        tp = np.ascontiguousarray(np.stack([cb.centroids_transposed for cb in cbs]))
        bs = np.ascontiguousarray(np.stack([cb.biases for cb in cbs]))
        for a in (rm, tp, bs):
            a.flags.writeable = False
        return cls(rowmajor=rm, transposed=tp, biases=bs)

    @property
    def m(self) -> int:
        return self.rowmajor.shape[0]

    @property
    def k(self) -> int:
        return self.rowmajor.shape[1]

    @property
    def sub_dim(self) -> int:
        return self.rowmajor.shape[2]

    @property
    def d(self) -> int:
        return self.m * self.sub_dim

    def __getitem__(self, j: int) -> Codebook:
        return Codebook(
            subspace_index=j,
            centroids_rowmajor=self.rowmajor[j],
            centroids_transposed=self.transposed[j],
            biases=self.biases[j],
        )


def encode_dataset(
    dataset,
    codebooks,
    plan: ExecutionPlan | None = None,
    *,
    precomputed_bias: bool = True,
) -> PQCodes:
    """Encode every vector; the plan affects performance only, never codes.

    precomputed_bias=False makes the blocked kernel recompute the bias terms
    per vector; it exists for the ablation bench and is not the normal path.
    """
    plan = plan or ExecutionPlan()
    cbset = CodebookSet.from_codebooks(codebooks)
    X = dataset.data if hasattr(dataset, "data") else np.asarray(dataset, dtype=np.float32)
    if X.ndim != 2:
        raise ConfigError(f"dataset must be 2-D, got shape {X.shape}")
    X = np.ascontiguousarray(X, dtype=np.float32)
    n = X.shape[0]
    dtype = np.uint8 if cbset.k <= 256 else np.uint16
    if n == 0:
        return PQCodes(codes=np.empty((0, cbset.m), dtype=dtype), k=cbset.k)
    if X.shape[1] != cbset.d:
        raise ConfigError(
            f"dataset dimensionality {X.shape[1]} does not match codebooks' d={cbset.d}"
        )

    out = np.empty((n, cbset.m), dtype=dtype)
    w = plan.resolved_w()
    variant_id = _VARIANT_IDS[plan.variant]
    driver = _drive_chunk_major if plan.order == CHUNK_MAJOR else _drive_vector_major
    blocks = [
        (b0, min(b0 + plan.block_size, n)) for b0 in range(0, n, plan.block_size)
    ]

    def run(block_range):
        for b0, b1 in block_range:
            driver(
                X, b0, b1, cbset.rowmajor, cbset.transposed, cbset.biases,
                w, variant_id, precomputed_bias, out,
            )

    if plan.workers == 1 or len(blocks) == 1:
        run(blocks)
    else:
        shares = [blocks[i :: plan.workers] for i in range(plan.workers)]
        with ThreadPoolExecutor(max_workers=plan.workers) as pool:
            list(pool.map(run, shares))  # nogil kernels run in parallel

    return PQCodes(codes=out, k=cbset.k)


@contextmanager
def kernel_allocation_probe(record: dict):
    """Counts jit-kernel heap allocations made inside the ``with`` block.

    The drivers allocate only their O(w) lane scratch (a fixed number of
    arrays per call: kernels.VM_DRIVER_ALLOCS / CHUNK_DRIVER_ALLOCS), so the
    streaming contract -- peak transient state of O(workers * w) floats, no
    per-centroid score ever written to memory -- is assertable from these
    counters: ``alloc`` must equal calls * constant and match ``free``.
    """
    from numba.core.runtime import _nrt_python as _nrt
    from numba.core.runtime import rtsys

    was_enabled = _nrt.memsys_stats_enabled()
    if not was_enabled:
        _nrt.memsys_enable_stats()
    start = rtsys.get_allocation_stats()
    try:
        yield record
    finally:
        end = rtsys.get_allocation_stats()
        record["alloc"] = end.alloc - start.alloc
        record["free"] = end.free - start.free
        if not was_enabled:
            _nrt.memsys_disable_stats()


def estimate_working_set(params: PQParams, plan: ExecutionPlan) -> int:
    """Resident bytes during bulk encoding, independent of dataset size.

    One codebook in both layouts plus its biases (the cache-resident data),
    plus per-worker transient lane state (acc + score lanes).
    """
    resident = 2 * params.k * params.sub_dim * 4 + params.k * 4
    transient = plan.workers * 2 * plan.resolved_w() * 4
    return resident + transient
