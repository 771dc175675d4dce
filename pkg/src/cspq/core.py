"""Core PQ data model: parameters, codebooks, codes, and layout transforms.

Everything here is immutable after construction (arrays are frozen with
``writeable=False``) so instances can be shared freely across worker threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class Error(Exception):
    """Base class for all package errors."""


class ConfigError(Error):
    """Invalid parameters or mismatched shapes/layouts."""


class DataError(Error):
    """Input data violates a precondition (non-finite values, bad range)."""


class FormatError(Error):
    """Malformed file or ragged in-memory input.

    ``offset`` carries the byte offset of the problem when reading files.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TrainingError(Error):
    """Codebook training cannot proceed (too few points, degenerate data)."""


class CorruptionError(Error):
    """Stored codes or payloads fail validation."""


# A subvector is a plain 1-D float32 array of length sub_dim.
Subvector = np.ndarray


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class PQParams:
    """Quantization configuration.

    d must be an exact multiple of m; k up to 2^16 (256 by default so a code
    fits one byte); w is the centroid-block lane width of the blocked kernel
    and need not divide k (the remainder block is handled explicitly).
    """

    d: int
    m: int
    k: int = 256
    w: int = field(default=8)
    block_size: int = 4096

    def __post_init__(self):
        if self.d <= 0 or self.m <= 0:
            raise ConfigError(f"d and m must be positive, got d={self.d}, m={self.m}")
        if self.d % self.m != 0:
            raise ConfigError(f"m does not divide d (d={self.d}, m={self.m})")
        if not 1 <= self.k <= 2**16:
            raise ConfigError(f"k must be in [1, 65536], got {self.k}")
        if self.w < 1:
            raise ConfigError(f"w must be >= 1, got {self.w}")
        if self.block_size < 1:
            raise ConfigError(f"block_size must be >= 1, got {self.block_size}")

    @property
    def sub_dim(self) -> int:
        return self.d // self.m


@dataclass(frozen=True)
class Codebook:
    """Per-subspace centroid set in both layouts, with precomputed biases.

    centroids_rowmajor is (k, sub_dim): row l is centroid l.
    centroids_transposed is (sub_dim, k): row t holds coordinate t of all
    centroids contiguously, the layout the blocked kernel loads from.
    biases[l] = 0.5 * ||centroid l||^2.
    """

    subspace_index: int
    centroids_rowmajor: np.ndarray
    centroids_transposed: np.ndarray
    biases: np.ndarray

    @property
    def k(self) -> int:
        return self.centroids_rowmajor.shape[0]

    @property
    def sub_dim(self) -> int:
        return self.centroids_rowmajor.shape[1]

    @classmethod
    def from_rowmajor(cls, subspace_index: int, rowmajor) -> "Codebook":
        """Build a codebook from a (k, sub_dim) centroid array."""
        rm = np.ascontiguousarray(np.asarray(rowmajor, dtype=np.float32))
        if rm.ndim != 2:
            raise ConfigError(f"centroids must be 2-D, got shape {rm.shape}")
        if not np.all(np.isfinite(rm)):
            raise DataError(f"non-finite centroid values in subspace {subspace_index}")
        return cls(
            subspace_index=subspace_index,
            centroids_rowmajor=_freeze(rm),
            centroids_transposed=_freeze(transpose_codebook(rm)),
            biases=_freeze(compute_biases(rm)),
        )


@dataclass(frozen=True)
class PQCodes:
    """Encoded dataset: one centroid index per (vector, chunk).

    codes is (n, m) unsigned integers; k records the codebook size the codes
    index into (needed for validation and for picking the stored byte width).
    """

    codes: np.ndarray
    k: int

    def __post_init__(self):
        if self.codes.ndim != 2:
            raise ConfigError(f"codes must be 2-D, got shape {self.codes.shape}")
        if self.codes.dtype not in (np.uint8, np.uint16):
            raise ConfigError(f"codes dtype must be uint8/uint16, got {self.codes.dtype}")
        if self.codes.size and int(self.codes.max()) >= self.k:
            raise CorruptionError(
                f"code {int(self.codes.max())} out of range for k={self.k}"
            )
        _freeze(self.codes)

    @property
    def n(self) -> int:
        return self.codes.shape[0]

    @property
    def m(self) -> int:
        return self.codes.shape[1]


@dataclass(frozen=True)
class VectorDataset:
    """Dense float32 vector batch, row-major, with a provenance label."""

    data: np.ndarray
    source: str = ""

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ConfigError(f"dataset must be 2-D, got shape {self.data.shape}")
        if self.data.dtype != np.float32:
            raise ConfigError(f"dataset dtype must be float32, got {self.data.dtype}")
        if self.data.size and not np.all(np.isfinite(self.data)):
            raise DataError("dataset contains non-finite values")
        _freeze(self.data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


class ScoreBlock:
    """Transient per-kernel state for one centroid block.

    Holds w inner-product accumulators, the w transformed scores of the
    current block, and the running global (best_score, best_idx). Scores are
    never written anywhere long-lived; instances are per-invocation scratch.
    """

    __slots__ = ("acc", "scores", "best_score", "best_idx")

    def __init__(self, w: int):
        self.acc = np.zeros(w, dtype=np.float32)
        self.scores = np.zeros(w, dtype=np.float32)
        self.best_score = np.float32(np.inf)
        self.best_idx = 0

    @property
    def w(self) -> int:
        return self.acc.shape[0]


def partition_vector(v, params: PQParams) -> list[np.ndarray]:
    """Split a d-vector into m contiguous subvectors of sub_dim values each."""
    arr = np.asarray(v, dtype=np.float32)
    if arr.ndim != 1 or arr.shape[0] != params.d:
        raise ConfigError(
            f"vector length {arr.shape} does not match d={params.d} "
            f"(m does not divide d?)" if arr.ndim == 1 else "vector must be 1-D"
        )
    if not np.all(np.isfinite(arr)):
        raise DataError("vector contains non-finite values")
    s = params.sub_dim
    return [arr[j * s : (j + 1) * s] for j in range(params.m)]


def transpose_codebook(rowmajor) -> np.ndarray:
    """Dimension-major copy of a (k, sub_dim) centroid array.

    output[t][l] = input[l][t]; applying it twice is the identity.
    """
    try:
        arr = np.asarray(rowmajor, dtype=np.float32)
    except (ValueError, TypeError) as exc:
        raise FormatError(f"ragged codebook input: {exc}") from None
    if arr.ndim != 2:
        raise FormatError(f"codebook must be rectangular 2-D, got shape {arr.shape}")
    return np.ascontiguousarray(arr.T)


def compute_biases(rowmajor) -> np.ndarray:
    """Per-centroid bias terms 0.5 * ||c||^2, accumulated in float64.

    Precomputed once per codebook; the blocked kernel subtracts the
    accumulated inner product from these to form transformed scores.
    """
    arr = np.asarray(rowmajor, dtype=np.float32)
    if arr.ndim != 2:
        raise FormatError(f"codebook must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError("non-finite centroid values")
    return (0.5 * np.einsum("kt,kt->k", arr, arr, dtype=np.float64)).astype(np.float32)
