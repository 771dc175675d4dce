"""Per-subspace codebook training: Lloyd k-means with k-means++ seeding.

Mean accumulation runs in float64; the stored codebook is float32. The final
assignment pass re-runs the float32 reference-expansion encoder against the
cast centroids, so the published assignments are exactly what the encoders
will reproduce.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Codebook, DataError, TrainingError
from .kernels import _ref_one

_ASSIGN_CHUNK = 8192  # rows per distance-matrix slab during assignment


@dataclass(frozen=True)
class TrainConfig:
    k: int = 256
    max_iters: int = 25
    tol: float = 1e-4
    seed: int = 0
    # None -> 256 * k points per subspace; <= 0 -> unlimited
    sample_cap: int | None = None

    def __post_init__(self):
        if self.k < 1:
            raise TrainingError(f"k must be >= 1, got {self.k}")
        if self.max_iters < 1:
            raise TrainingError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.tol < 0:
            raise TrainingError(f"tol must be >= 0, got {self.tol}")

    def resolved_cap(self) -> int | None:
        if self.sample_cap is None:
            return 256 * self.k
        if self.sample_cap <= 0:
            return None
        return self.sample_cap


@dataclass
class KMeansResult:
    """Final centroids plus the recorded per-iteration objective trace."""

    centroids: np.ndarray            # (k, sub_dim) float32
    objectives: list[float] = field(default_factory=list)
    assignments: np.ndarray | None = None
    n_train: int = 0
    iterations: int = 0


def _assign(points64: np.ndarray, centroids64: np.ndarray):
    """Nearest-centroid assignment and objective, float64 brute force."""
    n = points64.shape[0]
    c_norms = np.einsum("kt,kt->k", centroids64, centroids64)
    assign = np.empty(n, dtype=np.int64)
    sq = np.zeros(n, dtype=np.float64)
    for lo in range(0, n, _ASSIGN_CHUNK):
        hi = min(lo + _ASSIGN_CHUNK, n)
        block = points64[lo:hi]
        d = c_norms[None, :] - 2.0 * (block @ centroids64.T)
        assign[lo:hi] = np.argmin(d, axis=1)
        sq[lo:hi] = d[np.arange(hi - lo), assign[lo:hi]] + np.einsum(
            "it,it->i", block, block
        )
    # tiny negative residue from the expansion is numerical noise
    np.maximum(sq, 0.0, out=sq)
    return assign, float(sq.sum())


def _kmeanspp_init(points64: np.ndarray, k: int, rng: np.random.Generator):
    n = points64.shape[0]
    centroids = np.empty((k, points64.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = points64[first]
    d2 = np.einsum("it,it->i", points64 - centroids[0], points64 - centroids[0])
    for c in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # all remaining mass on already-chosen points; spread uniformly
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[c] = points64[idx]
        diff = points64 - centroids[c]
        np.minimum(d2, np.einsum("it,it->i", diff, diff), out=d2)
    return centroids


def run_lloyd(points: np.ndarray, cfg: TrainConfig, rng: np.random.Generator) -> KMeansResult:
    """k-means++ seeding plus Lloyd iterations over one subspace's points."""
    pts64 = np.asarray(points, dtype=np.float64)
    n = pts64.shape[0]
    k = cfg.k
    if n < k:
        raise TrainingError(f"need at least k={k} training points, got {n}")
    if k > 1 and np.unique(pts64, axis=0).shape[0] < k:
        raise TrainingError(
            f"degenerate data: fewer than k={k} distinct training points"
        )
    return lloyd_iterate(pts64, _kmeanspp_init(pts64, k, rng), cfg)


def lloyd_iterate(pts64: np.ndarray, centroids: np.ndarray, cfg: TrainConfig) -> KMeansResult:
    """Lloyd loop from given float64 initial centroids (assumed valid)."""
    n, sub = pts64.shape
    k = centroids.shape[0]
    centroids = centroids.copy()
    objectives: list[float] = []
    prev = np.inf
    iters = 0
    for _ in range(cfg.max_iters):
        iters += 1
        assign, obj = _assign(pts64, centroids)
        objectives.append(obj)
        # mean update in float64 with fixed-order (bincount) reductions
        counts = np.bincount(assign, minlength=k).astype(np.float64)
        sums = np.zeros((k, sub), dtype=np.float64)
        np.add.at(sums, assign, pts64)
        nonempty = counts > 0
        centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        # repair: teleport each empty centroid onto the farthest-residual
        # point (after the update, so the recorded objective stays monotone)
        empties = np.flatnonzero(~nonempty)
        if empties.size:
            diff = pts64 - centroids[assign]
            residual = np.einsum("it,it->i", diff, diff)
            for e in empties:  # argmax ties -> smallest point index
                cand = int(np.argmax(residual))
                centroids[e] = pts64[cand]
                residual[cand] = -1.0
        if obj == 0.0:
            break
        if prev < np.inf and (prev - obj) <= cfg.tol * max(prev, 1e-300):
            break
        prev = obj

    cast = np.ascontiguousarray(centroids.astype(np.float32))
    # final pass with the float32 reference encoder on the cast centroids:
    # published assignments match what the encoders will compute
    assign = np.empty(n, dtype=np.int64)
    pts32 = np.ascontiguousarray(pts64.astype(np.float32))
    for i in range(n):
        code, _ = _ref_one(pts32, i, 0, cast)
        assign[i] = code
    diff = pts64 - cast.astype(np.float64)[assign]
    objectives.append(float(np.einsum("it,it->i", diff, diff).sum()))
    return KMeansResult(
        centroids=cast,
        objectives=objectives,
        assignments=assign,
        n_train=n,
        iterations=iters,
    )


def _subspace_rngs(seed: int, m: int) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(m)]


def _sample(points: np.ndarray, cap: int | None, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    if cap is None or n <= cap:
        return points
    idx = rng.choice(n, size=cap, replace=False)
    idx.sort()
    return points[idx]


def train_codebook(
    subvectors: np.ndarray, cfg: TrainConfig, subspace_index: int = 0
) -> Codebook:
    """Train one subspace codebook; see train_all_codebooks for the batch path."""
    cb, _ = train_codebook_report(subvectors, cfg, subspace_index)
    return cb


def train_codebook_report(
    subvectors: np.ndarray, cfg: TrainConfig, subspace_index: int = 0
) -> tuple[Codebook, KMeansResult]:
    pts = np.asarray(subvectors, dtype=np.float32)
    if pts.ndim != 2:
        raise TrainingError(f"training points must be 2-D, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise DataError(f"non-finite training data in subspace {subspace_index}")
    rng = _subspace_rngs(cfg.seed, subspace_index + 1)[subspace_index]
    sampled = _sample(pts, cfg.resolved_cap(), rng)
    result = run_lloyd(sampled, cfg, rng)
    return Codebook.from_rowmajor(subspace_index, result.centroids), result


def train_all_codebooks(dataset, params, cfg: TrainConfig) -> list[Codebook]:
    """One codebook per subspace, each trained only on its own subvectors."""
    codebooks, _ = train_all_codebooks_report(dataset, params, cfg)
    return codebooks


def train_all_codebooks_report(
    dataset, params, cfg: TrainConfig
) -> tuple[list[Codebook], list[KMeansResult]]:
    data = dataset.data if hasattr(dataset, "data") else np.asarray(dataset, dtype=np.float32)
    if data.shape[1] != params.d:
        raise TrainingError(
            f"dataset dimensionality {data.shape[1]} does not match d={params.d}"
        )
    rngs = _subspace_rngs(cfg.seed, params.m)
    sub = params.sub_dim
    codebooks: list[Codebook] = []
    reports: list[KMeansResult] = []
    for j in range(params.m):
        pts = np.ascontiguousarray(data[:, j * sub : (j + 1) * sub])
        try:
            sampled = _sample(pts, cfg.resolved_cap(), rngs[j])
            result = run_lloyd(sampled, cfg, rngs[j])
        except (TrainingError, DataError) as exc:
            raise type(exc)(f"subspace {j}: {exc}") from None
        codebooks.append(Codebook.from_rowmajor(j, result.centroids))
        reports.append(result)
    return codebooks, reports
