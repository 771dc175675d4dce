"""Quality checks: reconstruction error and flat ADC recall against an exact
brute-force oracle.

Recall here is exhaustive asymmetric-distance search over the encoded
database (no graph index), which isolates quantization quality: identical
codes imply identical reports, whatever kernel produced them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bulk import CodebookSet, ExecutionPlan, encode_dataset
from .core import ConfigError, CorruptionError, DataError, PQCodes
from .kernels import EncoderVariant

_GT_CHUNK = 4096


@dataclass(frozen=True)
class EvalReport:
    mse: float
    recall_at_n: float
    top_n: int
    n_queries: int
    n_db: int
    variant: str

    def __post_init__(self):
        if not 0.0 <= self.recall_at_n <= 1.0:
            raise DataError(f"recall out of range: {self.recall_at_n}")
        if self.mse < 0.0:
            raise DataError(f"negative mse: {self.mse}")


def reconstruct(codes_row, codebooks) -> np.ndarray:
    """Inverse of encoding: chunk j of the output is centroid codes[j]."""
    cbset = CodebookSet.from_codebooks(codebooks)
    row = np.asarray(codes_row)
    if row.ndim != 1 or row.shape[0] != cbset.m:
        raise ConfigError(f"codes row shape {row.shape} does not match m={cbset.m}")
    if row.size and (int(row.max()) >= cbset.k or int(row.min()) < 0):
        raise CorruptionError(f"code out of range for k={cbset.k}")
    out = np.empty(cbset.d, dtype=np.float32)
    sub = cbset.sub_dim
    for j in range(cbset.m):
        out[j * sub : (j + 1) * sub] = cbset.rowmajor[j, int(row[j])]
    return out


def reconstruct_all(codes: PQCodes, codebooks) -> np.ndarray:
    cbset = CodebookSet.from_codebooks(codebooks)
    if codes.m != cbset.m:
        raise ConfigError(f"codes m={codes.m} does not match codebooks m={cbset.m}")
    if codes.codes.size and int(codes.codes.max()) >= cbset.k:
        raise CorruptionError(f"code out of range for k={cbset.k}")
    sub = cbset.sub_dim
    out = np.empty((codes.n, cbset.d), dtype=np.float32)
    for j in range(cbset.m):
        out[:, j * sub : (j + 1) * sub] = cbset.rowmajor[j][codes.codes[:, j]]
    return out


def chunk_sqdist(q_sub: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Float32 squared distances from one query chunk to (k, sub_dim) centroids.

    Also used to recompute single entries bitwise in the table-sum sanity
    check, so both sides share one arithmetic path.
    """
    diff = centroids - q_sub[None, :]
    return np.einsum("kt,kt->k", diff, diff)


def adc_tables(query: np.ndarray, codebooks) -> np.ndarray:
    """Per-chunk lookup tables: tables[j][l] = ||q_j - c_l||^2, float32."""
    cbset = CodebookSet.from_codebooks(codebooks)
    q = np.ascontiguousarray(np.asarray(query, dtype=np.float32))
    if q.ndim != 1 or q.shape[0] != cbset.d:
        raise ConfigError(f"query length {q.shape} does not match d={cbset.d}")
    sub = cbset.sub_dim
    tables = np.empty((cbset.m, cbset.k), dtype=np.float32)
    for j in range(cbset.m):
        tables[j] = chunk_sqdist(q[j * sub : (j + 1) * sub], cbset.rowmajor[j])
    return tables


def adc_scores(tables: np.ndarray, codes: PQCodes) -> np.ndarray:
    """Approximate squared distances, accumulated float32 in chunk order."""
    scores = np.zeros(codes.n, dtype=np.float32)
    for j in range(codes.m):
        scores += tables[j][codes.codes[:, j]]
    return scores


def _topn_by_score(scores: np.ndarray, topn: int):
    topn = min(topn, scores.shape[0])
    order = np.lexsort((np.arange(scores.shape[0]), scores))  # ties -> index
    idx = order[:topn]
    return idx, scores[idx]


def adc_search(query, codes: PQCodes, codebooks, topn: int):
    """Top-N database entries by table-summed asymmetric distance.

    Returns (indices, approx_distances); topn is clamped to the database
    size, ties break toward the smaller index.
    """
    tables = adc_tables(query, codebooks)
    scores = adc_scores(tables, codes)
    return _topn_by_score(scores, topn)


def exact_topn(queries: np.ndarray, db: np.ndarray, topn: int) -> np.ndarray:
    """Ground-truth neighbor lists: float32 inputs, float64 accumulation,
    ties broken by index."""
    Q = np.asarray(queries, dtype=np.float32)
    X = np.asarray(db, dtype=np.float32)
    n = X.shape[0]
    topn = min(topn, n)
    x_norms = np.einsum("it,it->i", X, X, dtype=np.float64)
    out = np.empty((Q.shape[0], topn), dtype=np.int64)
    for lo in range(0, Q.shape[0], _GT_CHUNK):
        hi = min(lo + _GT_CHUNK, Q.shape[0])
        block = Q[lo:hi].astype(np.float64)
        d = x_norms[None, :] - 2.0 * (block @ X.astype(np.float64).T)
        for r in range(hi - lo):
            order = np.lexsort((np.arange(n), d[r]))
            out[lo + r] = order[:topn]
    return out


def mse_of(dataset, codes: PQCodes, codebooks) -> float:
    """Mean over vectors of ||v - reconstruct(encode(v))||^2."""
    X = dataset.data if hasattr(dataset, "data") else np.asarray(dataset, dtype=np.float32)
    recon = reconstruct_all(codes, codebooks)
    diff = (X - recon).astype(np.float64)
    return float(np.einsum("it,it->i", diff, diff).sum() / max(X.shape[0], 1))


def evaluate(
    dataset,
    queries,
    codebooks,
    variant: EncoderVariant = EncoderVariant.BLOCKED,
    topn: int = 10,
    *,
    codes: PQCodes | None = None,
    groundtruth: np.ndarray | None = None,
    workers: int = 1,
) -> EvalReport:
    """Encode (or reuse codes), run flat ADC search, report MSE and recall."""
    X = dataset.data if hasattr(dataset, "data") else np.asarray(dataset, dtype=np.float32)
    Q = queries.data if hasattr(queries, "data") else np.asarray(queries, dtype=np.float32)
    if Q.shape[0] == 0:
        raise DataError("empty query set")
    if codes is None:
        plan = ExecutionPlan(variant=variant, workers=workers)
        codes = encode_dataset(X, codebooks, plan)
    variant_label = variant.value
    if groundtruth is None:
        groundtruth = exact_topn(Q, X, topn)
    gt = np.asarray(groundtruth)[:, :topn]

    hits = 0
    for qi in range(Q.shape[0]):
        idx, _ = adc_search(Q[qi], codes, codebooks, topn)
        hits += len(set(int(v) for v in idx) & set(int(v) for v in gt[qi]))
    recall = hits / float(gt.shape[0] * gt.shape[1])
    return EvalReport(
        mse=mse_of(X, codes, codebooks),
        recall_at_n=recall,
        top_n=topn,
        n_queries=Q.shape[0],
        n_db=X.shape[0],
        variant=variant_label,
    )
