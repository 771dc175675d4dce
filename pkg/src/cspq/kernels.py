"""Encoder kernels: reference full-distance, reformulated scalar, and
centroid-blocked lane-parallel, plus the jitted bulk drivers.

All kernels are compiled strict-IEEE (no fastmath, no FMA contraction) and
accumulate float32 in ascending dimension order per centroid. That fixes the
bit pattern of every score, which is what makes the equivalence contracts
testable: blocked scores are bitwise-identical across lane widths and equal
to the reformulated scalar scores, because lanes never reorder a centroid's
own accumulation chain.

Variant semantics:

* reference    -- argmin over ||v||^2 - 2<v,c> + ||c||^2 with every term
                  recomputed per centroid comparison (the deliberately
                  redundant baseline).
* reformulated -- argmin over bias - <v,c> with bias = 0.5*||c||^2 looked up
                  from the codebook; ||v||^2 is never evaluated.
* blocked      -- reformulated scoring evaluated w centroids at a time
                  against the dimension-major codebook layout, block argmin
                  feeding a running global minimum. Ties resolve to the
                  smaller global index in all variants.
"""

from __future__ import annotations

import enum

import numpy as np
from numba import njit

from .core import Codebook, ConfigError, Error, ScoreBlock

F32 = np.float32


class EncoderVariant(enum.Enum):
    REFERENCE = "reference"
    REFORMULATED = "reformulated"
    BLOCKED = "blocked"


# numba-side dispatch codes for the bulk drivers
_V_REF = 0
_V_REFORM = 1
_V_BLOCKED = 2

_VARIANT_IDS = {
    EncoderVariant.REFERENCE: _V_REF,
    EncoderVariant.REFORMULATED: _V_REFORM,
    EncoderVariant.BLOCKED: _V_BLOCKED,
}

# NRT allocations per driver call, counted by the streaming-contract test:
# 5 meminfo wrappers for the borrowed array arguments (X, CB, CT, B, out)
# plus the O(w) lane-scratch arrays the driver np.empty's once per call
# (3 for the vector-major driver, 14 for the chunk-major one).
VM_DRIVER_ALLOCS = 5 + 3
CHUNK_DRIVER_ALLOCS = 5 + 14


def native_lane_width() -> int:
    """Float32 lane count of the widest vector unit on this host.

    Parsed from /proc/cpuinfo; falls back to 8 when undetectable.
    """
    try:
        with open("/proc/cpuinfo") as f:
            flags = ""
            for line in f:
                if line.startswith("flags"):
                    flags = line
                    break
    except OSError:
        return 8
    if "avx512f" in flags:
        return 16
    if "avx2" in flags or "avx" in flags:
        return 8
    if flags:
        return 4
    return 8


@njit(nogil=True, cache=True)
def _ref_one(X, i, off, C):
    # Full expansion, all three terms recomputed per centroid (baseline).
    k, sub = C.shape
    two = F32(2.0)
    best = F32(np.inf)
    bidx = 0
    for l in range(k):
        vv = F32(0.0)
        cc = F32(0.0)
        dd = F32(0.0)
        for t in range(sub):
            v = X[i, off + t]
            c = C[l, t]
            vv += v * v
            cc += c * c
            dd += v * c
        dist = (vv + cc) - two * dd
        if dist < best:
            best = dist
            bidx = l
    return bidx, best


@njit(nogil=True, cache=True)
def _reform_one(X, i, off, C, b):
    # Transformed score: bias - <v,c>; the vector norm never appears.
    k, sub = C.shape
    best = F32(np.inf)
    bidx = 0
    for l in range(k):
        dd = F32(0.0)
        for t in range(sub):
            dd += X[i, off + t] * C[l, t]
        s = b[l] - dd
        if s < best:
            best = s
            bidx = l
    return bidx, best


@njit(nogil=True, cache=True)
def _blocked_one(X, i, off, CT, b, w, precomp, acc, bacc, scores):
    # Centroid blocks of width w against the dimension-major layout. Each
    # lane's accumulator runs over t in ascending order, so scores match the
    # scalar reformulated chain bit for bit regardless of w.
    sub, k = CT.shape
    half = F32(0.5)
    best = F32(np.inf)
    bidx = 0
    l0 = 0
    while l0 < k:
        wl = min(w, k - l0)
        for lane in range(wl):
            acc[lane] = F32(0.0)
        if precomp:
            for t in range(sub):
                vt = X[i, off + t]
                for lane in range(wl):
                    acc[lane] += vt * CT[t, l0 + lane]
            for lane in range(wl):
                scores[lane] = b[l0 + lane] - acc[lane]
        else:
            # bench-only mode: bias recomputed per vector from the same layout
            for lane in range(wl):
                bacc[lane] = F32(0.0)
            for t in range(sub):
                vt = X[i, off + t]
                for lane in range(wl):
                    c = CT[t, l0 + lane]
                    acc[lane] += vt * c
                    bacc[lane] += c * c
            for lane in range(wl):
                scores[lane] = half * bacc[lane] - acc[lane]
        blk_min = F32(np.inf)
        blk_arg = 0
        for lane in range(wl):
            if scores[lane] < blk_min:
                blk_min = scores[lane]
                blk_arg = lane
        if blk_min < best or (blk_min == best and l0 + blk_arg < bidx):
            best = blk_min
            bidx = l0 + blk_arg
        l0 += w
    return bidx, best


@njit(nogil=True, cache=True)
def _blocked_quad(
    X, i, off, CT, b, w, precomp,
    acc0, acc1, acc2, acc3, bacc0, bacc1, bacc2, bacc3,
    scores, best4, bidx4, out, ocol,
):
    # Four vectors share each codebook block pass. Per-(vector, lane) chains
    # are unchanged, so codes are bitwise-identical to _blocked_one; the
    # grouping exists purely to hide FP-add latency inside the reuse window.
    sub, k = CT.shape
    half = F32(0.5)
    for q in range(4):
        best4[q] = F32(np.inf)
        bidx4[q] = 0
    l0 = 0
    while l0 < k:
        wl = min(w, k - l0)
        for lane in range(wl):
            acc0[lane] = F32(0.0)
            acc1[lane] = F32(0.0)
            acc2[lane] = F32(0.0)
            acc3[lane] = F32(0.0)
        if precomp:
            for t in range(sub):
                v0 = X[i, off + t]
                v1 = X[i + 1, off + t]
                v2 = X[i + 2, off + t]
                v3 = X[i + 3, off + t]
                for lane in range(wl):
                    c = CT[t, l0 + lane]
                    acc0[lane] += v0 * c
                    acc1[lane] += v1 * c
                    acc2[lane] += v2 * c
                    acc3[lane] += v3 * c
        else:
            for lane in range(wl):
                bacc0[lane] = F32(0.0)
            for t in range(sub):
                v0 = X[i, off + t]
                v1 = X[i + 1, off + t]
                v2 = X[i + 2, off + t]
                v3 = X[i + 3, off + t]
                for lane in range(wl):
                    c = CT[t, l0 + lane]
                    acc0[lane] += v0 * c
                    acc1[lane] += v1 * c
                    acc2[lane] += v2 * c
                    acc3[lane] += v3 * c
                    bacc0[lane] += c * c
        for q in range(4):
            if q == 0:
                a = acc0
            elif q == 1:
                a = acc1
            elif q == 2:
                a = acc2
            else:
                a = acc3
            blk_min = F32(np.inf)
            blk_arg = 0
            for lane in range(wl):
                if precomp:
                    s = b[l0 + lane] - a[lane]
                else:
                    s = half * bacc0[lane] - a[lane]
                scores[lane] = s
                if s < blk_min:
                    blk_min = s
                    blk_arg = lane
            if blk_min < best4[q] or (blk_min == best4[q] and l0 + blk_arg < bidx4[q]):
                best4[q] = blk_min
                bidx4[q] = l0 + blk_arg
        l0 += w
    for q in range(4):
        out[i + q, ocol] = bidx4[q]


@njit(nogil=True, cache=True)
def _drive_vector_major(X, b0, b1, CB, CT, B, w, variant, precomp, out):
    # One vector fully (all chunks) before the next; the comparison baseline
    # order. Scratch is allocated once per call: VM_DRIVER_ALLOCS arrays.
    m = CB.shape[0]
    sub = CB.shape[2]
    acc = np.empty(w, dtype=np.float32)
    bacc = np.empty(w, dtype=np.float32)
    scores = np.empty(w, dtype=np.float32)
    for i in range(b0, b1):
        for j in range(m):
            off = j * sub
            if variant == 0:
                code, _ = _ref_one(X, i, off, CB[j])
            elif variant == 1:
                code, _ = _reform_one(X, i, off, CB[j], B[j])
            else:
                code, _ = _blocked_one(
                    X, i, off, CT[j], B[j], w, precomp, acc, bacc, scores
                )
            out[i, j] = code


@njit(nogil=True, cache=True)
def _drive_chunk_major(X, b0, b1, CB, CT, B, w, variant, precomp, out):
    # Chunk outer, vectors inner: one codebook stays hot across the whole
    # block before the next chunk is touched. CHUNK_DRIVER_ALLOCS arrays of
    # O(w) scratch per call; nothing per-centroid is ever written to memory.
    m = CB.shape[0]
    sub = CB.shape[2]
    acc = np.empty(w, dtype=np.float32)
    bacc = np.empty(w, dtype=np.float32)
    scores = np.empty(w, dtype=np.float32)
    acc0 = np.empty(w, dtype=np.float32)
    acc1 = np.empty(w, dtype=np.float32)
    acc2 = np.empty(w, dtype=np.float32)
    acc3 = np.empty(w, dtype=np.float32)
    bacc0 = np.empty(w, dtype=np.float32)
    bacc1 = np.empty(w, dtype=np.float32)
    bacc2 = np.empty(w, dtype=np.float32)
    bacc3 = np.empty(w, dtype=np.float32)
    qscores = np.empty(w, dtype=np.float32)
    best4 = np.empty(4, dtype=np.float32)
    bidx4 = np.empty(4, dtype=np.int64)
    for j in range(m):
        off = j * sub
        if variant == 2:
            i = b0
            while i + 4 <= b1:
                _blocked_quad(
                    X, i, off, CT[j], B[j], w, precomp,
                    acc0, acc1, acc2, acc3, bacc0, bacc1, bacc2, bacc3,
                    qscores, best4, bidx4, out, j,
                )
                i += 4
            while i < b1:
                code, _ = _blocked_one(
                    X, i, off, CT[j], B[j], w, precomp, acc, bacc, scores
                )
                out[i, j] = code
                i += 1
        elif variant == 0:
            for i in range(b0, b1):
                code, _ = _ref_one(X, i, off, CB[j])
                out[i, j] = code
        else:
            for i in range(b0, b1):
                code, _ = _reform_one(X, i, off, CB[j], B[j])
                out[i, j] = code


@njit(nogil=True, cache=True)
def _dist_and_score_batch(V, C, B, outD, outS, outV):
    # Per-pair reference distance, transformed score, and vector norm with
    # the deployed kernels' exact arithmetic; used by the identity tests.
    n, sub = V.shape
    two = F32(2.0)
    for i in range(n):
        vv = F32(0.0)
        cc = F32(0.0)
        dd = F32(0.0)
        for t in range(sub):
            v = V[i, t]
            c = C[i, t]
            vv += v * v
            cc += c * c
            dd += v * c
        outD[i] = (vv + cc) - two * dd
        outS[i] = B[i] - dd
        outV[i] = vv


def _check_subvector(v, cb: Codebook) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(v, dtype=np.float32))
    if arr.ndim != 1 or arr.shape[0] != cb.sub_dim:
        raise ConfigError(
            f"subvector length {arr.shape} does not match sub_dim={cb.sub_dim}"
        )
    return arr


def encode_ref(v, cb: Codebook) -> int:
    """Nearest centroid by the full expanded squared distance (baseline)."""
    code, _ = encode_ref_with_score(v, cb)
    return code


def encode_ref_with_score(v, cb: Codebook) -> tuple[int, np.float32]:
    arr = _check_subvector(v, cb)
    code, best = _ref_one(arr.reshape(1, -1), 0, 0, cb.centroids_rowmajor)
    return int(code), np.float32(best)


def encode_reform(v, cb: Codebook) -> int:
    """Nearest centroid by the transformed score bias - <v,c>."""
    code, _ = encode_reform_with_score(v, cb)
    return code


def encode_reform_with_score(v, cb: Codebook) -> tuple[int, np.float32]:
    arr = _check_subvector(v, cb)
    if cb.biases is None or cb.biases.shape[0] != cb.k:
        raise ConfigError("codebook biases not populated")
    code, best = _reform_one(
        arr.reshape(1, -1), 0, 0, cb.centroids_rowmajor, cb.biases
    )
    return int(code), np.float32(best)


def encode_blocked(v, cb: Codebook, w: int | None = None) -> int:
    """Nearest centroid via the lane-blocked kernel (w centroids at a time)."""
    code, _ = encode_blocked_with_score(v, cb, w)
    return code


def encode_blocked_with_score(
    v, cb: Codebook, w: int | None = None
) -> tuple[int, np.float32]:
    arr = _check_subvector(v, cb)
    if cb.centroids_transposed is None or cb.centroids_transposed.shape != (
        cb.sub_dim,
        cb.k,
    ):
        raise ConfigError("codebook transposed layout not populated")
    if w is None:
        w = native_lane_width()
    if w < 1:
        raise ConfigError(f"w must be >= 1, got {w}")
    sb = ScoreBlock(w)
    bacc = np.empty(w, dtype=np.float32)
    code, best = _blocked_one(
        arr.reshape(1, -1), 0, 0,
        cb.centroids_transposed, cb.biases, w, True, sb.acc, bacc, sb.scores,
    )
    sb.best_score = np.float32(best)
    sb.best_idx = int(code)
    return sb.best_idx, sb.best_score


def encode_vector(
    v, codebooks, variant: EncoderVariant = EncoderVariant.BLOCKED,
    w: int | None = None,
) -> np.ndarray:
    """Encode a full vector: chunk j goes through codebook j.

    Returns the m centroid indices as uint8 (k <= 256) or uint16.
    """
    cbs = list(codebooks)
    if not cbs:
        raise ConfigError("no codebooks given")
    sub = cbs[0].sub_dim
    k = cbs[0].k
    for cb in cbs:
        if cb.sub_dim != sub or cb.k != k:
            raise ConfigError("codebooks disagree on sub_dim or k")
    arr = np.ascontiguousarray(np.asarray(v, dtype=np.float32))
    if arr.ndim != 1 or arr.shape[0] != sub * len(cbs):
        raise ConfigError(
            f"vector length {arr.shape} does not match d={sub * len(cbs)}"
        )
    dtype = np.uint8 if k <= 256 else np.uint16
    out = np.empty(len(cbs), dtype=dtype)
    for j, cb in enumerate(cbs):
        chunk = arr[j * sub : (j + 1) * sub]
        try:
            if variant is EncoderVariant.REFERENCE:
                out[j] = encode_ref(chunk, cb)
            elif variant is EncoderVariant.REFORMULATED:
                out[j] = encode_reform(chunk, cb)
            else:
                out[j] = encode_blocked(chunk, cb, w)
        except Error as exc:
            raise type(exc)(f"chunk {j}: {exc}") from None
    return out
