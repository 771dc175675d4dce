"""Vector-file readers/writers, the synthetic generator, and the versioned
binary formats for codebooks and codes.

fvecs/ivecs/bvecs follow the texmex convention: each record is a 4-byte
little-endian count followed by that many little-endian float32 / int32 /
uint8 values. Readers reject rather than repair; errors carry byte offsets.

Codebook file ("PQCB", version 1), all little-endian:
    magic 4s | version u32 | d u32 | m u32 | sub_dim u32 | k u32
    | m * (k*sub_dim f32 centroids, row-major) | m * (k f32 biases)
    | crc32 u32 over everything after the magic

Codes file ("PQCD", version 1):
    magic 4s | version u32 | n u64 | m u32 | k u32 | width u32 (1 or 2)
    | n*m codes (u8 when k <= 256 else u16 le) | crc32 u32 as above

The transposed codebook layout is regenerated on load, never stored.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .core import Codebook, ConfigError, FormatError, PQCodes, VectorDataset

CODEBOOK_MAGIC = b"PQCB"
CODES_MAGIC = b"PQCD"
FORMAT_VERSION = 1


def _read_records(path, value_dtype, kind: str) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) == 0:
        raise FormatError(f"empty dataset: {path}", offset=0)
    itemsize = np.dtype(value_dtype).itemsize
    offset = 0
    first_d = None
    rows = []
    while offset < len(raw):
        if offset + 4 > len(raw):
            raise FormatError(f"truncated {kind} record header", offset=offset)
        (d,) = struct.unpack_from("<i", raw, offset)
        if d <= 0:
            raise FormatError(f"non-positive {kind} record length {d}", offset=offset)
        if first_d is None:
            first_d = d
        elif d != first_d:
            raise FormatError(
                f"inconsistent {kind} record length {d} (expected {first_d})",
                offset=offset,
            )
        body = offset + 4
        end = body + d * itemsize
        if end > len(raw):
            raise FormatError(f"truncated {kind} record body", offset=body)
        rows.append(np.frombuffer(raw, dtype=value_dtype, count=d, offset=body))
        offset = end
    return np.ascontiguousarray(np.vstack(rows))


def read_fvecs(path) -> VectorDataset:
    """Load little-endian float32 vectors; all records must share one d."""
    data = _read_records(path, np.dtype("<f4"), "fvecs")
    if not np.all(np.isfinite(data)):
        bad = int(np.flatnonzero(~np.isfinite(data.ravel()))[0])
        row, col = divmod(bad, data.shape[1])
        raise FormatError(
            "non-finite value in fvecs payload",
            offset=row * (4 + data.shape[1] * 4) + 4 + col * 4,
        )
    return VectorDataset(data=data.astype(np.float32), source=str(path))


def write_fvecs(path, dataset) -> None:
    data = dataset.data if hasattr(dataset, "data") else np.asarray(dataset, dtype=np.float32)
    n, d = data.shape
    buf = np.empty((n, d + 1), dtype="<f4")
    buf[:, :1].view("<i4")[:] = d
    buf[:, 1:] = data
    Path(path).write_bytes(buf.tobytes() if n else b"")


def read_ivecs(path) -> np.ndarray:
    """Integer matrix (ground-truth neighbor lists); negative entries reject."""
    data = _read_records(path, np.dtype("<i4"), "ivecs")
    if np.any(data < 0):
        bad = int(np.flatnonzero(data.ravel() < 0)[0])
        row, col = divmod(bad, data.shape[1])
        raise FormatError(
            "negative index in ivecs payload",
            offset=row * (4 + data.shape[1] * 4) + 4 + col * 4,
        )
    return data


def write_ivecs(path, matrix) -> None:
    mat = np.asarray(matrix, dtype="<i4")
    n, d = mat.shape
    buf = np.empty((n, d + 1), dtype="<i4")
    buf[:, 0] = d
    buf[:, 1:] = mat
    Path(path).write_bytes(buf.tobytes() if n else b"")


def read_bvecs(path) -> VectorDataset:
    """u8 payload records, widened to float32 on load."""
    data = _read_records(path, np.dtype("u1"), "bvecs")
    return VectorDataset(data=data.astype(np.float32), source=str(path))


def write_bvecs(path, matrix) -> None:
    mat = np.asarray(matrix, dtype=np.uint8)
    n, d = mat.shape
    rec = np.zeros(n, dtype=np.dtype([("d", "<i4"), ("v", "u1", (d,))]))
    rec["d"] = d
    rec["v"] = mat
    Path(path).write_bytes(rec.tobytes() if n else b"")


def synth_dataset(
    n: int, d: int, clusters: int, seed: int, noise: float = 0.05
) -> VectorDataset:
    """Seeded Gaussian-mixture dataset: cluster means uniform in [-1, 1]^d,
    isotropic per-cluster noise. Deterministic for a fixed seed."""
    if n < 1 or d < 1 or clusters < 1:
        raise ConfigError("n, d, clusters must all be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    means = rng.uniform(-1.0, 1.0, size=(clusters, d)).astype(np.float32)
    labels = rng.integers(0, clusters, size=n)
    data = means[labels] + rng.normal(0.0, noise, size=(n, d)).astype(np.float32)
    return VectorDataset(
        data=np.ascontiguousarray(data, dtype=np.float32),
        source=f"synth(n={n},d={d},clusters={clusters},seed={seed},noise={noise})",
    )


def _with_crc(payload: bytes) -> bytes:
    return payload + struct.pack("<I", zlib.crc32(payload))


def _split_crc(raw: bytes, path) -> bytes:
    if len(raw) < 4:
        raise FormatError(f"file too short for checksum: {path}", offset=len(raw))
    payload, (stored,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(payload) != stored:
        raise FormatError(f"checksum mismatch in {path}", offset=len(payload))
    return payload


def write_codebooks(path, codebooks) -> None:
    cbs = list(codebooks)
    if not cbs:
        raise ConfigError("no codebooks to write")
    k, sub = cbs[0].k, cbs[0].sub_dim
    for cb in cbs:
        if cb.k != k or cb.sub_dim != sub:
            raise ConfigError("codebooks disagree on sub_dim or k")
    m = len(cbs)
    parts = [struct.pack("<IIIII", FORMAT_VERSION, m * sub, m, sub, k)]
    for cb in cbs:
        parts.append(cb.centroids_rowmajor.astype("<f4").tobytes())
    for cb in cbs:
        parts.append(cb.biases.astype("<f4").tobytes())
    with open(path, "wb") as f:
        f.write(CODEBOOK_MAGIC + _with_crc(b"".join(parts)))


def read_codebooks(path) -> list[Codebook]:
    raw = Path(path).read_bytes()
    if raw[:4] != CODEBOOK_MAGIC:
        raise FormatError(f"bad codebook magic in {path}", offset=0)
    payload = _split_crc(raw[4:], path)
    if len(payload) < 20:
        raise FormatError(f"truncated codebook header in {path}", offset=4)
    version, d, m, sub, k = struct.unpack_from("<IIIII", payload, 0)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported codebook version {version}", offset=4)
    if d != m * sub:
        raise FormatError(f"inconsistent dims d={d}, m={m}, sub_dim={sub}", offset=8)
    need = 20 + m * k * sub * 4 + m * k * 4
    if len(payload) != need:
        raise FormatError(
            f"codebook payload size {len(payload)} != expected {need}", offset=20
        )
    cbs = []
    off = 20
    cents = []
    for _ in range(m):
        arr = np.frombuffer(payload, dtype="<f4", count=k * sub, offset=off)
        cents.append(arr.reshape(k, sub))
        off += k * sub * 4
    for j in range(m):
        biases = np.frombuffer(payload, dtype="<f4", count=k, offset=off).copy()
        off += k * 4
        rm = np.ascontiguousarray(cents[j], dtype=np.float32)
        cb = Codebook.from_rowmajor(j, rm)
        # stored biases are authoritative (bitwise round-trip)
        biases.flags.writeable = False
        cbs.append(
            Codebook(
                subspace_index=j,
                centroids_rowmajor=cb.centroids_rowmajor,
                centroids_transposed=cb.centroids_transposed,
                biases=biases,
            )
        )
    return cbs


def write_codes(path, codes: PQCodes) -> None:
    width = 1 if codes.k <= 256 else 2
    dtype = "<u1" if width == 1 else "<u2"
    header = struct.pack("<IQIII", FORMAT_VERSION, codes.n, codes.m, codes.k, width)
    with open(path, "wb") as f:
        f.write(CODES_MAGIC + _with_crc(header + codes.codes.astype(dtype).tobytes()))


def read_codes(path) -> PQCodes:
    raw = Path(path).read_bytes()
    if raw[:4] != CODES_MAGIC:
        raise FormatError(f"bad codes magic in {path}", offset=0)
    payload = _split_crc(raw[4:], path)
    if len(payload) < 24:
        raise FormatError(f"truncated codes header in {path}", offset=4)
    version, n, m, k, width = struct.unpack_from("<IQIII", payload, 0)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported codes version {version}", offset=4)
    if width not in (1, 2) or (width == 1) != (k <= 256):
        raise FormatError(f"invalid code width {width} for k={k}", offset=20)
    dtype = np.dtype("<u1") if width == 1 else np.dtype("<u2")
    need = 24 + n * m * width
    if len(payload) != need:
        raise FormatError(
            f"codes payload size {len(payload)} != expected {need}", offset=24
        )
    arr = np.frombuffer(payload, dtype=dtype, count=n * m, offset=24)
    codes = np.ascontiguousarray(arr.reshape(n, m)).astype(
        np.uint8 if width == 1 else np.uint16
    )
    return PQCodes(codes=codes, k=k)
