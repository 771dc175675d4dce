import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cspq.core import (
    Codebook,
    ConfigError,
    CorruptionError,
    DataError,
    FormatError,
    PQCodes,
    PQParams,
    ScoreBlock,
    VectorDataset,
    compute_biases,
    partition_vector,
    transpose_codebook,
)


class TestPQParams:
    def test_valid(self):
        p = PQParams(d=32, m=2, k=256, w=8, block_size=4096)
        assert p.sub_dim == 16

    def test_m_does_not_divide_d(self):
        with pytest.raises(ConfigError, match="m does not divide d"):
            PQParams(d=5, m=2)

    @pytest.mark.parametrize("kw", [dict(k=0), dict(k=2**16 + 1), dict(w=0), dict(block_size=0)])
    def test_invalid_fields(self, kw):
        with pytest.raises(ConfigError):
            PQParams(d=8, m=2, **kw)


class TestPartition:
    def test_basic(self):
        p = PQParams(d=4, m=2)
        parts = partition_vector([1, 2, 3, 4], p)
        assert [list(x) for x in parts] == [[1, 2], [3, 4]]

    def test_unit_subvectors(self):
        p = PQParams(d=3, m=3)
        parts = partition_vector([5, 6, 7], p)
        assert [list(x) for x in parts] == [[5], [6], [7]]

    def test_length_mismatch(self):
        p = PQParams(d=4, m=2)
        with pytest.raises(ConfigError):
            partition_vector([1, 2, 3], p)

    def test_non_finite(self):
        p = PQParams(d=2, m=1)
        with pytest.raises(DataError):
            partition_vector([1.0, np.nan], p)

    @given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**31 - 1))
    @settings(max_examples=50, deadline=None)
    def test_round_trip(self, m, sub, seed):
        # concatenating the partition reproduces the vector bitwise
        d = m * sub
        v = np.random.default_rng(seed).standard_normal(d).astype(np.float32)
        parts = partition_vector(v, PQParams(d=d, m=m))
        assert np.concatenate(parts).tobytes() == v.tobytes()


class TestTranspose:
    def test_2x2(self):
        out = transpose_codebook([[1, 2], [3, 4]])
        assert out.tolist() == [[1, 3], [2, 4]]

    def test_single_centroid(self):
        out = transpose_codebook([[7, 8, 9]])
        assert out.tolist() == [[7], [8], [9]]

    def test_involution(self):
        x = np.random.default_rng(0).standard_normal((256, 16)).astype(np.float32)
        assert np.array_equal(transpose_codebook(transpose_codebook(x)), x)

    def test_ragged(self):
        with pytest.raises(FormatError):
            transpose_codebook([[1, 2], [3]])

    @given(st.integers(1, 256), st.integers(1, 16), st.integers(0, 2**31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_layout_duality(self, k, sub, seed):
        rm = np.random.default_rng(seed).standard_normal((k, sub)).astype(np.float32)
        tp = transpose_codebook(rm)
        assert np.array_equal(tp, rm.T)


class TestBiases:
    def test_three_four(self):
        assert compute_biases([[3.0, 4.0]])[0] == pytest.approx(12.5)

    def test_zero(self):
        assert compute_biases([[0.0, 0.0, 0.0]])[0] == 0.0

    def test_ones(self):
        assert compute_biases([[1.0, 1.0, 1.0, 1.0]])[0] == pytest.approx(2.0)

    def test_identity_vs_double(self):
        rng = np.random.default_rng(1)
        rm = rng.standard_normal((256, 16)).astype(np.float32)
        got = compute_biases(rm).astype(np.float64)
        want = 0.5 * np.einsum("kt,kt->k", rm.astype(np.float64), rm.astype(np.float64))
        assert np.all(np.abs(got - want) <= 1e-6 * np.maximum(np.abs(want), 1e-30))
        assert np.all(got >= 0.0)

    def test_non_finite(self):
        with pytest.raises(DataError):
            compute_biases([[np.inf, 1.0]])


class TestCodebook:
    def test_from_rowmajor_consistency(self):
        rng = np.random.default_rng(2)
        rm = rng.standard_normal((64, 8)).astype(np.float32)
        cb = Codebook.from_rowmajor(3, rm)
        assert cb.subspace_index == 3
        assert cb.k == 64 and cb.sub_dim == 8
        assert np.array_equal(cb.centroids_transposed, rm.T)
        assert np.array_equal(cb.biases, compute_biases(rm))

    def test_immutable(self):
        cb = Codebook.from_rowmajor(0, [[1.0, 2.0]])
        with pytest.raises(ValueError):
            cb.centroids_rowmajor[0, 0] = 5.0
        with pytest.raises(ValueError):
            cb.biases[0] = 5.0


class TestPQCodes:
    def test_out_of_range(self):
        with pytest.raises(CorruptionError):
            PQCodes(codes=np.array([[3]], dtype=np.uint8), k=3)

    def test_shape_props(self):
        c = PQCodes(codes=np.zeros((5, 2), dtype=np.uint8), k=4)
        assert (c.n, c.m) == (5, 2)

    def test_bad_dtype(self):
        with pytest.raises(ConfigError):
            PQCodes(codes=np.zeros((1, 1), dtype=np.int32), k=4)


class TestVectorDataset:
    def test_non_finite(self):
        with pytest.raises(DataError):
            VectorDataset(data=np.array([[np.nan]], dtype=np.float32))

    def test_props(self):
        ds = VectorDataset(data=np.zeros((3, 4), dtype=np.float32), source="x")
        assert (ds.n, ds.d) == (3, 4)


def test_score_block_shape():
    sb = ScoreBlock(8)
    assert sb.w == 8
    assert sb.acc.dtype == np.float32 and sb.scores.shape == (8,)
