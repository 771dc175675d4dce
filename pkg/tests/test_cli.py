import csv
import struct
import zlib

import numpy as np
import pytest

from cspq.cli import BENCH_CSV_COLUMNS, main
from cspq.io import read_codebooks, read_codes, read_fvecs, write_codebooks, write_ivecs


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A small synthetic dataset with trained codebooks, via the CLI itself."""
    root = tmp_path_factory.mktemp("cli")
    base = root / "base.fvecs"
    cb = root / "cb.pqcb"
    assert main(["synth", "--n", "2000", "--d", "32", "--clusters", "8",
                 "--seed", "3", "--out", str(base)]) == 0
    assert main(["train", "--input", str(base), "--out-codebooks", str(cb),
                 "--m", "2", "--k", "16", "--seed", "5"]) == 0
    return root, base, cb


class TestTrain:
    def test_smoke_readable_back(self, workspace):
        _, _, cb = workspace
        loaded = read_codebooks(cb)
        assert len(loaded) == 2 and loaded[0].k == 16

    def test_m_does_not_divide_d(self, workspace, capsys):
        root, base, _ = workspace
        rc = main(["train", "--input", str(base), "--out-codebooks",
                   str(root / "bad.pqcb"), "--m", "3", "--k", "4"])
        assert rc == 1
        assert "m does not divide d" in capsys.readouterr().err

    def test_seed_determinism(self, workspace):
        root, base, _ = workspace
        a, b = root / "a.pqcb", root / "b.pqcb"
        for out in (a, b):
            assert main(["train", "--input", str(base), "--out-codebooks",
                         str(out), "--m", "2", "--k", "8", "--seed", "11"]) == 0
        assert a.read_bytes() == b.read_bytes()


class TestEncode:
    def test_variants_byte_identical(self, workspace):
        root, base, cb = workspace
        paths = {}
        for variant in ("reference", "reformulated", "blocked"):
            out = root / f"{variant}.pqcd"
            assert main(["encode", "--input", str(base), "--codebooks", str(cb),
                         "--out-codes", str(out), "--variant", variant]) == 0
            paths[variant] = out.read_bytes()
        assert paths["reference"] == paths["reformulated"] == paths["blocked"]

    def test_blocked_w1_matches_reformulated(self, workspace):
        root, base, cb = workspace
        a, b = root / "w1.pqcd", root / "rf.pqcd"
        assert main(["encode", "--input", str(base), "--codebooks", str(cb),
                     "--out-codes", str(a), "--variant", "blocked", "--w", "1"]) == 0
        assert main(["encode", "--input", str(base), "--codebooks", str(cb),
                     "--out-codes", str(b), "--variant", "reformulated"]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_empty_input(self, workspace, tmp_path):
        _, _, cb = workspace
        empty = tmp_path / "empty.fvecs"
        empty.write_bytes(b"")
        out = tmp_path / "empty.pqcd"
        assert main(["encode", "--input", str(empty), "--codebooks", str(cb),
                     "--out-codes", str(out)]) == 0
        assert read_codes(out).n == 0

    def test_workers_env_default(self, workspace, tmp_path, monkeypatch, capsys):
        _, base, cb = workspace
        monkeypatch.setenv("CSPQ_THREADS", "3")
        out = tmp_path / "env.pqcd"
        assert main(["encode", "--input", str(base), "--codebooks", str(cb),
                     "--out-codes", str(out)]) == 0
        assert "workers=3" in capsys.readouterr().out


class TestVerify:
    def test_trained_clean(self, workspace):
        _, base, cb = workspace
        assert main(["verify", "--input", str(base), "--codebooks", str(cb),
                     "--samples", "500"]) == 0

    def test_corrupted_bias_fails(self, workspace, tmp_path):
        _, base, cb = workspace
        loaded = read_codebooks(cb)
        bad_biases = loaded[0].biases.copy()
        bad_biases[:4] += np.float32(10.0)  # negative control
        from cspq.core import Codebook

        corrupted = [
            Codebook(
                subspace_index=0,
                centroids_rowmajor=loaded[0].centroids_rowmajor,
                centroids_transposed=loaded[0].centroids_transposed,
                biases=bad_biases,
            ),
            loaded[1],
        ]
        bad = tmp_path / "bad.pqcb"
        write_codebooks(bad, corrupted)
        rc = main(["verify", "--input", str(base), "--codebooks", str(bad),
                   "--samples", "500"])
        assert rc == 3

    def test_crafted_tie_is_near_tie(self, workspace, tmp_path, capsys):
        # duplicated centroid + query equal to it: never a failure
        from cspq.core import Codebook
        from cspq.io import write_fvecs

        rng = np.random.default_rng(3)
        rows = rng.standard_normal((8, 4)).astype(np.float32)
        rows[5] = rows[1]
        cbs = [Codebook.from_rowmajor(j, rows) for j in range(2)]
        cbfile = tmp_path / "tie.pqcb"
        write_codebooks(cbfile, cbs)
        queries = np.concatenate([rows[1], rows[1]])[None, :]
        qfile = tmp_path / "tie.fvecs"
        write_fvecs(qfile, queries.astype(np.float32))
        rc = main(["verify", "--input", str(qfile), "--codebooks", str(cbfile),
                   "--samples", "1"])
        assert rc == 0
        assert "0 failure(s)" in capsys.readouterr().out


class TestBench:
    def test_csv_schema_and_baseline_speedup(self, workspace, tmp_path):
        _, base, cb = workspace
        out = tmp_path / "bench.csv"
        assert main(["bench", "--input", str(base), "--codebooks", str(cb),
                     "--matrix", "--reps", "1", "--out-csv", str(out),
                     "--no-figures"]) == 0
        with open(out) as f:
            rows = list(csv.reader(f))
        assert rows[0] == BENCH_CSV_COLUMNS
        assert rows[0] == ["variant", "order", "w", "block_size", "n", "d", "m",
                           "k", "wall_seconds", "vps", "speedup"]
        assert len(rows) == 5
        assert float(rows[1][-1]) == 1.0  # row 1 vs itself
        assert not out.with_suffix(".png").exists()

    def test_figure_written(self, workspace, tmp_path):
        _, base, cb = workspace
        out = tmp_path / "bench.csv"
        assert main(["bench", "--input", str(base), "--codebooks", str(cb),
                     "--matrix", "--reps", "1", "--out-csv", str(out)]) == 0
        png = out.with_suffix(".png")
        assert png.exists() and png.stat().st_size > 1000

    def test_single_config_mode(self, workspace, capsys):
        _, base, cb = workspace
        assert main(["bench", "--input", str(base), "--codebooks", str(cb),
                     "--reps", "1"]) == 0
        assert "vec/s" in capsys.readouterr().out


class TestEval:
    def test_smoke(self, workspace, tmp_path, capsys):
        root, base, cb = workspace
        q = tmp_path / "q.fvecs"
        assert main(["synth", "--n", "50", "--d", "32", "--clusters", "8",
                     "--seed", "3", "--out", str(q)]) == 0
        assert main(["eval", "--input", str(base), "--queries", str(q),
                     "--codebooks", str(cb), "--topN", "5"]) == 0
        out = capsys.readouterr().out
        assert "recall@5" in out and "mse" in out

    def test_with_codes_and_groundtruth(self, workspace, tmp_path, capsys):
        root, base, cb = workspace
        codes = root / "reference.pqcd"  # produced by TestEncode
        if not codes.exists():
            main(["encode", "--input", str(base), "--codebooks", str(cb),
                  "--out-codes", str(codes)])
        ds = read_fvecs(base)
        from cspq.evaluation import exact_topn

        q = ds.data[:20]
        qfile = tmp_path / "q.fvecs"
        from cspq.io import write_fvecs

        write_fvecs(qfile, q)
        gtfile = tmp_path / "gt.ivecs"
        write_ivecs(gtfile, exact_topn(q, ds.data, 5).astype(np.int32))
        assert main(["eval", "--input", str(base), "--queries", str(qfile),
                     "--codebooks", str(cb), "--codes", str(codes),
                     "--topN", "5", "--groundtruth", str(gtfile)]) == 0
        assert "recall@5" in capsys.readouterr().out


class TestSynth:
    def test_deterministic_files(self, tmp_path):
        a, b = tmp_path / "a.fvecs", tmp_path / "b.fvecs"
        for out in (a, b):
            assert main(["synth", "--n", "100", "--d", "8", "--clusters", "4",
                         "--seed", "42", "--out", str(out)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_missing_file_exit_code(self, tmp_path):
        rc = main(["encode", "--input", str(tmp_path / "nope.fvecs"),
                   "--codebooks", str(tmp_path / "nope.pqcb"),
                   "--out-codes", str(tmp_path / "o.pqcd")])
        assert rc == 2
