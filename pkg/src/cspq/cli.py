"""Command-line front end: train / encode / verify / bench / eval / synth.

Exit codes: 0 success, 1 usage or configuration error, 2 data or format
error, 3 verification failure. CSPQ_THREADS sets the default worker count.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io as cspq_io
from .bulk import (
    CHUNK_MAJOR,
    VECTOR_MAJOR,
    CodebookSet,
    ExecutionPlan,
    encode_dataset,
)
from .core import (
    ConfigError,
    CorruptionError,
    DataError,
    Error,
    FormatError,
    PQCodes,
    TrainingError,
)
from .evaluation import evaluate, exact_topn
from .kernels import EncoderVariant, native_lane_width
from .training import TrainConfig, train_all_codebooks_report

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFY = 3

BENCH_CSV_COLUMNS = [
    "variant", "order", "w", "block_size",
    "n", "d", "m", "k", "wall_seconds", "vps", "speedup",
]


@dataclass
class BenchResult:
    variant: str
    order: str
    w: int
    block_size: int
    n: int
    d: int
    m: int
    k: int
    wall_seconds: float
    vectors_per_second: float
    speedup_vs_baseline: float

    def csv_row(self) -> list:
        return [
            self.variant, self.order, self.w, self.block_size,
            self.n, self.d, self.m, self.k,
            f"{self.wall_seconds:.6f}",
            f"{self.vectors_per_second:.1f}",
            f"{self.speedup_vs_baseline:.4f}",
        ]


def _default_workers() -> int:
    env = os.environ.get("CSPQ_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _load_vectors(path):
    p = str(path)
    if p.endswith(".bvecs"):
        return cspq_io.read_bvecs(p)
    return cspq_io.read_fvecs(p)


def _variant(name: str) -> EncoderVariant:
    try:
        return EncoderVariant(name)
    except ValueError:
        raise ConfigError(f"unknown variant {name!r}") from None


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    ds = cspq_io.synth_dataset(args.n, args.d, args.clusters, args.seed, args.noise)
    cspq_io.write_fvecs(args.out, ds)
    print(f"wrote {ds.n} x {ds.d} vectors to {args.out} [{ds.source}]")
    return EXIT_OK


def cmd_train(args) -> int:
    from .core import PQParams

    ds = _load_vectors(args.input)
    params = PQParams(d=ds.d, m=args.m, k=args.k)
    cfg = TrainConfig(
        k=args.k, max_iters=args.iters, seed=args.seed, sample_cap=args.sample_cap
    )
    t0 = time.perf_counter()
    codebooks, reports = train_all_codebooks_report(ds, params, cfg)
    dt = time.perf_counter() - t0
    cspq_io.write_codebooks(args.out_codebooks, codebooks)
    for j, rep in enumerate(reports):
        print(
            f"subspace {j:3d}: objective {rep.objectives[-1]:.6e} "
            f"({rep.iterations} iters, {rep.n_train} samples)"
        )
    print(
        f"trained m={params.m} codebooks (k={args.k}, sub_dim={params.sub_dim}) "
        f"in {dt:.1f}s -> {args.out_codebooks}"
    )
    return EXIT_OK


def cmd_encode(args) -> int:
    codebooks = cspq_io.read_codebooks(args.codebooks)
    cbset = CodebookSet.from_codebooks(codebooks)
    if Path(args.input).stat().st_size == 0:
        # empty input is not an error for encoding: emit a valid empty file
        empty = PQCodes(codes=np.empty((0, cbset.m), dtype=np.uint8 if cbset.k <= 256 else np.uint16), k=cbset.k)
        cspq_io.write_codes(args.out_codes, empty)
        print(f"wrote 0 codes to {args.out_codes}")
        return EXIT_OK
    ds = _load_vectors(args.input)
    plan = ExecutionPlan(
        order=args.order,
        block_size=args.block_size,
        variant=_variant(args.variant),
        w=args.w,
        workers=args.workers,
    )
    t0 = time.perf_counter()
    codes = encode_dataset(ds, cbset, plan)
    dt = time.perf_counter() - t0
    cspq_io.write_codes(args.out_codes, codes)
    print(
        f"encoded {codes.n} vectors ({args.variant}, {args.order}, w={plan.resolved_w()}, "
        f"workers={plan.workers}) in {dt:.2f}s -> {args.out_codes}"
    )
    return EXIT_OK


def run_verify(
    dataset,
    codebooks,
    samples: int,
    tolerance: float,
    seed: int = 0,
    w: int | None = None,
    workers: int = 1,
):
    """Three-way encoder equivalence over sampled vectors.

    Every disagreement is classified with a float64 oracle: near-tie when the
    reference top-2 gap is within tolerance * max(1, second_best), failure
    otherwise. Returns (checked, near_ties, failures, details).
    """
    X = dataset.data if hasattr(dataset, "data") else np.asarray(dataset, dtype=np.float32)
    cbset = CodebookSet.from_codebooks(codebooks)
    rng = np.random.Generator(np.random.PCG64(seed))
    if samples < X.shape[0]:
        idx = rng.choice(X.shape[0], size=samples, replace=False)
        idx.sort()
        X = np.ascontiguousarray(X[idx])
    outs = {}
    for variant in EncoderVariant:
        plan = ExecutionPlan(variant=variant, w=w, workers=workers)
        outs[variant] = encode_dataset(X, cbset, plan).codes
    ref = outs[EncoderVariant.REFERENCE]
    disagree = np.zeros(ref.shape, dtype=bool)
    for variant in (EncoderVariant.REFORMULATED, EncoderVariant.BLOCKED):
        disagree |= outs[variant] != ref
    near_ties = 0
    failures = 0
    details = []
    sub = cbset.sub_dim
    for i, j in zip(*np.nonzero(disagree)):
        v = X[i, j * sub : (j + 1) * sub].astype(np.float64)
        cents = cbset.rowmajor[j].astype(np.float64)
        dists = np.einsum("kt,kt->k", cents - v[None, :], cents - v[None, :])
        top2 = np.partition(dists, 1)[:2]
        gap = float(top2[1] - top2[0])
        if gap <= tolerance * max(1.0, float(top2[1])):
            near_ties += 1
            kind = "near-tie"
        else:
            failures += 1
            kind = "failure"
        details.append(
            (int(i), int(j), kind, gap,
             {v.name: int(outs[v][i, j]) for v in EncoderVariant})
        )
    return X.shape[0], near_ties, failures, details


def cmd_verify(args) -> int:
    ds = _load_vectors(args.input)
    codebooks = cspq_io.read_codebooks(args.codebooks)
    checked, near_ties, failures, details = run_verify(
        ds, codebooks, args.samples, args.tolerance,
        seed=args.seed, w=args.w, workers=args.workers,
    )
    print(
        f"verified {checked} vectors x 3 variants: "
        f"{near_ties} near-tie disagreement(s), {failures} failure(s) "
        f"(tolerance {args.tolerance:g})"
    )
    for i, j, kind, gap, codes in details[:20]:
        print(f"  vector {i} chunk {j}: {kind}, top-2 gap {gap:.3e}, codes {codes}")
    if len(details) > 20:
        print(f"  ... {len(details) - 20} more")
    return EXIT_VERIFY if failures else EXIT_OK


def run_bench_matrix(
    dataset,
    codebooks,
    w: int | None = None,
    block_size: int = 4096,
    workers: int = 1,
    reps: int = 3,
) -> list[BenchResult]:
    """The four-stage ablation: baseline order/formula through the full
    pipeline. Rows 3 and 4 differ only in bias precomputation."""
    cbset = CodebookSet.from_codebooks(codebooks)
    X = dataset.data if hasattr(dataset, "data") else np.asarray(dataset, dtype=np.float32)
    wv = w if w is not None else native_lane_width()
    rows = [
        ("reference", VECTOR_MAJOR, EncoderVariant.REFERENCE, True),
        ("blocked", VECTOR_MAJOR, EncoderVariant.BLOCKED, False),
        ("blocked", CHUNK_MAJOR, EncoderVariant.BLOCKED, False),
        ("blocked+reform", CHUNK_MAJOR, EncoderVariant.BLOCKED, True),
    ]
    results = []
    baseline = None
    for label, order, variant, precomp in rows:
        plan = ExecutionPlan(
            order=order, block_size=block_size, variant=variant,
            w=wv, workers=workers,
        )
        encode_dataset(X, cbset, plan, precomputed_bias=precomp)  # warm-up
        times = []
        for _ in range(max(1, reps)):
            t0 = time.perf_counter()
            encode_dataset(X, cbset, plan, precomputed_bias=precomp)
            times.append(time.perf_counter() - t0)
        wall = float(np.median(times))
        if baseline is None:
            baseline = wall
        results.append(
            BenchResult(
                variant=label, order=order, w=wv, block_size=block_size,
                n=X.shape[0], d=X.shape[1], m=cbset.m, k=cbset.k,
                wall_seconds=wall,
                vectors_per_second=X.shape[0] / wall,
                speedup_vs_baseline=baseline / wall,
            )
        )
    return results


def write_bench_csv(results, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(BENCH_CSV_COLUMNS)
        for r in results:
            writer.writerow(r.csv_row())


def cmd_bench(args) -> int:
    ds = _load_vectors(args.input)
    codebooks = cspq_io.read_codebooks(args.codebooks)
    if not args.matrix:
        plan = ExecutionPlan(
            order=args.order, block_size=args.block_size,
            variant=_variant(args.variant), w=args.w, workers=args.workers,
        )
        encode_dataset(ds, codebooks, plan)
        times = []
        for _ in range(max(1, args.reps)):
            t0 = time.perf_counter()
            encode_dataset(ds, codebooks, plan)
            times.append(time.perf_counter() - t0)
        wall = float(np.median(times))
        print(
            f"{args.variant} {args.order} w={plan.resolved_w()}: {wall:.3f}s "
            f"({ds.n / wall:,.0f} vec/s, median of {args.reps}, workers={args.workers})"
        )
        return EXIT_OK

    results = run_bench_matrix(
        ds, codebooks, w=args.w, block_size=args.block_size,
        workers=args.workers, reps=args.reps,
    )
    print(f"{'variant':16s} {'order':13s} {'w':>3s} {'wall_s':>9s} {'vec/s':>12s} {'speedup':>8s}")
    for r in results:
        print(
            f"{r.variant:16s} {r.order:13s} {r.w:3d} {r.wall_seconds:9.3f} "
            f"{r.vectors_per_second:12,.0f} {r.speedup_vs_baseline:7.2f}x"
        )
    print(f"(median of {args.reps} reps after warm-up, workers={args.workers})")
    if args.out_csv:
        write_bench_csv(results, args.out_csv)
        print(f"wrote {args.out_csv}")
        if not args.no_figures:
            from .plots import render_bench_figure

            fig_path = Path(args.out_csv).with_suffix(".png")
            render_bench_figure(results, fig_path)
            print(f"wrote {fig_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ds = _load_vectors(args.input)
    queries = _load_vectors(args.queries)
    codebooks = cspq_io.read_codebooks(args.codebooks)
    codes = cspq_io.read_codes(args.codes) if args.codes else None
    gt = cspq_io.read_ivecs(args.groundtruth) if args.groundtruth else None
    report = evaluate(
        ds, queries, codebooks,
        variant=_variant(args.variant), topn=args.topn,
        codes=codes, groundtruth=gt, workers=args.workers,
    )
    print(
        f"variant={report.variant} n_db={report.n_db} n_queries={report.n_queries}\n"
        f"recall@{report.top_n} = {report.recall_at_n:.4f} (flat exhaustive ADC)\n"
        f"mse = {report.mse:.6e}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cspq",
        description="Product quantization toolkit: train codebooks, bulk-encode, "
        "verify encoder equivalence, benchmark, evaluate recall.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    workers_default = _default_workers()

    p = sub.add_parser("synth", help="generate a seeded synthetic fvecs dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--clusters", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train per-subspace codebooks")
    p.add_argument("--input", required=True, help="fvecs/bvecs dataset")
    p.add_argument("--out-codebooks", required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--k", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iters", type=int, default=25)
    p.add_argument("--sample-cap", type=int, default=None,
                   help="max training points per subspace (0 = unlimited, default 256*k)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="bulk-encode a dataset to a codes file")
    p.add_argument("--input", required=True)
    p.add_argument("--codebooks", required=True)
    p.add_argument("--out-codes", required=True)
    p.add_argument("--variant", default="blocked",
                   choices=[v.value for v in EncoderVariant])
    p.add_argument("--order", default=CHUNK_MAJOR, choices=[CHUNK_MAJOR, VECTOR_MAJOR])
    p.add_argument("--w", type=int, default=None)
    p.add_argument("--block-size", type=int, default=4096)
    p.add_argument("--workers", type=int, default=workers_default)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("verify", help="three-way encoder equivalence check")
    p.add_argument("--input", required=True)
    p.add_argument("--codebooks", required=True)
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--w", type=int, default=None)
    p.add_argument("--workers", type=int, default=workers_default)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="time encoder configurations")
    p.add_argument("--input", required=True)
    p.add_argument("--codebooks", required=True)
    p.add_argument("--matrix", action="store_true",
                   help="run the 4-row ablation matrix")
    p.add_argument("--variant", default="blocked",
                   choices=[v.value for v in EncoderVariant])
    p.add_argument("--order", default=CHUNK_MAJOR, choices=[CHUNK_MAJOR, VECTOR_MAJOR])
    p.add_argument("--w", type=int, default=None)
    p.add_argument("--block-size", type=int, default=4096)
    p.add_argument("--workers", type=int, default=workers_default)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--out-csv", default=None)
    p.add_argument("--no-figures", action="store_true",
                   help="skip the PNG rendered next to the CSV")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("eval", help="reconstruction MSE and flat ADC recall")
    p.add_argument("--input", required=True, help="database vectors")
    p.add_argument("--queries", required=True)
    p.add_argument("--codebooks", required=True)
    p.add_argument("--codes", default=None, help="reuse a codes file")
    p.add_argument("--variant", default="blocked",
                   choices=[v.value for v in EncoderVariant])
    p.add_argument("--topN", dest="topn", type=int, default=10)
    p.add_argument("--groundtruth", default=None, help="ivecs neighbor lists")
    p.add_argument("--workers", type=int, default=workers_default)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TrainingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FormatError, CorruptionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Error as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
