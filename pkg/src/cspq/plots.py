"""Figure rendering for bench reports.

Figures are written to files next to the CSV (headless Agg backend); the CSV
stays the machine-readable artifact, the PNG is the human-readable one.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def render_bench_figure(results, path) -> Path:
    """Horizontal bars of median wall time per ablation stage, with
    throughput and speedup annotations. Returns the written path."""
    labels = [f"{r.variant}\n{r.order}" for r in results]
    times = [r.wall_seconds for r in results]
    speedups = [r.speedup_vs_baseline for r in results]
    vps = [r.vectors_per_second for r in results]

    fig, ax = plt.subplots(figsize=(8, 0.9 * len(results) + 1.6))
    y = range(len(results))
    bars = ax.barh(y, times, color="#4878b0", height=0.6)
    ax.set_yticks(list(y), labels, fontsize=9)
    ax.invert_yaxis()
    ax.set_xlabel("median wall time (s)")
    n = results[0].n if results else 0
    ax.set_title(f"bulk encode ablation ({n} vectors, d={results[0].d}, "
                 f"m={results[0].m}, k={results[0].k})" if results else "bulk encode")
    for bar, s, v in zip(bars, speedups, vps):
        ax.annotate(
            f"{s:.2f}x   {v:,.0f} vec/s",
            xy=(bar.get_width(), bar.get_y() + bar.get_height() / 2),
            xytext=(4, 0), textcoords="offset points",
            va="center", fontsize=9,
        )
    ax.margins(x=0.18)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=130)
    plt.close(fig)
    return out
