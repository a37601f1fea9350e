"""Result files: delimited tables and their companion figures.

Every table the engines produce (posterior histograms, fitted density grids,
iteration traces) is written as a small CSV, and the same data is rendered to
a PNG next to it so a run's directory can be read at a glance.  All output is
byte-reproducible: floats are written with repr precision and figures carry
no volatile metadata.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .bbvi import FamilySummary, IterationRow  # noqa: E402
from .dist import SoftmaxChoiceFamily  # noqa: E402
from .smc import Histogram  # noqa: E402

_PNG_META = {"Software": None}   # drop the library banner for stable bytes
_DPI = 120


def _fmt(x: float) -> str:
    return repr(float(x))


def write_histogram_csv(path: Path, hist: Histogram) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["bin_low", "bin_high", "mass"])
        for lo, hi, mass in zip(hist.edges[:-1], hist.edges[1:], hist.masses):
            w.writerow([_fmt(lo), _fmt(hi), _fmt(mass)])


def write_density_csv(path: Path, xs: Sequence[float], ys: Sequence[float]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["value", "density"])
        for x, y in zip(xs, ys):
            w.writerow([_fmt(x), _fmt(y)])


def write_trace_log(path: Path, trace: Sequence[IterationRow]) -> None:
    with open(path, "w") as f:
        for row in trace:
            f.write(f"iteration={row.iteration} elbo={_fmt(row.elbo)} "
                    f"grad_norm={_fmt(row.grad_norm)} change={_fmt(row.change)}\n")


def save_histogram_figure(path: Path, hist: Histogram, title: str) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    widths = hist.edges[1:] - hist.edges[:-1]
    ax.bar(hist.edges[:-1], hist.masses, width=widths, align="edge",
           color="#4878b0", edgecolor="white", linewidth=0.4)
    ax.axvline(hist.mean, color="#b04848", linestyle="--", linewidth=1.2,
               label=f"mean {hist.mean:.4g}")
    ax.set_xlabel("value")
    ax.set_ylabel("probability mass")
    ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI, metadata=_PNG_META)
    plt.close(fig)


def save_density_figure(path: Path, summary: FamilySummary, title: str) -> None:
    xs, ys = summary.grid()
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    if isinstance(summary.family, SoftmaxChoiceFamily):
        ax.bar(xs, ys, width=0.04 * (max(xs) - min(xs) or 1.0),
               color="#4878b0")
        ax.set_ylabel("probability mass")
    else:
        ax.plot(xs, ys, color="#4878b0")
        ax.fill_between(xs, ys, alpha=0.25, color="#4878b0")
        ax.set_ylabel("density")
    ax.axvline(summary.mean, color="#b04848", linestyle="--", linewidth=1.2,
               label=f"mean {summary.mean:.4g}")
    ax.set_xlabel("value")
    ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI, metadata=_PNG_META)
    plt.close(fig)


def save_trace_figure(path: Path, trace: Sequence[IterationRow]) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot([row.iteration for row in trace], [row.elbo for row in trace],
            color="#4878b0", linewidth=0.9)
    ax.set_xlabel("iteration")
    ax.set_ylabel("evidence lower bound estimate")
    ax.set_title("fitting progress")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI, metadata=_PNG_META)
    plt.close(fig)
