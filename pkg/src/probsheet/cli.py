"""Command line driver.

    probsheet run SHEET --engine {smc,bbvi} [options]
    probsheet describe SHEET

A sheet file is a JSON document with a top-level "cells" object mapping cell
names to their text, an optional "title", and an optional "black_ops" list of
{"name": ..., "deterministic": ...} declarations that re-flag registered
black-box operators.

`run` writes its results under --out: per-cell histogram CSVs and figures for
the particle engine, per-label density CSVs and figures for the variational
engine, plus a summary.json.  Identical inputs, options, and seed produce
byte-identical files.

Exit codes: 0 success, 2 bad configuration, 3 model or input errors,
4 model requires the particle engine (gradients unavailable).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bbvi import BbviConfig, run_bbvi
from .blackbox import Registry, builtin_registry
from .errors import (
    ConfigError,
    GradientUnavailableError,
    ProbsheetError,
)
from .formula import Actual, CellRef, ErpApp, iter_op_nodes
from .graph import CompiledSheet, Sheet, compile_sheet, latent_cells, parse_sheet
from .smc import combined_log_evidence, posterior_histogram, run_smc
from . import report

DEFAULTS = dict(particles=5000, islands=10, samples=10, iterations=1000,
                gamma=0.1, epsilon=1e-4, seed=0, bins=40)


def load_model(path: str | Path) -> tuple[Sheet, Registry, str | None]:
    """Read a sheet document: parsed cells, operator registry, title."""
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ProbsheetError(f"{path}: not valid JSON ({e})") from e
    if not isinstance(doc, dict) or not isinstance(doc.get("cells"), dict):
        raise ProbsheetError(
            f'{path}: expected a JSON object with a "cells" mapping')
    for name, text in doc["cells"].items():
        if not isinstance(text, str):
            raise ProbsheetError(
                f"{path}: cell {name} must map to a string, got {type(text).__name__}")
    registry = builtin_registry()
    for decl in doc.get("black_ops", []):
        if not isinstance(decl, dict) or "name" not in decl:
            raise ProbsheetError(
                f'{path}: each black_ops entry needs at least a "name"')
        registry = registry.with_determinism(
            str(decl["name"]).upper(), bool(decl.get("deterministic", True)))
    sheet = parse_sheet(doc["cells"])
    title = doc.get("title")
    return sheet, registry, title if isinstance(title, str) else None


def load_sheet(path: str | Path) -> Sheet:
    """Parse and structure-check the sheet document at `path`."""
    sheet, _, _ = load_model(path)
    compile_sheet(sheet)   # surfaces dangling references and cycles
    return sheet


def _parse_targets(spec: str | None, compiled: CompiledSheet) -> list[CellRef]:
    if spec is None:
        return latent_cells(compiled)
    targets = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            ref = CellRef.parse(part)
        except ProbsheetError:
            raise ConfigError(f"--target: {part!r} is not a cell name")
        if ref not in compiled.sheet.cells:
            raise ConfigError(f"--target: cell {ref} is not in the sheet")
        targets.append(ref)
    if not targets:
        raise ConfigError("--target: no cells given")
    return targets


def _erp_label_count(compiled: CompiledSheet) -> int:
    return sum(
        1
        for r in compiled.sheet.cells
        for node in iter_op_nodes(compiled.sheet.cells[r])
        if isinstance(node, ErpApp)
    )


def cmd_describe(args: argparse.Namespace) -> int:
    sheet, registry, title = load_model(args.sheet)
    compiled = compile_sheet(sheet)
    n_obs = len(compiled.observed)
    n_latent = _erp_label_count(compiled)
    print(f"sheet: {args.sheet}" + (f" ({title})" if title else ""))
    print(f"cells: {len(sheet)}")
    print("evaluation order: " + " ".join(str(r) for r in compiled.order))
    print(f"{n_obs} observation{'s' if n_obs != 1 else ''}, "
          f"{n_latent} latent random choice{'s' if n_latent != 1 else ''}")
    for i, obs in enumerate(compiled.observed):
        block = compiled.pred_blocks[i]
        frontier = sorted(compiled.frontier_blocks[i], key=lambda r: r.sort_key)
        print(f"observation {obs}: conditions {len(block)} ancestor cell"
              f"{'s' if len(block) != 1 else ''}"
              + (f" [{' '.join(map(str, block))}]" if block else "")
              + (f", reads [{' '.join(map(str, frontier))}]" if frontier else ""))
    if compiled.residual:
        print(f"residual: {len(compiled.residual)} cell"
              f"{'s' if len(compiled.residual) != 1 else ''} "
              f"[{' '.join(map(str, compiled.residual))}]")
    stochastic = sorted(name for name, op in registry.ops.items()
                        if not op.deterministic)
    if stochastic:
        print("stochastic black-box ops: " + " ".join(stochastic))
    return 0


def _validate_run(args: argparse.Namespace) -> None:
    if args.seed < 0:
        raise ConfigError(f"--seed must be non-negative, got {args.seed}")
    if args.bins < 1:
        raise ConfigError(f"--bins must be at least 1, got {args.bins}")


def cmd_run(args: argparse.Namespace) -> int:
    _validate_run(args)
    sheet, registry, _ = load_model(args.sheet)
    compiled = compile_sheet(sheet)
    targets = _parse_targets(args.target, compiled)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.engine == "smc":
        return _run_smc(args, compiled, registry, targets, out)
    return _run_bbvi(args, compiled, registry, targets, out)


def _run_smc(args, compiled, registry, targets, out: Path) -> int:
    mix = run_smc(compiled, args.particles, args.islands, registry, args.seed)
    target_summaries = {}
    written = []
    for cell in targets:
        hist = posterior_histogram(mix, cell, args.bins)
        csv_path = out / f"{cell}.hist.csv"
        report.write_histogram_csv(csv_path, hist)
        fig_path = out / f"{cell}.hist.png"
        report.save_histogram_figure(fig_path, hist, f"{cell} posterior")
        written += [csv_path, fig_path]
        target_summaries[str(cell)] = {"mean": hist.mean, "stddev": hist.stddev}
    summary = {
        "engine": "smc",
        "sheet": str(args.sheet),
        "seed": args.seed,
        "particles": args.particles,
        "islands": args.islands,
        "bins": args.bins,
        "targets": target_summaries,
        "islands_detail": [
            {"particles": len(store),
             "evidence": store.evidence,
             "log_evidence": store.log_evidence,
             "weight": float(w)}
            for store, w in zip(mix.islands, mix.weights)
        ],
        "log_evidence": combined_log_evidence(mix),
    }
    summary_path = out / "summary.json"
    _write_json(summary_path, summary)
    written.append(summary_path)
    for p in written:
        print(f"wrote {p}")
    return 0


def _run_bbvi(args, compiled, registry, targets, out: Path) -> int:
    config = BbviConfig(samples=args.samples, max_iterations=args.iterations,
                        learning_rate=args.gamma, tolerance=args.epsilon,
                        seed=args.seed, init=args.init)
    result = run_bbvi(compiled, config, registry)
    target_set = set(targets)
    picked = [s for label, s in result.summaries.items()
              if label.cell in target_set]
    if args.target is None:
        picked = list(result.summaries.values())
    written = []
    label_summaries = {}
    for s in picked:
        stem = f"{s.label.cell}_{s.label.index}"
        xs, ys = s.grid()
        csv_path = out / f"{stem}.density.csv"
        report.write_density_csv(csv_path, xs, ys)
        fig_path = out / f"{stem}.density.png"
        report.save_density_figure(fig_path, s, f"{s.label} fitted density")
        written += [csv_path, fig_path]
        label_summaries[str(s.label)] = {
            "cell": str(s.label.cell),
            "family": type(s.family).__name__,
            "params": [float(v) for v in s.lam],
            "mean": s.mean,
            "stddev": s.stddev,
        }
    summary = {
        "engine": "bbvi",
        "sheet": str(args.sheet),
        "seed": args.seed,
        "samples": args.samples,
        "max_iterations": args.iterations,
        "learning_rate": args.gamma,
        "tolerance": args.epsilon,
        "converged": result.converged,
        "iterations_run": result.iterations,
        "elbo_final": result.trace[-1].elbo if result.trace else 0.0,
        "labels": label_summaries,
    }
    summary_path = out / "summary.json"
    _write_json(summary_path, summary)
    written.append(summary_path)
    log_path = out / "bbvi_diagnostics.log"
    report.write_trace_log(log_path, result.trace)
    written.append(log_path)
    if result.trace:
        trace_fig = out / "bbvi_trace.png"
        report.save_trace_figure(trace_fig, result.trace)
        written.append(trace_fig)
    for p in written:
        print(f"wrote {p}")
    if not result.converged:
        print("note: iteration budget reached before the parameters settled",
              file=sys.stderr)
    return 0


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="probsheet",
        description="Inference over spreadsheet models with random cells")
    sub = p.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="run inference and write result files")
    runp.add_argument("sheet", help="sheet document (JSON)")
    runp.add_argument("--engine", choices=("smc", "bbvi"), required=True,
                      help="smc: island particle filter; bbvi: variational fit")
    runp.add_argument("--target", default=None,
                      help="comma-separated cells to report (default: all "
                           "latent non-constant cells)")
    runp.add_argument("--particles", type=int, default=DEFAULTS["particles"],
                      help="total particle budget (smc)")
    runp.add_argument("--islands", type=int, default=DEFAULTS["islands"],
                      help="independent particle populations (smc)")
    runp.add_argument("--samples", type=int, default=DEFAULTS["samples"],
                      help="sheet evaluations per gradient estimate (bbvi)")
    runp.add_argument("--iterations", type=int, default=DEFAULTS["iterations"],
                      help="iteration budget (bbvi)")
    runp.add_argument("--gamma", type=float, default=DEFAULTS["gamma"],
                      help="base learning rate (bbvi)")
    runp.add_argument("--epsilon", type=float, default=DEFAULTS["epsilon"],
                      help="parameter-change stopping tolerance (bbvi)")
    runp.add_argument("--init", choices=("zero", "prior"), default="zero",
                      help="family initialization (bbvi): zeroed parameters, "
                           "or moment-matched to each cell's own distribution")
    runp.add_argument("--seed", type=int, default=DEFAULTS["seed"],
                      help="random seed; fixes every draw of the run")
    runp.add_argument("--bins", type=int, default=DEFAULTS["bins"],
                      help="histogram bin count (smc)")
    runp.add_argument("--out", default="out", help="output directory")
    runp.set_defaults(func=cmd_run)

    desc = sub.add_parser("describe",
                          help="print structure: order, observations, blocks")
    desc.add_argument("sheet", help="sheet document (JSON)")
    desc.set_defaults(func=cmd_describe)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except GradientUnavailableError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except ProbsheetError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
