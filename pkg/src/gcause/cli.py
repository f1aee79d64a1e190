"""Command-line entry point: ``gcause <command> [--config FILE] [--seed N] [--out DIR] [--emit-plots]``.

Exit status is 0 on success, 1 for usage or configuration problems (nothing
was computed) and 2 when a run failed at runtime.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import GRAD_CHECK_FORECASTER, ConfigError, RunConfig, from_dict, load_config, load_input
from .forecaster import ForecasterConfig, ForecasterError, gradient_check
from .invariance import DecisionMatrix, discover
from .knockoff import diagnostics, fit_gaussian, joint_correlation, sample_knockoffs
from .plots import correlation_svg, series_svg, write_svg
from .report import (
    ReportError,
    aggregate_scores,
    build_report,
    emit_pair_plots,
    read_json,
    score_null,
    score_report,
    write_json,
)
from .series import SeriesError, standardize, write_csv
from .synthgen import CausalGraph

log = logging.getLogger("gcause")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with 2, which here means a runtime failure
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, config_required: bool) -> None:
    p.add_argument("--config", required=config_required, help="JSON run configuration")
    p.add_argument("--seed", type=int, help="overrides the config's top-level seed")
    p.add_argument("--out", help="output directory (overrides the config's 'out')")
    p.add_argument("--emit-plots", action="store_true", help="also write SVG figures")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gcause", description="Group causal discovery for multivariate time series.")
    parser.add_argument("--version", action="version", version=f"gcause {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="simulate a grouped benchmark series with a known direction")
    _common(p, True)

    p = sub.add_parser("discover", help="train, intervene and test every ordered group pair")
    _common(p, True)
    p.add_argument("--save-model", action="store_true", help="write model.json and loss.csv")
    p.add_argument("--workers", type=int, default=1, help="threads for the pair tests")

    p = sub.add_parser("eval", help="score reports against ground-truth graphs")
    _common(p, False)
    p.add_argument("--report", action="append", default=[], help="report.json (repeatable)")
    p.add_argument("--graph", action="append", default=[], help="graph.json, paired with --report by order")
    p.add_argument("--run-dir", action="append", default=[],
                   help="directory holding report.json and graph.json (repeatable)")

    p = sub.add_parser("benchmark", help="synth + discover + eval over densities and seeds")
    _common(p, True)
    p.add_argument("--workers", type=int, help="parallel processes (overrides benchmark.workers)")

    p = sub.add_parser("knockoff-diag", help="second-order knockoff diagnostics for the input series")
    _common(p, True)

    p = sub.add_parser("grad-check", help="finite-difference check of the forecaster gradients")
    _common(p, False)
    return parser


def _config(args) -> RunConfig:
    return load_config(args.config, args.seed, args.out)


def _graph_summary(graph: CausalGraph) -> str:
    names = graph.partition.names
    arrows = ", ".join(f"{names[a]}->{names[b]}" for a, b in graph.direction) or "none"
    return f"direction={arrows} edges={len(graph.edges)}"


# --- synth ---------------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = _config(args)
    if cfg.synth is None:
        raise ConfigError("synth needs a 'synth' section in the config")
    loaded = load_input(cfg)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    loaded.graph.save(out / "graph.json")
    write_csv(loaded.series, out / "series.csv", header=False)
    if args.emit_plots:
        write_svg(out / "series.svg", series_svg(loaded.series.values, loaded.series.names))
    print(f"N={loaded.series.N} T={loaded.series.T} density={cfg.synth['density']} "
          f"{_graph_summary(loaded.graph)} -> {out}")
    return EXIT_OK


# --- discover ------------------------------------------------------------------

def run_discovery(cfg: RunConfig, out: Path, emit_plots: bool = False, save_model: bool = False,
                  workers: int = 1) -> dict:
    """Full pipeline for one config; writes report.json (and friends) into ``out``."""
    timing = {}
    t0 = time.perf_counter()
    loaded = load_input(cfg)
    timing["load"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    run = discover(loaded.series, loaded.partition, cfg.forecaster, cfg.inference,
                   workers=workers, return_run=True)
    timing["discover"] = time.perf_counter() - t0

    report = build_report(cfg, loaded, run)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "report.json", report)
    # wall-clock numbers vary between runs, so they stay out of report.json
    write_json(out / "timing.json", {k: round(v, 3) for k, v in timing.items()})
    if loaded.graph is not None:
        loaded.graph.save(out / "graph.json")
    if save_model:
        run.model.save(out / "model.json")
        run.model.write_loss_trace(out / "loss.csv")
    if emit_plots:
        emit_pair_plots(run, loaded.series.names, out / "plots")
    return report


def cmd_discover(args) -> int:
    cfg = _config(args)
    report = run_discovery(cfg, cfg.out, args.emit_plots, args.save_model, max(1, args.workers))
    for link in report["decisions"]["links"]:
        print(f"{link['a']} {link['label']} {link['b']}")
    if "score" in report:
        s = report["score"]
        print(f"score: correct={s['correct']} wrong={s['wrong']} no_inference={s['no_inference']}")
    print(f"report: {cfg.out / 'report.json'}")
    return EXIT_OK


# --- eval ----------------------------------------------------------------------

def cmd_eval(args) -> int:
    pairs = [(Path(r), Path(g)) for r, g in zip(args.report, args.graph)]
    if len(args.report) != len(args.graph):
        raise UsageError("--report and --graph must be given the same number of times")
    pairs += [(Path(d) / "report.json", Path(d) / "graph.json") for d in args.run_dir]
    if not pairs:
        raise UsageError("nothing to evaluate: pass --report/--graph pairs or --run-dir")
    scores = []
    for report_path, graph_path in pairs:
        report = read_json(report_path)
        try:
            graph = CausalGraph.from_json(read_json(graph_path))
        except (KeyError, TypeError, ValueError) as exc:
            raise ReportError(f"{graph_path} is not a graph file: {exc}") from None
        scores.append(score_report(report, graph))
    result = aggregate_scores(scores)
    if args.out:
        write_json(Path(args.out) / "eval.json", result)
    print(json.dumps(result))
    return EXIT_OK


# --- benchmark -----------------------------------------------------------------

def _cell_name(density: float, seed: int) -> str:
    return f"d{density:.2f}_s{seed}"


def _run_cell(job) -> tuple[str, dict | None, str | None]:
    """One (density, seed) cell; returns (name, score, error). Safe to run in a worker process."""
    doc, out, emit_plots = job
    name = out.name
    score_path = out / "score.json"
    if score_path.exists():
        try:
            return name, read_json(score_path), None
        except ReportError:
            pass  # damaged marker: recompute
    failed = out / "FAILED"
    try:
        cfg = from_dict(doc, ".", None, out)
        report = run_discovery(cfg, out, emit_plots)
        if doc["synth"]["direction"] is None:
            score = score_null(DecisionMatrix.from_json(report["decisions"]))
        else:
            score = report["score"]
        write_json(score_path, score)
        if failed.exists():
            failed.unlink()
        return name, score, None
    except Exception as exc:  # noqa: BLE001 - a failed cell must not stop the others
        out.mkdir(parents=True, exist_ok=True)
        failed.write_text(f"{type(exc).__name__}: {exc}\n")
        return name, None, f"{type(exc).__name__}: {exc}"


def benchmark_jobs(cfg: RunConfig, emit_plots: bool = False) -> list[tuple[float, int, tuple]]:
    b = cfg.benchmark
    jobs = []
    for density in b["densities"]:
        for k in range(b["seeds"]):
            seed = cfg.seed + k
            doc = {
                "seed": seed,
                "synth": {"groups": list(b["groups"]), "density": density, "T": b["T"],
                          "noise_std": b["noise_std"], "max_lag": b["max_lag"], "burn_in": b["burn_in"],
                          "direction": None if b["null"] else [0, 1]},
            }
            for section in ("forecaster", "inference"):
                if section in cfg.raw:
                    doc[section] = dict(cfg.raw[section])
            jobs.append((density, seed, (doc, cfg.out / "runs" / _cell_name(density, seed), emit_plots)))
    return jobs


def format_table(rows: list[dict]) -> str:
    lines = [f"{'density':>8} {'correct':>8} {'wrong':>8} {'no_inf':>8} {'runs':>5}"]
    for r in rows:
        lines.append(f"{r['density']:>8.2f} {r['correct']:>8.2f} {r['wrong']:>8.2f} "
                     f"{r['no_inference']:>8.2f} {r['runs']:>5d}")
    return "\n".join(lines) + "\n"


def run_benchmark(cfg: RunConfig, emit_plots: bool = False, workers: int | None = None) -> dict:
    jobs = benchmark_jobs(cfg, emit_plots)
    workers = workers or cfg.benchmark["workers"]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_cell, [j[2] for j in jobs]))
    else:
        results = []
        for job in jobs:
            results.append(_run_cell(job[2]))
            log.info("cell %s done", results[-1][0])
    rows, failed = [], []
    for density in cfg.benchmark["densities"]:
        cell = [(job, res) for job, res in zip(jobs, results) if job[0] == density]
        scores = [res[1] for _, res in cell if res[1] is not None]
        failed += [{"cell": res[0], "error": res[2]} for _, res in cell if res[2] is not None]
        if scores:
            rows.append({"density": density, **aggregate_scores(scores)})
    summary = {
        "schema": "gcause-benchmark/1",
        "groups": list(cfg.benchmark["groups"]),
        "T": cfg.benchmark["T"],
        "seeds": cfg.benchmark["seeds"],
        "null": cfg.benchmark["null"],
        "rows": rows,
        "failed": failed,
        "complete": not failed,
    }
    write_json(cfg.out / "benchmark.json", summary)
    (cfg.out / "benchmark.txt").write_text(format_table(rows))
    return summary


def cmd_benchmark(args) -> int:
    cfg = _config(args)
    t0 = time.perf_counter()
    summary = run_benchmark(cfg, args.emit_plots, args.workers)
    sys.stdout.write(format_table(summary["rows"]))
    for f in summary["failed"]:
        print(f"FAILED {f['cell']}: {f['error']}", file=sys.stderr)
    print(f"{len(summary['rows'])} rows in {time.perf_counter() - t0:.1f}s -> {cfg.out}", file=sys.stderr)
    return EXIT_OK if summary["complete"] else EXIT_RUNTIME


# --- knockoff-diag -------------------------------------------------------------

def cmd_knockoff_diag(args) -> int:
    cfg = _config(args)
    loaded = load_input(cfg)
    std, _ = standardize(loaded.series)
    model = fit_gaussian(std, cfg.inference.shrinkage, cfg.inference.knockoff_method)
    knock = sample_knockoffs(model, std.values, seed=cfg.inference.knockoff_seed)
    diag = diagnostics(std.values, knock)
    doc = {"N": std.N, "T": std.T, "method": model.method, "shrinkage": model.shrinkage,
           "s": model.s, **diag.to_json()}
    out = cfg.out
    write_json(out / "knockoff_diag.json", doc)
    if args.emit_plots:
        labels = list(std.names) + [f"~{n}" for n in std.names]
        write_svg(out / "knockoff_corr.svg",
                  correlation_svg(joint_correlation(std.values, knock), labels, "originals and knockoffs"))
    print(f"knockoff-knockoff dev={diag.knockoff_corr_dev:.4f} cross dev={diag.cross_corr_dev:.4f} "
          f"sum(s)={float(np.sum(model.s)):.4f}")
    return EXIT_OK


# --- grad-check ----------------------------------------------------------------

def cmd_grad_check(args) -> int:
    cfg = _config(args)
    fields = {**GRAD_CHECK_FORECASTER, "seed": cfg.seed, **cfg.raw.get("forecaster", {})}
    try:
        fc = ForecasterConfig(**fields)
    except ForecasterError as exc:
        raise ConfigError(str(exc)) from None
    gc = cfg.grad_check
    probe = np.random.default_rng(fc.seed).normal(size=(fc.context + fc.horizon, gc["n_vars"]))
    err = gradient_check(fc, probe, gc["step"])
    passed = err < gc["tolerance"]
    if args.out:
        write_json(cfg.out / "grad_check.json",
                   {"max_rel_error": err, "tolerance": gc["tolerance"], "step": gc["step"], "passed": passed,
                    "n_vars": gc["n_vars"], "hidden": fc.hidden_for(gc["n_vars"]), "context": fc.context,
                    "horizon": fc.horizon})
    print(f"max relative error {err:.3e} ({'ok' if passed else 'FAILED'}, tolerance {gc['tolerance']:g})")
    return EXIT_OK if passed else EXIT_RUNTIME


COMMANDS = {
    "synth": cmd_synth,
    "discover": cmd_discover,
    "eval": cmd_eval,
    "benchmark": cmd_benchmark,
    "knockoff-diag": cmd_knockoff_diag,
    "grad-check": cmd_grad_check,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, ReportError) as exc:
        print(f"gcause {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SeriesError, ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"gcause {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
