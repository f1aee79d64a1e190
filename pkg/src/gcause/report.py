"""Run reports: assembly, schema validation, canonical JSON and score aggregation."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .config import LoadedInput, RunConfig, _validate
from .invariance import DecisionMatrix, DiscoveryRun
from .plots import residual_histogram_svg, write_svg
from .synthgen import score_decisions

REPORT_SCHEMA = "gcause-report/1"


class ReportError(ValueError):
    pass


def plain(obj):
    """Recursively turn numpy scalars and arrays into JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps(doc) -> str:
    """Canonical text: two-space indent, shortest round-trip floats, trailing newline."""
    return json.dumps(plain(doc), indent=2, allow_nan=False) + "\n"


def write_json(path: str | Path, doc) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(dumps(doc))
    tmp.replace(path)  # readers never see a half-written file
    return path


def read_json(path: str | Path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ReportError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ReportError(f"{path} is not valid JSON: {exc}") from None


def validate_report(doc: dict) -> None:
    _validate(plain(doc), "report", ReportError)


def build_report(cfg: RunConfig, loaded: LoadedInput, run: DiscoveryRun) -> dict:
    doc = {
        "schema": REPORT_SCHEMA,
        "tool_version": __version__,
        "config": cfg.echo(),
        "input": loaded.info,
        "decisions": run.decisions.to_json(),
        "training": {
            "best_epoch": run.model.best_epoch,
            "loss_trace": list(run.model.loss_trace),
            "val_trace": list(run.model.val_trace),
        },
        "knockoff": {
            "s": run.knockoffs.s,
            "shrinkage": run.knockoffs.shrinkage,
            "method": run.knockoffs.method,
        },
    }
    if loaded.graph is not None and loaded.graph.direction:
        doc["score"] = score_decisions(run.decisions, loaded.graph)
    doc = plain(doc)
    validate_report(doc)
    return doc


def emit_pair_plots(run: DiscoveryRun, names: Sequence[str], out_dir: str | Path) -> list[Path]:
    """One SVG per ordered group pair: clean against intervened residuals of each target node."""
    part = run.decisions.partition
    paths = []
    for pair in run.decisions.pairs:
        src, dst = part.names[pair.src], part.names[pair.dst]
        svg = residual_histogram_svg(f"{src} -> {dst} ({'causes' if pair.causes else 'not-causes'})",
                                     [names[t] for t in pair.targets], pair.clean.values,
                                     pair.intervened.values, pair.pvalues)
        paths.append(write_svg(Path(out_dir) / f"{src}_to_{dst}.svg", svg))
    return paths


def score_null(decisions: DecisionMatrix) -> dict:
    """Scoring for an instance without any cross-group edge: ``none`` is the correct label."""
    labels = [link.label for link in decisions.links]
    correct = sum(label == "none" for label in labels) / len(labels)
    return {"correct": correct, "wrong": 1.0 - correct, "no_inference": 0.0}


def aggregate_scores(scores: Sequence[dict], decimals: int = 2) -> dict:
    """Mean of per-run fractions, rounded the way result tables report them."""
    if not scores:
        raise ReportError("no runs to aggregate")
    keys = ("correct", "wrong", "no_inference")
    mean = {k: float(np.mean([s[k] for s in scores])) for k in keys}
    return {**{k: round(mean[k], decimals) for k in keys}, "runs": len(scores)}


def score_report(report: dict, graph) -> dict:
    """Score a stored report against a ground-truth graph."""
    try:
        decisions = DecisionMatrix.from_json(report["decisions"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ReportError(f"report has no usable decisions: {exc}") from None
    try:
        return score_decisions(decisions, graph)
    except ValueError as exc:
        raise ReportError(str(exc)) from None


__all__ = [
    "REPORT_SCHEMA", "ReportError", "aggregate_scores", "build_report", "dumps",
    "emit_pair_plots", "plain", "read_json", "score_null", "score_report", "validate_report", "write_json",
]
