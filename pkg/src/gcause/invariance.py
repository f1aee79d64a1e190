"""Group-level invariance tests on a trained forecaster.

For an ordered pair of groups ``(i, j)`` the forecaster is run twice over
the same forecast windows: once on the observed context and once with the
context columns of group ``i`` swapped for fresh knockoff draws. If group
``i`` does not cause group ``j``, the residuals of every node in ``j`` keep
their distribution; a two-sample Kolmogorov-Smirnov test per node, Holm
adjusted across the nodes of ``j``, decides. One affected node is enough to
declare the link.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .forecaster import ForecasterConfig, TrainedForecaster, predict, train
from .knockoff import KnockoffModel, fit_gaussian, sample_knockoffs
from .series import GroupPartition, MultivariateSeries, SeriesError, WindowSet, make_windows, standardize

logger = logging.getLogger(__name__)

LABELS = ("->", "<-", "<->", "none")
MIN_WINDOWS = 5
RECOMMENDED_WINDOWS = 30
SMALL_LAMBDA = 0.18


class InferenceError(ValueError):
    pass


@dataclass(frozen=True)
class InferenceConfig:
    alpha: float = 0.05
    eps: float = 1e-2
    knockoff_seed: int = 0
    correction: str = "holm"  # or "any-raw"
    window_stride: int | None = None  # None -> forecast horizon (non-overlapping)
    knockoff_method: str = "sdp_coordinate"
    shrinkage: float | str = "auto"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InferenceError("alpha must lie in (0, 1)")
        if not self.eps > 0:
            raise InferenceError("eps must be > 0")
        if self.correction not in ("holm", "any-raw"):
            raise InferenceError(f"unknown correction {self.correction!r}")


# --- residuals -------------------------------------------------------------

def window_residual(actual, predicted_mu, eps: float = 1e-2):
    """Mean relative absolute error over the horizon (last-but-one axis for arrays).

    ``|Z_t - Zhat_t| / max(|Z_t|, eps)`` averaged over time; the floor keeps
    the ratio finite when the observed value is near zero.
    """
    actual = np.asarray(actual, dtype=float)
    predicted_mu = np.asarray(predicted_mu, dtype=float)
    if actual.shape != predicted_mu.shape:
        raise InferenceError(f"length mismatch: {actual.shape} vs {predicted_mu.shape}")
    if eps <= 0:
        raise InferenceError("eps must be > 0")
    rel = np.abs(actual - predicted_mu) / np.maximum(np.abs(actual), eps)
    axis = 0 if rel.ndim == 1 else -2
    return rel.mean(axis=axis)


@dataclass(frozen=True)
class ResidualSample:
    targets: tuple[int, ...]
    values: np.ndarray  # (n_windows, len(targets))
    interventional: bool = False

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def of(self, var: int) -> np.ndarray:
        return self.values[:, self.targets.index(var)]


def _values(series) -> np.ndarray:
    return series.values if isinstance(series, MultivariateSeries) else np.asarray(series, dtype=float)


def clean_residuals(model: TrainedForecaster, series, windows: WindowSet, targets: Sequence[int],
                    eps: float = 1e-2) -> ResidualSample:
    values = _values(series)
    targets = tuple(int(t) for t in targets)
    traj = predict(model, windows.contexts(values), windows.horizon)
    res = window_residual(windows.targets(values)[..., targets], traj.mu[..., targets], eps)
    return ResidualSample(targets, res, interventional=False)


def intervened_contexts(series, windows: WindowSet, source: Sequence[int], knockoff_model: KnockoffModel,
                        seed) -> np.ndarray:
    """Context blocks with the ``source`` columns replaced by knockoffs.

    Window ``k`` draws its knockoff rows from ``default_rng((*seed, k))``,
    so every window gets an independent realisation.
    """
    values = _values(series)
    base = tuple(np.atleast_1d(seed).tolist())
    source = list(source)
    ctx = windows.contexts(values).copy()
    for k, w in enumerate(windows):
        knock = sample_knockoffs(knockoff_model, values[w.context_slice], seed=(*base, k))
        ctx[k][:, source] = knock[:, source]
    return ctx


def interventional_residuals(model: TrainedForecaster, series, windows: WindowSet, source_group: Sequence[int],
                             targets: Sequence[int], knockoff_model: KnockoffModel, seed,
                             eps: float = 1e-2) -> ResidualSample:
    """Residuals of ``targets`` when the context of ``source_group`` is set to knockoffs.

    Only conditioning values change; the observed target windows stay as
    they are.
    """
    source_group = tuple(int(s) for s in source_group)
    targets = tuple(int(t) for t in targets)
    if set(source_group) & set(targets):
        raise InferenceError("source and target variable sets overlap")
    values = _values(series)
    ctx = intervened_contexts(values, windows, source_group, knockoff_model, seed)
    traj = predict(model, ctx, windows.horizon)
    res = window_residual(windows.targets(values)[..., targets], traj.mu[..., targets], eps)
    return ResidualSample(targets, res, interventional=True)


# --- Kolmogorov-Smirnov ----------------------------------------------------

@dataclass(frozen=True)
class KSResult:
    statistic: float  # sqrt(q r / (q + r)) * D
    D: float
    q: int
    r: int
    pvalue: float


def kolmogorov_sf(lam: float) -> float:
    """Asymptotic Kolmogorov survival function ``2 sum_k (-1)^(k-1) exp(-2 k^2 lam^2)``.

    Below ``lam = 0.18`` the function equals 1 to within 1e-15 while the
    alternating series would need an enormous number of terms, so 1 is
    returned directly.
    """
    if lam < SMALL_LAMBDA:
        return 1.0
    total, k = 0.0, 1
    while True:
        term = math.exp(-2.0 * k * k * lam * lam)
        total += term if k % 2 else -term
        if term < 1e-12:
            break
        k += 1
    return min(max(2.0 * total, 0.0), 1.0)


def ecdf_sup_distance(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.sort(a), np.sort(b)
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_two_sample(a, b) -> KSResult:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise InferenceError("KS test needs two non-empty samples")
    q, r = a.size, b.size
    D = ecdf_sup_distance(a, b)
    C = math.sqrt(q * r / (q + r)) * D
    p = 1.0 if D == 0 else kolmogorov_sf(C)
    return KSResult(C, D, q, r, p)


def holm(pvalues) -> np.ndarray:
    """Holm step-down adjusted p-values, returned in input order."""
    p = np.asarray(pvalues, dtype=float)
    m = p.size
    order = np.argsort(p, kind="stable")
    stepped = np.maximum.accumulate(p[order] * (m - np.arange(m)))
    adjusted = np.empty(m)
    adjusted[order] = np.minimum(stepped, 1.0)
    return adjusted


# --- group tests -------------------------------------------------------------

@dataclass
class EdgeTest:
    src: int
    dst: int
    targets: tuple[int, ...]
    results: list[KSResult]
    adjusted: np.ndarray
    causes: bool
    clean: ResidualSample | None = field(default=None, repr=False)
    intervened: ResidualSample | None = field(default=None, repr=False)

    @property
    def pvalues(self) -> list[float]:
        return [r.pvalue for r in self.results]


def test_group_edge(model: TrainedForecaster, series, windows: WindowSet, partition: GroupPartition,
                    i: int, j: int, knockoff_model: KnockoffModel, config: InferenceConfig,
                    clean: ResidualSample | None = None) -> EdgeTest:
    """Does intervening on group ``i`` shift the residuals of any node of group ``j``?"""
    if i == j:
        raise InferenceError("source and target groups must differ")
    source, targets = partition.indices(i), partition.indices(j)
    if clean is None:
        clean = clean_residuals(model, series, windows, targets, config.eps)
    else:
        clean = ResidualSample(targets, np.column_stack([clean.of(t) for t in targets]), False)
    seed = (config.knockoff_seed, i, j)
    tilde = interventional_residuals(model, series, windows, source, targets, knockoff_model, seed, config.eps)
    results = [ks_two_sample(clean.values[:, k], tilde.values[:, k]) for k in range(len(targets))]
    raw = np.array([r.pvalue for r in results])
    adjusted = holm(raw)
    decisive = adjusted if config.correction == "holm" else raw
    causes = bool(decisive.min() <= config.alpha)
    return EdgeTest(i, j, targets, results, adjusted, causes, clean, tilde)


# `test_` prefix is the domain name; keep pytest from collecting it
test_group_edge.__test__ = False


@dataclass(frozen=True)
class Link:
    a: int
    b: int
    label: str


def combine(forward: bool, backward: bool) -> str:
    return {(True, False): "->", (False, True): "<-", (True, True): "<->"}.get((forward, backward), "none")


@dataclass
class DecisionMatrix:
    partition: GroupPartition
    pairs: list[EdgeTest]
    links: list[Link]
    alpha: float
    config_echo: dict = field(default_factory=dict)

    def pair(self, i: int, j: int) -> EdgeTest:
        for p in self.pairs:
            if (p.src, p.dst) == (i, j):
                return p
        raise KeyError((i, j))

    def label(self, a: int, b: int) -> str:
        for link in self.links:
            if (link.a, link.b) == (a, b):
                return link.label
            if (link.a, link.b) == (b, a):
                return {"->": "<-", "<-": "->"}.get(link.label, link.label)
        raise KeyError((a, b))

    def to_json(self) -> dict:
        names = self.partition.names
        return {
            "groups": self.partition.to_json(),
            "pairs": [
                {
                    "src": names[p.src],
                    "dst": names[p.dst],
                    "targets": list(p.targets),
                    "node_pvalues": [r.pvalue for r in p.results],
                    "adjusted": [float(v) for v in p.adjusted],
                    "statistic": [r.statistic for r in p.results],
                    "D": [r.D for r in p.results],
                    "n": [r.q for r in p.results],
                    "verdict": "causes" if p.causes else "not-causes",
                }
                for p in self.pairs
            ],
            "links": [{"a": names[l.a], "b": names[l.b], "label": l.label} for l in self.links],
            "alpha": self.alpha,
            "config_echo": self.config_echo,
        }

    @classmethod
    def from_json(cls, data: dict) -> "DecisionMatrix":
        partition = GroupPartition.from_json(data["groups"])
        idx = {name: g for g, name in enumerate(partition.names)}
        pairs = []
        for p in data["pairs"]:
            results = [KSResult(c, d, n, n, pv) for c, d, n, pv in
                       zip(p["statistic"], p["D"], p["n"], p["node_pvalues"])]
            pairs.append(EdgeTest(idx[p["src"]], idx[p["dst"]], tuple(p["targets"]), results,
                                  np.asarray(p["adjusted"]), p["verdict"] == "causes"))
        links = [Link(idx[l["a"]], idx[l["b"]], l["label"]) for l in data["links"]]
        return cls(partition, pairs, links, float(data["alpha"]), data.get("config_echo", {}))


@dataclass
class DiscoveryRun:
    """Everything :func:`discover` built along the way, for reports and plots."""

    decisions: DecisionMatrix
    model: TrainedForecaster
    knockoffs: KnockoffModel
    windows: WindowSet
    standardized: MultivariateSeries


def discover(series: MultivariateSeries, partition: GroupPartition,
             forecaster_config: ForecasterConfig | None = None,
             inference_config: InferenceConfig | None = None, workers: int = 1,
             return_run: bool = False):
    """Train one forecaster, fit one knockoff model and test every ordered group pair."""
    fc = forecaster_config or ForecasterConfig()
    ic = inference_config or InferenceConfig()
    partition.check(series.N)
    std_series, _ = standardize(series)
    values = std_series.values

    stride = ic.window_stride or fc.horizon
    try:
        windows = make_windows(series.T, fc.context, fc.horizon, stride)
    except SeriesError as exc:
        raise InferenceError(f"series too short for forecasting windows: {exc}") from None
    if len(windows) < MIN_WINDOWS:
        raise InferenceError(f"only {len(windows)} forecast windows; need at least {MIN_WINDOWS}")
    if len(windows) < RECOMMENDED_WINDOWS:
        warnings.warn(f"only {len(windows)} forecast windows; KS tests have little power below "
                      f"{RECOMMENDED_WINDOWS}", stacklevel=2)

    train_windows = make_windows(series.T, fc.context, fc.horizon, fc.train_stride)
    model = train(values, train_windows, fc)
    knock = fit_gaussian(values, ic.shrinkage, ic.knockoff_method)
    clean = clean_residuals(model, values, windows, range(series.N), ic.eps)

    ordered = [(i, j) for i in range(partition.G) for j in range(partition.G) if i != j]

    def run(pair):
        return test_group_edge(model, values, windows, partition, pair[0], pair[1], knock, ic, clean)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            pairs = list(pool.map(run, ordered))
    else:
        pairs = [run(p) for p in ordered]

    verdict = {(p.src, p.dst): p.causes for p in pairs}
    links = [Link(a, b, combine(verdict[(a, b)], verdict[(b, a)]))
             for a in range(partition.G) for b in range(a + 1, partition.G)]
    echo = {"forecaster": asdict(fc), "inference": asdict(ic), "n_windows": len(windows),
            "best_epoch": model.best_epoch, "knockoff_shrinkage": knock.shrinkage}
    decisions = DecisionMatrix(partition, pairs, links, ic.alpha, echo)
    if return_run:
        return DiscoveryRun(decisions, model, knock, windows, std_series)
    return decisions
