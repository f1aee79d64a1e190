"""Synthetic grouped benchmarks with a known group-level causal direction.

Each variable follows ``Z^j_t = sum_i c_i f_i(Z^{src_i}_{t - k_i}) + eta^j_t``
over its incoming edges, with ``f`` one of linear, quadratic or exponential
and Gaussian innovations ``eta``. Edges cross only from the cause group to
the effect group; intra-group and self-lag edges are drawn inside every
group.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .series import GroupPartition, MultivariateSeries, SeriesError

if TYPE_CHECKING:
    from .invariance import DecisionMatrix

LINK_TAGS = ("linear", "polynomial", "exponential")
CLAMP = 3.0
COEF_RANGE = (0.2, 0.8)
VARIANCE_GUARD = 10.0


class SimulationError(RuntimeError):
    pass


def link(tag: str, x: np.ndarray | float) -> np.ndarray | float:
    """Link function applied to a clamped argument; clamping keeps the recursion bounded."""
    x = np.clip(x, -CLAMP, CLAMP)
    if tag == "linear":
        return x
    if tag == "polynomial":
        return x * x
    if tag == "exponential":
        return np.exp(x)
    raise ValueError(f"unknown link function {tag!r}")


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    lag: int
    f: str
    coef: float


@dataclass(frozen=True)
class CausalGraph:
    n_vars: int
    edges: tuple[Edge, ...]
    partition: GroupPartition
    direction: tuple[tuple[int, int], ...]

    @property
    def max_lag(self) -> int:
        return max((e.lag for e in self.edges), default=1)

    def cross_edges(self, cause: int, effect: int) -> list[Edge]:
        p = self.partition
        return [e for e in self.edges if p.group_of(e.src) == cause and p.group_of(e.dst) == effect]

    def check(self) -> None:
        self.partition.check(self.n_vars)
        for e in self.edges:
            if e.lag < 1:
                raise SeriesError(f"edge {e} has lag < 1")
            if e.f not in LINK_TAGS:
                raise SeriesError(f"edge {e} has unknown link {e.f!r}")
        declared = set(self.direction)
        for i in range(self.partition.G):
            for j in range(self.partition.G):
                if i != j and bool(self.cross_edges(i, j)) != ((i, j) in declared):
                    raise SeriesError(f"declared direction disagrees with edges for groups ({i}, {j})")

    def to_json(self) -> dict:
        return {
            "n_vars": self.n_vars,
            "groups": self.partition.to_json(),
            "edges": [{"src": e.src, "dst": e.dst, "lag": e.lag, "f": e.f, "coef": e.coef} for e in self.edges],
            "direction": [list(d) for d in self.direction],
        }

    @classmethod
    def from_json(cls, data: dict) -> "CausalGraph":
        edges = tuple(Edge(int(e["src"]), int(e["dst"]), int(e["lag"]), e["f"], float(e["coef"]))
                      for e in data["edges"])
        return cls(int(data["n_vars"]), edges, GroupPartition.from_json(data["groups"]),
                   tuple((int(a), int(b)) for a, b in data["direction"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "CausalGraph":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class SimConfig:
    length: int = 1000
    burn_in: int = 100
    noise_std: float = 1.0
    max_lag: int = 2
    density: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("length must be >= 1")
        if self.max_lag < 1 or self.burn_in < self.max_lag:
            raise ValueError("need max_lag >= 1 and burn_in >= max_lag")
        if not self.noise_std > 0:
            raise ValueError("noise_std must be > 0")
        if not 0.0 < self.density <= 1.0:
            raise ValueError(f"density must lie in (0, 1], got {self.density}")


def _draw_edge(rng: np.random.Generator, src: int, dst: int, max_lag: int) -> Edge:
    lag = int(rng.integers(1, max_lag + 1))
    tag = LINK_TAGS[int(rng.integers(len(LINK_TAGS)))]
    magnitude = rng.uniform(*COEF_RANGE)
    sign = 1.0 if rng.random() < 0.5 else -1.0
    return Edge(src, dst, lag, tag, float(sign * magnitude))


def sample_graph(partition: GroupPartition, density: float, direction: tuple[int, int] | None = (0, 1),
                 max_lag: int = 2, seed: int = 0) -> CausalGraph:
    """Random graph with a single true group direction ``cause -> effect``.

    Every cross pair (cause member, effect member) and every pair ``a <= b``
    inside a group gets an edge with probability ``density``; ``a == b`` is a
    linear self-lag. If no cross edge is drawn, one is added uniformly at
    random. ``direction=None`` draws the intra-group structure only, which
    gives a null instance with independent groups.
    """
    n_vars = sum(partition.sizes)
    partition.check(n_vars)
    if not 0.0 < density <= 1.0:
        raise ValueError(f"density must lie in (0, 1], got {density}")
    if max_lag < 1:
        raise ValueError("max_lag must be >= 1")
    rng = np.random.default_rng(seed)

    edges = []
    declared: tuple[tuple[int, int], ...] = ()
    if direction is not None:
        cause, effect = direction
        if cause == effect:
            raise ValueError("cause and effect groups must differ")
        if not (0 <= cause < partition.G and 0 <= effect < partition.G):
            raise ValueError(f"direction {direction} refers to a missing group")
        declared = ((cause, effect),)
        cross_pairs = [(a, b) for a in partition.indices(cause) for b in partition.indices(effect)]
        for a, b in cross_pairs:
            if rng.random() < density:
                edges.append(_draw_edge(rng, a, b, max_lag))
        if not edges:
            a, b = cross_pairs[int(rng.integers(len(cross_pairs)))]
            edges.append(_draw_edge(rng, a, b, max_lag))
    for g in range(partition.G):
        members = partition.indices(g)
        for a in members:
            for b in members:
                # self-lags are AR terms; other intra edges follow index order so the
                # summary graph has no feedback loop for exp/quadratic links to run away on
                if a > b or rng.random() >= density:
                    continue
                edge = _draw_edge(rng, a, b, max_lag)
                if a == b:
                    edge = Edge(a, b, edge.lag, "linear", edge.coef)
                edges.append(edge)
    return CausalGraph(n_vars, tuple(edges), partition, declared)


def empty_graph(partition: GroupPartition) -> CausalGraph:
    return CausalGraph(sum(partition.sizes), (), partition, ())


def simulate(graph: CausalGraph, config: SimConfig, names: Sequence[str] | None = None) -> MultivariateSeries:
    """Run the lagged structural recursion and return ``config.length`` rows.

    Innovations are drawn up front as ``rng.normal(0, noise_std, (burn_in +
    length, N))`` from ``default_rng(config.seed)``. Rows before ``max_lag``
    are pure noise. After the burn-in is dropped, any column whose std
    exceeds 10 is rescaled to unit variance.
    """
    graph.check()
    N = graph.n_vars
    L = max(config.max_lag, graph.max_lag)
    total = config.burn_in + config.length
    rng = np.random.default_rng(config.seed)
    eta = rng.normal(0.0, config.noise_std, size=(total, N))
    Z = eta.copy()
    incoming: list[list[Edge]] = [[] for _ in range(N)]
    for e in graph.edges:
        incoming[e.dst].append(e)
    for t in range(L, total):
        for j in range(N):
            acc = 0.0
            for e in incoming[j]:
                acc += e.coef * link(e.f, Z[t - e.lag, e.src])
            Z[t, j] += acc
            if not np.isfinite(Z[t, j]):
                raise SimulationError(f"non-finite value for variable {j} at time step {t}")
    Z = Z[config.burn_in:]
    std = Z.std(axis=0)
    for j in np.flatnonzero(std > VARIANCE_GUARD):
        Z[:, j] = (Z[:, j] - Z[:, j].mean()) / std[j]
    return MultivariateSeries(Z, tuple(names) if names else (), "step")


def true_label(graph: CausalGraph, a: int, b: int) -> str:
    """Ground-truth link between groups ``a`` and ``b`` in the ``->``/``<-``/``<->``/``none`` alphabet."""
    fwd, back = (a, b) in graph.direction, (b, a) in graph.direction
    return {(True, False): "->", (False, True): "<-", (True, True): "<->"}.get((fwd, back), "none")


def score_decisions(predicted: "DecisionMatrix", truth: CausalGraph) -> dict[str, float]:
    """Fractions of correct, wrong and no-inference verdicts over truly linked group pairs.

    A predicted label equal to the true one is correct, ``none`` is no
    inference, anything else (reversed or a spurious extra direction) is
    wrong.
    """
    # group names are labels only; the member lists have to agree
    if [m for _, m in predicted.partition.groups] != [m for _, m in truth.partition.groups]:
        raise SeriesError("prediction and ground truth use different group partitions")
    counts = {"correct": 0, "wrong": 0, "no_inference": 0}
    tested = 0
    for link_ in predicted.links:
        expected = true_label(truth, link_.a, link_.b)
        if expected == "none":
            continue
        tested += 1
        if link_.label == expected:
            counts["correct"] += 1
        elif link_.label == "none":
            counts["no_inference"] += 1
        else:
            counts["wrong"] += 1
    if tested == 0:
        raise SeriesError("ground truth has no linked group pair to score")
    return {k: v / tested for k, v in counts.items()}
