"""Multivariate series container, group partitions, windowing and scaling.

Everything downstream (the generator, the knockoff sampler, the forecaster
and the invariance tests) exchanges data through the types defined here.
Values are stored as ``(T, N)`` float64 arrays: rows are time, columns are
variables.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class SeriesError(ValueError):
    """Invalid series, partition, window layout or scaling request."""


class CSVParseError(SeriesError):
    """Malformed CSV input. ``row`` and ``col`` are 1-based when known."""

    def __init__(self, message: str, row: int | None = None, col: int | None = None):
        super().__init__(message)
        self.row = row
        self.col = col


class EmptyCSVError(SeriesError):
    pass


@dataclass(frozen=True)
class MultivariateSeries:
    values: np.ndarray
    names: tuple[str, ...] = ()
    dt: str = ""

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 2:
            raise SeriesError(f"values must be 2-D (T, N), got shape {values.shape}")
        T, N = values.shape
        if T < 1 or N < 2:
            raise SeriesError(f"need T >= 1 and N >= 2, got T={T}, N={N}")
        if not np.all(np.isfinite(values)):
            t, j = np.argwhere(~np.isfinite(values))[0]
            raise SeriesError(f"non-finite value at row {t}, column {j}")
        names = tuple(self.names) if self.names else default_names(N)
        if len(names) != N:
            raise SeriesError(f"{len(names)} names for {N} columns")
        if len(set(names)) != N:
            raise SeriesError("variable names must be unique")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", names)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray) -> "MultivariateSeries":
        return MultivariateSeries(values, self.names, self.dt)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SeriesError(f"unknown variable {name!r}") from None


def default_names(n: int) -> tuple[str, ...]:
    return tuple(f"Z{i + 1}" for i in range(n))


@dataclass(frozen=True)
class GroupPartition:
    """Ordered list of ``(name, variable indices)``.

    Construction does not validate; call :func:`validate_partition` (or
    :meth:`check`) against a concrete variable count.
    """

    groups: tuple[tuple[str, tuple[int, ...]], ...]

    def __post_init__(self):
        groups = tuple((str(name), tuple(int(i) for i in idx)) for name, idx in self.groups)
        object.__setattr__(self, "groups", groups)

    @classmethod
    def from_sizes(cls, sizes: Sequence[int], names: Sequence[str] | None = None) -> "GroupPartition":
        names = list(names) if names is not None else [f"G{i + 1}" for i in range(len(sizes))]
        groups, start = [], 0
        for name, size in zip(names, sizes):
            groups.append((name, tuple(range(start, start + int(size)))))
            start += int(size)
        return cls(tuple(groups))

    @classmethod
    def from_mapping(cls, mapping: dict, names: Sequence[str] | None = None) -> "GroupPartition":
        """Build from ``{group: [index or column name, ...]}``."""
        groups = []
        for gname, members in mapping.items():
            idx = []
            for m in members:
                if isinstance(m, str):
                    if names is None or m not in names:
                        raise SeriesError(f"group {gname!r} references unknown column {m!r}")
                    idx.append(list(names).index(m))
                else:
                    idx.append(int(m))
            groups.append((gname, tuple(idx)))
        return cls(tuple(groups))

    @property
    def G(self) -> int:
        return len(self.groups)

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.groups]

    @property
    def sizes(self) -> list[int]:
        return [len(idx) for _, idx in self.groups]

    def indices(self, g: int) -> tuple[int, ...]:
        return self.groups[g][1]

    def group_of(self, var: int) -> int:
        for g, (_, idx) in enumerate(self.groups):
            if var in idx:
                return g
        raise SeriesError(f"variable {var} is not in any group")

    def to_json(self) -> list[dict]:
        return [{"name": name, "members": list(idx)} for name, idx in self.groups]

    @classmethod
    def from_json(cls, data: list[dict]) -> "GroupPartition":
        return cls(tuple((d["name"], tuple(d["members"])) for d in data))

    def check(self, n_vars: int) -> None:
        problem = validate_partition(self, n_vars)
        if problem is not None:
            raise SeriesError(problem)


def validate_partition(partition: GroupPartition, n_vars: int) -> str | None:
    """Return a description of the first violated invariant, or ``None`` if valid."""
    if partition.G < 2:
        return f"need at least 2 groups, got {partition.G}"
    seen: dict[int, str] = {}
    for name, idx in partition.groups:
        if len(idx) == 0:
            return f"empty group {name!r}"
        for i in idx:
            if not 0 <= i < n_vars:
                return f"index {i} in group {name!r} out of range for {n_vars} variables"
            if i in seen:
                return f"overlap at index {i} (groups {seen[i]!r} and {name!r})"
            seen[i] = name
    for i in range(n_vars):
        if i not in seen:
            return f"gap at index {i}"
    return None


@dataclass(frozen=True)
class Window:
    t0: int
    context: int
    horizon: int

    @property
    def context_slice(self) -> slice:
        return slice(self.t0 - self.context, self.t0)

    @property
    def target_slice(self) -> slice:
        return slice(self.t0, self.t0 + self.horizon)


@dataclass(frozen=True)
class WindowSet:
    windows: tuple[Window, ...]
    context: int
    horizon: int
    stride: int

    def __len__(self) -> int:
        return len(self.windows)

    def __iter__(self):
        return iter(self.windows)

    @property
    def starts(self) -> np.ndarray:
        return np.array([w.t0 for w in self.windows], dtype=int)

    def contexts(self, values: np.ndarray) -> np.ndarray:
        """Stack context blocks into a ``(n, C, N)`` array."""
        return np.stack([values[w.context_slice] for w in self.windows])

    def targets(self, values: np.ndarray) -> np.ndarray:
        """Stack target blocks into a ``(n, T_h, N)`` array."""
        return np.stack([values[w.target_slice] for w in self.windows])


def make_windows(series_length: int, context: int, horizon: int, stride: int | None = None,
                 start: int = 0) -> WindowSet:
    """Enumerate ``(context, target)`` windows left to right.

    ``stride`` defaults to ``horizon`` (non-overlapping targets). ``start``
    offsets the first context slice, which lets callers window a sub-range.
    """
    if stride is None:
        stride = horizon
    if context < 1 or horizon < 1 or stride < 1:
        raise SeriesError("context, horizon and stride must all be >= 1")
    if context + horizon > series_length - start:
        raise SeriesError(
            f"context + horizon = {context + horizon} exceeds available length {series_length - start}"
        )
    n = (series_length - start - context - horizon) // stride + 1
    windows = tuple(Window(start + context + k * stride, context, horizon) for k in range(n))
    return WindowSet(windows, context, horizon, stride)


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray
    names: tuple[str, ...] = field(default=())

    def transform(self, series: MultivariateSeries) -> MultivariateSeries:
        return series.with_values((series.values - self.mean) / self.std)

    def inverse_transform(self, series: MultivariateSeries) -> MultivariateSeries:
        return series.with_values(series.values * self.std + self.mean)


MIN_STD = 1e-12


def standardize(series: MultivariateSeries, fit_range: slice | tuple[int, int] | None = None
                ) -> tuple[MultivariateSeries, Standardizer]:
    """Per-variable affine scaling to zero mean and unit (population) std over ``fit_range``."""
    if fit_range is None:
        fit_range = slice(0, series.T)
    elif isinstance(fit_range, tuple):
        fit_range = slice(*fit_range)
    block = series.values[fit_range]
    if block.shape[0] == 0:
        raise SeriesError("empty fit range")
    mean = block.mean(axis=0)
    std = block.std(axis=0)
    for j in np.flatnonzero(std < MIN_STD):
        raise SeriesError(f"variable {series.names[j]!r} is constant over the fit range")
    scaler = Standardizer(mean, std, series.names)
    return scaler.transform(series), scaler


def load_csv(path: str | Path, header: bool = False, dt: str = "") -> MultivariateSeries:
    """Read a comma-separated file; columns are variables, rows are time.

    Without a header, columns are named ``Z1..ZN``. Row numbers in errors
    count data rows from 1.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise EmptyCSVError(f"{path}: file is empty")
    names: tuple[str, ...] = ()
    body_offset = 1
    if header:
        names = tuple(c.strip() for c in rows[0])
        rows = rows[1:]
        body_offset = 2
        if not rows:
            raise EmptyCSVError(f"{path}: header but no data rows")
    width = len(names) if names else len(rows[0])
    values = np.empty((len(rows), width))
    for r, row in enumerate(rows):
        line = r + body_offset
        if len(row) != width:
            raise CSVParseError(f"{path}: row {r + 1} (line {line}) has {len(row)} fields, expected {width}",
                                row=r + 1)
        for c, cell in enumerate(row):
            try:
                values[r, c] = float(cell)
            except ValueError:
                raise CSVParseError(f"{path}: non-numeric value {cell!r} at row {r + 1}, column {c + 1}",
                                    row=r + 1, col=c + 1) from None
    return MultivariateSeries(values, names, dt)


def write_csv(series: MultivariateSeries, path: str | Path, header: bool = True) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            writer.writerow(series.names)
        for row in series.values:
            writer.writerow([repr(float(v)) for v in row])
