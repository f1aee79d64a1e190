"""Run configuration: a JSON document checked against a bundled schema.

A config names its data either through ``input`` (a CSV file plus a
``groups`` mapping from group name to column names or indices) or through
``synth`` (generator settings). ``forecaster`` and ``inference`` sections
override the library defaults field by field. A top-level ``seed`` is the
default for every seed the run consumes; a seed set inside a section wins.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .forecaster import ForecasterConfig, ForecasterError
from .invariance import InferenceConfig, InferenceError
from .series import GroupPartition, MultivariateSeries, SeriesError, load_csv
from .synthgen import CausalGraph, SimConfig, sample_graph, simulate

SYNTH_DEFAULTS = {"T": 1000, "noise_std": 1.0, "max_lag": 2, "burn_in": 100, "direction": [0, 1]}
BENCHMARK_DEFAULTS = {
    "densities": [0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
    "seeds": 3,
    "groups": [2, 2],
    "T": 1000,
    "noise_std": 1.0,
    "max_lag": 2,
    "burn_in": 100,
    "null": False,
    "workers": 1,
}
GRAD_CHECK_DEFAULTS = {"n_vars": 3, "step": 1e-5, "tolerance": 1e-4}
GRAD_CHECK_FORECASTER = {"context": 5, "horizon": 3, "hidden": 4}


class ConfigError(ValueError):
    """The configuration is malformed or inconsistent; nothing was run."""


def load_schema(name: str) -> dict:
    text = resources.files("gcause").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def _validate(doc, schema_name: str, error=ConfigError) -> None:
    schema = load_schema(schema_name)
    validator = jsonschema.Draft202012Validator(schema)
    problems = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if problems:
        first = problems[0]
        where = "/".join(str(p) for p in first.absolute_path) or "<root>"
        raise error(f"{schema_name} invalid at {where}: {first.message}")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out: Path = Path("gcause-out")
    base_dir: Path = Path(".")
    input: dict | None = None
    groups: dict | None = None
    synth: dict | None = None
    benchmark: dict = field(default_factory=lambda: dict(BENCHMARK_DEFAULTS))
    forecaster: ForecasterConfig = field(default_factory=ForecasterConfig)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    grad_check: dict = field(default_factory=lambda: dict(GRAD_CHECK_DEFAULTS))
    raw: dict = field(default_factory=dict)  # the validated document as written

    def echo(self) -> dict:
        """Every resolved setting, defaults included. The output directory is left
        out so that the same config run into two places reports identically."""
        doc = {"seed": self.seed}
        if self.input is not None:
            doc["input"] = dict(self.input)
            doc["groups"] = {k: list(v) for k, v in self.groups.items()}
        if self.synth is not None:
            doc["synth"] = dict(self.synth)
        doc["forecaster"] = asdict(self.forecaster)
        doc["inference"] = asdict(self.inference)
        return doc

    def input_path(self) -> Path:
        p = Path(self.input["path"])
        return p if p.is_absolute() else self.base_dir / p


def from_dict(doc: dict, base_dir: str | Path = ".", seed: int | None = None,
              out: str | Path | None = None) -> RunConfig:
    """Validate ``doc`` and fill in defaults. ``seed`` and ``out`` come from the command line."""
    _validate(doc, "config")
    top_seed = int(doc.get("seed", 0)) if seed is None else int(seed)
    out_dir = Path(out) if out is not None else Path(doc.get("out", "gcause-out"))

    if "input" in doc and "synth" in doc:
        raise ConfigError("use either an 'input' or a 'synth' section, not both")
    inp, groups = None, None
    if "input" in doc:
        if "groups" not in doc:
            raise ConfigError("an 'input' section needs a 'groups' mapping")
        inp = {"path": doc["input"]["path"], "header": doc["input"].get("header", False)}
        groups = {k: list(v) for k, v in doc["groups"].items()}
    elif "groups" in doc:
        raise ConfigError("'groups' applies to CSV input; synthetic runs size groups in 'synth'")

    synth = None
    if "synth" in doc:
        synth = {**SYNTH_DEFAULTS, "seed": top_seed, **doc["synth"]}
        if synth["burn_in"] < synth["max_lag"]:
            raise ConfigError("synth.burn_in must be >= synth.max_lag")
        direction = synth["direction"]
        if direction is not None and (direction[0] == direction[1]
                                      or max(direction) >= len(synth["groups"])):
            raise ConfigError(f"synth.direction {direction} must name two different existing groups")

    bench = {**BENCHMARK_DEFAULTS, **doc.get("benchmark", {})}
    try:
        fc = ForecasterConfig(**{"seed": top_seed, **doc.get("forecaster", {})})
        ic = InferenceConfig(**{"knockoff_seed": top_seed, **doc.get("inference", {})})
    except (ForecasterError, InferenceError) as exc:
        raise ConfigError(str(exc)) from None
    grad = {**GRAD_CHECK_DEFAULTS, **doc.get("grad_check", {})}
    return RunConfig(top_seed, out_dir, Path(base_dir), inp, groups, synth, bench, fc, ic, grad, doc)


def load_config(path: str | Path | None, seed: int | None = None, out: str | Path | None = None) -> RunConfig:
    if path is None:
        return from_dict({}, ".", seed, out)
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return from_dict(doc, path.parent, seed, out)


def synth_instance(synth: dict) -> tuple[CausalGraph, MultivariateSeries]:
    partition = GroupPartition.from_sizes(synth["groups"])
    direction = None if synth["direction"] is None else tuple(synth["direction"])
    graph = sample_graph(partition, synth["density"], direction, synth["max_lag"], synth["seed"])
    sim = SimConfig(length=synth["T"], burn_in=synth["burn_in"], noise_std=synth["noise_std"],
                    max_lag=synth["max_lag"], density=synth["density"], seed=synth["seed"])
    return graph, simulate(graph, sim)


@dataclass
class LoadedInput:
    series: MultivariateSeries
    partition: GroupPartition
    graph: CausalGraph | None
    info: dict


def load_input(cfg: RunConfig) -> LoadedInput:
    """Series and partition named by the config; a ``synth`` config also yields its graph.

    CSV problems and bad group mappings raise :class:`ConfigError`.
    """
    if cfg.input is not None:
        path = cfg.input_path()
        try:
            series = load_csv(path, header=cfg.input["header"])
        except FileNotFoundError:
            raise ConfigError(f"input file {path} does not exist") from None
        except SeriesError as exc:
            raise ConfigError(f"cannot load {path}: {exc}") from None
        try:
            partition = GroupPartition.from_mapping(cfg.groups, series.names)
            partition.check(series.N)
        except SeriesError as exc:
            raise ConfigError(f"invalid groups: {exc}") from None
        info = {"source": "csv", "path": cfg.input["path"], "T": series.T, "N": series.N,
                "names": list(series.names)}
        return LoadedInput(series, partition, None, info)
    if cfg.synth is not None:
        graph, series = synth_instance(cfg.synth)
        info = {"source": "synth", "T": series.T, "N": series.N, "names": list(series.names)}
        return LoadedInput(series, graph.partition, graph, info)
    raise ConfigError("config needs an 'input' or a 'synth' section")

