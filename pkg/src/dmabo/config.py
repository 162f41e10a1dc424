"""Experiment configuration: parsing, validation, normalization.

Configs are JSON documents. ``parse`` materializes every default so that
serialize(parse(c)) is a fixed point (the normalized form).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .algorithm import AlgoConfig
from .errors import ConfigError, InputError
from .kernels import KernelSpec
from .problems import (ProblemInstance, load_instance, make_gp_instance,
                       make_oscillation_example, make_power_allocation)

METHODS = ("dmabo", "dcei", "penalty")

_ALGO_DEFAULTS = {
    "T": 200,
    "delta": 0.1,
    "beta_mode": "constant",
    "beta_value": 3.0,
    "model_noise": 0.02 ** 2,
    "eta": None,
    "eps_mode": "manual",
    "eps_value": 0.0,
    "bounds_mode": "gp",
    "dual_init": "zero",
    "lambda1_divisor": "m",
}

_PROBLEM_DEFAULTS = {
    "gp": {"kind": "gp", "n_agents": 3, "m": 2, "grid_size": 50, "seed": 7,
           "lengthscale": 0.2, "output_scale": 1.0, "sigma_noise": 0.02,
           "slack_target": 0.05, "extra_shift": 0.0},
    "power": {"kind": "power", "n_agents": 3, "total_power": 3.0,
              "p_bounds": [0.0, 2.0], "grid_size": 21, "utility_seed": 0,
              "sigma_noise": 0.02},
    "oscillation": {"kind": "oscillation"},
    "instance_file": {"kind": "instance_file", "path": None},
}


@dataclass(eq=False)
class ExperimentConfig:
    problem: dict
    method: str = "dmabo"
    penalty_q: float = 5.0
    algo: dict = field(default_factory=dict)
    seeds: list[int] = field(default_factory=lambda: [0])
    out: str = "out"

    def algo_config(self) -> AlgoConfig:
        return AlgoConfig(**self.algo)

    def build_problem(self) -> ProblemInstance:
        p = dict(self.problem)
        kind = p.pop("kind")
        if kind == "gp":
            kernel = KernelSpec(lengthscale=p.pop("lengthscale"),
                                output_scale=p.pop("output_scale"))
            return make_gp_instance(p.pop("n_agents"), p.pop("m"), kernel,
                                    p.pop("grid_size"), p.pop("seed"), **p)
        if kind == "power":
            return make_power_allocation(p.pop("n_agents"), p.pop("total_power"),
                                         p.pop("p_bounds"), p.pop("grid_size"),
                                         p.pop("utility_seed"), **p)
        if kind == "oscillation":
            return make_oscillation_example()
        if kind == "instance_file":
            return load_instance(p["path"])
        raise ConfigError(f"unknown problem kind {kind!r}")

    def to_json(self) -> dict:
        return {
            "problem": dict(sorted(self.problem.items())),
            "method": self.method,
            "penalty_q": self.penalty_q,
            "algo": dict(sorted(self.algo.items())),
            "seeds": list(self.seeds),
            "out": self.out,
        }


def parse_config(blob: dict) -> ExperimentConfig:
    """Validate a raw config dict and materialize every default."""
    if not isinstance(blob, dict):
        raise ConfigError("config must be a JSON object")
    known = {"problem", "method", "penalty_q", "algo", "seeds", "out"}
    unknown = set(blob) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    raw_problem = blob.get("problem")
    if not isinstance(raw_problem, dict) or "kind" not in raw_problem:
        raise ConfigError("config needs a 'problem' object with a 'kind'")
    kind = raw_problem["kind"]
    if kind not in _PROBLEM_DEFAULTS:
        raise ConfigError(f"unknown problem kind {kind!r}; "
                          f"expected one of {sorted(_PROBLEM_DEFAULTS)}")
    problem = dict(_PROBLEM_DEFAULTS[kind])
    extra = set(raw_problem) - set(problem)
    if extra:
        raise ConfigError(f"unknown problem keys for kind {kind!r}: {sorted(extra)}")
    problem.update(raw_problem)
    if kind == "instance_file" and not problem.get("path"):
        raise ConfigError("instance_file problems need a 'path'")

    method = blob.get("method", "dmabo")
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")

    algo = dict(_ALGO_DEFAULTS)
    raw_algo = blob.get("algo", {})
    extra = set(raw_algo) - set(algo)
    if extra:
        raise ConfigError(f"unknown algo keys: {sorted(extra)}")
    algo.update(raw_algo)
    if algo["T"] < 0:
        raise ConfigError("algo.T must be nonnegative")
    if method != "dmabo" and algo["eps_mode"] != "manual":
        raise ConfigError("eps modes eps1/eps2 are only valid for method=dmabo")

    seeds = blob.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds or not all(
            isinstance(s, int) for s in seeds):
        raise ConfigError("seeds must be a nonempty list of integers")

    try:
        config = ExperimentConfig(problem=problem, method=method,
                                  penalty_q=float(blob.get("penalty_q", 5.0)),
                                  algo=algo, seeds=seeds,
                                  out=str(blob.get("out", "out")))
        config.algo_config()  # validates algo fields eagerly
    except InputError as exc:
        raise ConfigError(str(exc)) from exc
    return config


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            blob = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: "
                          f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_config(blob)


def save_config(config: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config.to_json(), fh, indent=1, sort_keys=True)
