"""Experiment configuration: TOML sections with per-experiment typed schemas.

A config file holds one ``[<experiment>]`` table per experiment, e.g.::

    [dobrushin]
    beta_J = [0.1, 0.15, 0.2, 0.25, 0.3]
    dimension = 2

Missing keys take their defaults; unknown sections or keys are rejected.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..errors import UsageError

__all__ = ["EXPERIMENTS", "SCHEMAS", "ExperimentConfig", "load_config", "parse_config", "dumps"]


@dataclass(frozen=True)
class Key:
    kind: type  # int, float, bool, str or list (of float/int)
    default: Any
    check: Callable[[Any], bool] = lambda v: True
    rule: str = ""
    item: type = float


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _all(pred):
    return lambda vs: len(vs) > 0 and all(pred(v) for v in vs)


def _even(v):
    return v >= 2 and v % 2 == 0


COMMON = {
    "seed": Key(int, 0, lambda v: 0 <= v < 2**64, "0 <= seed < 2^64"),
}

SCHEMAS: dict[str, dict[str, Key]] = {
    "kernel-table": {
        "times": Key(list, [0.5, 1.0, 2.0, 5.0], _all(_pos), "all > 0"),
        "n_delta": Key(int, 65, lambda v: v >= 2, ">= 2"),
    },
    "groundstate-scan": {
        "beta_J": Key(list, [0.5, 1.0, 5.0, 20.0], _all(_pos), "all > 0"),
        "times": Key(list, [1.0, 2.0, 4.0], _all(_pos), "all > 0"),
        "L": Key(int, 4, _even, "even >= 2"),
        "tolerance": Key(float, 1e-6, _pos, "> 0"),
    },
    "dobrushin": {
        "beta_J": Key(list, [0.1, 0.15, 0.2, 0.25, 0.3], _all(_nonneg), "all >= 0"),
        "dimension": Key(int, 2, lambda v: v >= 1, ">= 1"),
    },
    "girsanov-check": {
        "L": Key(int, 2, _even, "even >= 2"),
        "beta_J": Key(float, 0.5, _nonneg, ">= 0"),
        "t": Key(float, 0.5, _pos, "> 0"),
        "n_steps": Key(int, 500, _pos, "> 0"),
        "n_paths": Key(int, 100_000, lambda v: v >= 2, ">= 2"),
        "chunk": Key(int, 5000, _pos, "> 0"),
    },
    "metastability": {
        "L": Key(int, 16, _even, "even >= 2"),
        "t": Key(float, 2.0, _pos, "> 0"),
        "beta_J": Key(list, [20.0, 0.2], _all(_pos), "all > 0"),
        "sweeps": Key(int, 101_000, _nonneg, ">= 0"),
        "burn_in": Key(int, 1000, _nonneg, ">= 0"),
        "proposal_width": Key(float, 0.5, lambda v: 0 < v <= math.pi, "in (0, pi]"),
        "thin": Key(int, 1, _pos, "> 0"),
        "form": Key(str, "exact", lambda v: v in ("exact", "field_approx"), "'exact' or 'field_approx'"),
    },
    "percolation-scan": {
        "L": Key(int, 16, _even, "even >= 2"),
        "t": Key(float, 2.0, _pos, "> 0"),
        "beta_J": Key(list, [20.0, 0.2], _all(_pos), "all > 0"),
        "delta_factor": Key(float, 0.1, _nonneg, ">= 0"),
        "deltas": Key(list, [0.0, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0], _all(_nonneg), "all >= 0"),
        "sweeps": Key(int, 101_000, _nonneg, ">= 0"),
        "burn_in": Key(int, 1000, _nonneg, ">= 0"),
        "snapshot_every": Key(int, 10_000, _pos, "> 0"),
        "proposal_width": Key(float, 0.5, lambda v: 0 < v <= math.pi, "in (0, pi]"),
        "form": Key(str, "exact", lambda v: v in ("exact", "field_approx"), "'exact' or 'field_approx'"),
    },
    "badprobe": {
        "L_list": Key(list, [8, 12, 16], _all(_even), "all even >= 2", item=int),
        "beta_J": Key(list, [20.0, 0.1], _all(_pos), "all > 0"),
        "t": Key(float, 2.0, _pos, "> 0"),
        "sweeps": Key(int, 21_000, _nonneg, ">= 0"),
        "burn_in": Key(int, 1000, _nonneg, ">= 0"),
        "proposal_width": Key(float, 0.5, lambda v: 0 < v <= math.pi, "in (0, pi]"),
        "form": Key(str, "exact", lambda v: v in ("exact", "field_approx"), "'exact' or 'field_approx'"),
    },
    "chessboard": {
        "beta_J": Key(list, [0.5, 5.0], _all(_pos), "all > 0"),
        "t": Key(float, 2.0, _pos, "> 0"),
        "n_functions": Key(int, 20, _pos, "> 0"),
        "n_grid": Key(int, 16, lambda v: 1 <= v <= 64, "in [1, 64]"),
    },
    "polymer-check": {
        "n_systems": Key(int, 50, _pos, "> 0"),
        "max_polymers": Key(int, 8, lambda v: 1 <= v <= 20, "in [1, 20]"),
        "n_sites": Key(int, 10, _pos, "> 0"),
        "max_support": Key(int, 3, _pos, "> 0"),
        "weight_scale": Key(float, 0.2, _pos, "> 0"),
        "max_order": Key(int, 12, _pos, "> 0"),
        "tolerance": Key(float, 1e-6, _pos, "> 0"),
        "system_file": Key(str, ""),
    },
}

EXPERIMENTS = tuple(SCHEMAS)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    params: dict

    def __getitem__(self, key):
        return self.params[key]

    def with_seed(self, seed: int) -> "ExperimentConfig":
        if not 0 <= seed < 2**64:
            raise UsageError(f"seed must be a 64-bit unsigned integer, got {seed}")
        return ExperimentConfig(self.experiment, {**self.params, "seed": int(seed)})


def _coerce(name, key: Key, value):
    def num(v, kind):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise UsageError(f"{name}: expected a number, got {v!r}")
        if kind is int:
            if isinstance(v, float) and not v.is_integer():
                raise UsageError(f"{name}: expected an integer, got {v!r}")
            return int(v)
        v = float(v)
        if not math.isfinite(v):
            raise UsageError(f"{name}: value must be finite")
        return v

    if key.kind is list:
        if not isinstance(value, list):
            raise UsageError(f"{name}: expected a list, got {value!r}")
        out = [num(v, key.item) for v in value]
    elif key.kind in (int, float):
        out = num(value, key.kind)
    elif key.kind is bool:
        if not isinstance(value, bool):
            raise UsageError(f"{name}: expected true/false, got {value!r}")
        out = value
    else:
        if not isinstance(value, str):
            raise UsageError(f"{name}: expected a string, got {value!r}")
        out = value
    if not key.check(out):
        raise UsageError(f"{name}: {out!r} violates {key.rule}")
    return out


def parse_config(data: dict, experiment: str) -> ExperimentConfig:
    """Validate the parsed TOML ``data`` and return the section for ``experiment``."""
    if experiment not in SCHEMAS:
        raise UsageError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    for section, body in data.items():
        if section not in SCHEMAS:
            raise UsageError(f"unknown section [{section}]")
        if not isinstance(body, dict):
            raise UsageError(f"[{section}] must be a table")
        schema = {**COMMON, **SCHEMAS[section]}
        for key in body:
            if key not in schema:
                raise UsageError(f"[{section}] unknown key {key!r}")
    if experiment not in data:
        raise UsageError(f"config has no [{experiment}] section")
    body = data[experiment]
    schema = {**COMMON, **SCHEMAS[experiment]}
    params = {}
    for key, spec in schema.items():
        value = body.get(key, spec.default)
        params[key] = _coerce(f"[{experiment}].{key}", spec, value)
    if "burn_in" in params and params["burn_in"] > params["sweeps"] > 0:
        raise UsageError(f"[{experiment}] burn_in exceeds sweeps")
    return ExperimentConfig(experiment, params)


def load_config(path, experiment: str) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file {path} not found")
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"{path}: {exc}") from None
    return parse_config(data, experiment)


def _value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, list):
        return "[" + ", ".join(_value(x) for x in v) + "]"
    raise UsageError(f"cannot serialize {v!r}")


def dumps(configs) -> str:
    """Serialize one or more :class:`ExperimentConfig` to TOML text."""
    if isinstance(configs, ExperimentConfig):
        configs = [configs]
    blocks = []
    for cfg in configs:
        lines = [f"[{cfg.experiment}]"] + [f"{k} = {_value(v)}" for k, v in cfg.params.items()]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"
