"""Experiment configuration files, builtin presets and ``--set`` overrides."""

from __future__ import annotations

import copy
import json
from pathlib import Path

from .concentration import ExperimentConfig
from .geometry import PathLossModel
from .network import PowerModel, SinrParams

SCHEMA_VERSION = 1
EXPERIMENTS = ("interference", "cut", "capacity", "annulus")

# Shared dense-network parameters.  d_near = 0.02 is where both the
# interference tails and the primed coupling radii are well behaved at n=2000.
_LOSS = {"c": 1e-3 / 64, "alpha": 3.0, "d_near": 0.02}
_SINR = {"N0": 0.02, "beta": 0.2, "gamma": 0.02, "R": 1.0, "capacity_mode": "threshold"}
_CONSTANT = {"kind": "constant", "p_min": 0.01, "p_max": 0.01, "w_min": 0.5}
_UNIFORM = {"kind": "uniform", "p_min": 0.01, "p_max": 0.02, "w_min": 0.5}


def _cfg(scenario, power, **kw):
    d = {
        "scenario": scenario,
        "n": 2000,
        "m": 1998,
        "l": 1,
        "k": 50,
        "trials": 200,
        "base_seed": 20240501,
        "alpha_exponent": 1.0,
        "eta": 1.0,
        "epsilon": 0.5,
        "cbar_samples": 16,
        "include_other_destinations": False,
        "power_scaling": None,
        "series_trials": 1,
        "loss": dict(_LOSS),
        "sinr": dict(_SINR),
        "power": dict(power),
    }
    d.update(kw)
    return d


PRESETS = {
    "fig3": {
        "description": "constant power P0=0.01: per-node J(j) and C_k for k=50, n=2000",
        "experiments": ["interference", "cut"],
        "config": _cfg("constant", _CONSTANT),
    },
    "fig5": {
        "description": "power uniform on [0.01, 0.02]: per-node I(j) and C_k for k=50, n=2000",
        "experiments": ["interference", "cut"],
        "config": _cfg("heterogeneous", _UNIFORM),
    },
    "capacity-constant": {
        "description": "coding capacity, constant power, l=1, m=30, 500 trials",
        "experiments": ["capacity"],
        "config": _cfg("constant", _CONSTANT, m=30, k=0, trials=500),
    },
    "capacity-heterogeneous": {
        "description": "coding capacity, uniform power, l=1, m=30, 500 trials",
        "experiments": ["capacity"],
        "config": _cfg("heterogeneous", _UNIFORM, m=30, k=0, trials=500),
    },
    "annulus": {
        "description": "coupled annulus counts for uniform power at n=2000",
        "experiments": ["annulus"],
        "config": _cfg("heterogeneous", _UNIFORM, k=0, trials=50),
    },
}


class ConfigError(ValueError):
    pass


def preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    d = copy.deepcopy(PRESETS[name])
    return {"schema_version": SCHEMA_VERSION, "experiments": d["experiments"], "config": d["config"]}


def load(source: str) -> dict:
    """Read a preset name or a JSON file into the run document."""
    path = Path(source)
    if source in PRESETS and not path.exists():
        return preset(source)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config: no such file or preset {source!r}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"config: {source} is not valid JSON ({err})") from None
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {doc.get('schema_version')!r}")
    if "preset" in doc:
        base = preset(doc["preset"])
        for key, val in doc.get("overrides", {}).items():
            set_value(base, key, val)
        doc = base
    return doc


def set_value(doc: dict, key: str, value):
    """Assign a dotted key, e.g. ``config.sinr.gamma``; a bare key means ``config.<key>``."""
    parts = key.split(".")
    if parts[0] not in ("config", "experiments", "schema_version"):
        parts = ["config", *parts]
    node = doc
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"{key}: {p!r} is not a section")
        node = node[p]
    node[parts[-1]] = value


def parse_override(text: str):
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {text!r} must look like key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def build(doc: dict):
    """Validate a run document; returns (experiments, ExperimentConfig)."""
    exps = doc.get("experiments", [])
    if isinstance(exps, str):
        exps = [exps]
    bad = [e for e in exps if e not in EXPERIMENTS]
    if bad or not exps:
        raise ConfigError(f"experiments: expected a subset of {EXPERIMENTS}, got {exps!r}")
    c = doc.get("config")
    if not isinstance(c, dict):
        raise ConfigError("config: missing section")
    for section, ctor in (("loss", PathLossModel), ("sinr", SinrParams), ("power", PowerModel)):
        if not isinstance(c.get(section), dict):
            raise ConfigError(f"config.{section}: missing section")
        try:
            ctor(**c[section])
        except (TypeError, ValueError) as err:
            raise ConfigError(f"config.{section}: {err}") from None
    try:
        cfg = ExperimentConfig.from_dict(c)
    except KeyError as err:
        raise ConfigError(f"config: missing field {err}") from None
    except TypeError as err:
        raise ConfigError(f"config: {err}") from None
    except ValueError as err:
        raise ConfigError(f"config.{err}") from None
    return list(exps), cfg
