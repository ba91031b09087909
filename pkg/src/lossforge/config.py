"""Experiment configuration: YAML (or JSON) with strict schema validation."""

from __future__ import annotations

import copy
import json
from dataclasses import fields
from pathlib import Path

import yaml

from .bilevel import BilevelConfig
from .errors import ConfigError

MODES = ("autobalance", "baseline-ce", "baseline-la", "baseline-balanced-ce")
SWEEP_METHODS = ("autobalance", "ce-deo", "group-la", "posthoc")

DEFAULTS = {
    "name": "run",
    "mode": "autobalance",
    "data": {
        "kind": "longtail",
        "seed": 0,
        "num_classes": 10,
        "base_count": 300,
        "rho": 100.0,
        "dim": 32,
        "mean_scale": 3.0,
        "noise": 1.0,
        "test_per_class": 300,
        "split_fraction": 0.8,
        "fractions": None,
        "n": 2000,
        "n_test": 20000,
        "spurious": None,
    },
    "model": {"kind": "mlp", "hidden_sizes": [128]},
    "loss": {
        "init": "la-init",
        "dictionary": "identity",
        "clusters": 2,
        "tau": 1.0,
        "train": ["l", "delta"],
        "eps": None,
    },
    "bilevel": {},
    "objective": {"target": "balanced", "lambda_val": 1.0},
    "sweep": {"lambdas": [0.0, 0.25, 0.5, 0.75, 1.0], "methods": ["autobalance", "ce-deo"],
              "seeds": [0]},
    "output": {"dir": "runs"},
}

SPURIOUS_KEYS = {"core_dim", "spurious_dim", "noise_dim", "core_scale", "spurious_scale", "noise"}
BILEVEL_KEYS = {f.name for f in fields(BilevelConfig)}
TARGETS = ("balanced", "group-balanced", "deo", "ce")


def _merge(base, over, path):
    out = copy.deepcopy(base)
    for k, v in over.items():
        where = f"{path}.{k}" if path else k
        if k not in base:
            raise ConfigError(f"unknown key {where!r}")
        if isinstance(base[k], dict) and k != "bilevel":
            if not isinstance(v, dict):
                raise ConfigError(f"{where!r} must be a section")
            out[k] = _merge(base[k], v, where)
        else:
            out[k] = v
    return out


def _check_bilevel(sec):
    bad = set(sec) - BILEVEL_KEYS
    if bad:
        raise ConfigError(f"unknown key(s) in bilevel: {sorted(bad)}")
    try:
        BilevelConfig(**sec)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def validate(cfg):
    d = cfg["data"]
    if d["kind"] not in ("longtail", "group"):
        raise ConfigError(f"unknown data.kind {d['kind']!r}")
    if d["kind"] == "group" and d["fractions"] is None:
        raise ConfigError("group data needs data.fractions")
    if d["spurious"] is not None:
        bad = set(d["spurious"]) - SPURIOUS_KEYS
        if bad:
            raise ConfigError(f"unknown key(s) in data.spurious: {sorted(bad)}")
    if not 0 < d["split_fraction"] < 1:
        raise ConfigError("data.split_fraction must lie in (0, 1)")
    if cfg["mode"] not in MODES:
        raise ConfigError(f"unknown mode {cfg['mode']!r}")
    if cfg["loss"]["init"] not in ("ce", "balanced-ce", "la-init", "group-la"):
        raise ConfigError(f"unknown loss.init {cfg['loss']['init']!r}")
    if cfg["loss"]["dictionary"] not in ("identity", "cluster", "la-column"):
        raise ConfigError(f"unknown loss.dictionary {cfg['loss']['dictionary']!r}")
    bad = set(cfg["loss"]["train"]) - {"w", "l", "delta", "eps"}
    if bad:
        raise ConfigError(f"unknown trainable field(s) {sorted(bad)}")
    obj = cfg["objective"]
    if obj["target"] not in TARGETS:
        raise ConfigError(f"unknown objective.target {obj['target']!r}")
    if not 0 <= obj["lambda_val"] <= 1:
        raise ConfigError("objective.lambda_val must lie in [0, 1]")
    bad = set(cfg["sweep"]["methods"]) - set(SWEEP_METHODS)
    if bad:
        raise ConfigError(f"unknown sweep method(s) {sorted(bad)}")
    _check_bilevel(cfg["bilevel"])
    return cfg


def from_dict(raw):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    return validate(_merge(DEFAULTS, raw, ""))


def load(path):
    path = Path(path)
    text = path.read_text()
    try:
        raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return from_dict(raw)


def bilevel_config(cfg, seed=None):
    sec = dict(cfg["bilevel"])
    sec["seed"] = cfg["data"]["seed"] if seed is None else seed
    sec.setdefault("lambda_val", cfg["objective"]["lambda_val"])
    return BilevelConfig(**sec)
