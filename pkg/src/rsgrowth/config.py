"""Run configuration: JSON loading, schema validation, defaults and hashing."""

from __future__ import annotations

import copy
import hashlib
import json
import os
from importlib import resources

import jsonschema

from .grid import GridSpec
from .model import MarketModel, builtin, builtin_defaults

ENV_SEED = "RSGROWTH_SEED"
ENV_OUT = "RSGROWTH_OUT"

DEFAULTS = {
    "grid": None,
    "noise": {"quadrature_order": 16},
    "actions": {},
    "solver": {"gamma": -0.5, "tol": 1e-9, "max_iter": 100_000, "anchor": None,
               "clamp_threshold": 0.01},
    "mc": {"horizons": [250, 500, 1000, 2000], "paths": 10_000, "seed": 0, "bootstrap": 400},
    "diagnose": {"gamma_bar": -0.5, "phi": None, "samples": 64, "r_margin": 1.0,
                 "eps_min": 1e-6, "noise_draws": 4096, "cells_per_dim": 32,
                 "minorization_R": None, "growth_samples": 20_000},
    "sweep": {"gammas": [-2.0, -1.0, -0.5, -0.25, -0.1]},
    "output": {"directory": "out", "format": "both"},
}


class ConfigError(ValueError):
    """Invalid configuration; ``line`` locates the offending entry when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(where + message)


def load_schema() -> dict:
    text = resources.files("rsgrowth").joinpath("schema/config.schema.json").read_text()
    return json.loads(text)


def _line_of(text: str, keys) -> int | None:
    """Line of the last key in ``keys``, found by scanning forward key by key."""
    pos = 0
    for key in keys:
        if isinstance(key, int):
            continue
        hit = text.find(json.dumps(key), pos)
        if hit < 0:
            break
        pos = hit
    return text.count("\n", 0, pos) + 1


def parse(text: str, path: str = "<config>") -> dict:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, path, exc.lineno) from None
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        loc = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"{loc}: {err.message}", path, _line_of(text, list(err.absolute_path)))
    return raw


def resolve(raw: dict, *, seed=None, out=None, fmt=None, environ=None, text: str = "",
            path: str = "<config>") -> dict:
    """Fill defaults and apply overrides (flags beat environment beats file)."""
    environ = os.environ if environ is None else environ
    cfg = copy.deepcopy(DEFAULTS)
    for section, value in raw.items():
        if isinstance(value, dict) and isinstance(cfg.get(section), dict):
            cfg[section].update(value)
        else:
            cfg[section] = copy.deepcopy(value)
    name = cfg["model"]["builtin"]
    params = {**builtin_defaults(name), **cfg["model"].get("params", {})}
    if "resolution" in cfg["actions"] and "action_resolution" in params:
        params["action_resolution"] = cfg["actions"]["resolution"]
    cfg["model"] = {"builtin": name, "params": params, "x0": cfg["model"].get("x0")}
    if "action_resolution" in params:
        cfg["actions"] = {"resolution": params["action_resolution"]}

    env_seed = environ.get(ENV_SEED)
    if seed is None and env_seed not in (None, ""):
        try:
            seed = int(env_seed)
        except ValueError:
            raise ConfigError(f"{ENV_SEED}={env_seed!r} is not an integer") from None
    if seed is not None:
        if not 0 <= int(seed) < 2**64:
            raise ConfigError(f"seed {seed} is not an unsigned 64-bit integer")
        cfg["mc"]["seed"] = int(seed)
    if out is None:
        out = environ.get(ENV_OUT) or None
    if out is not None:
        cfg["output"]["directory"] = str(out)
    if fmt is not None:
        cfg["output"]["format"] = fmt
    try:
        model = build_model(cfg)
    except ValueError as exc:
        raise ConfigError(f"model: {exc}", path, _line_of(text, ["model"])) from None
    # write out what the builder chose so the resolved file is self-contained
    cfg["grid"] = model.grid.to_dict()
    cfg["model"]["x0"] = list(model.x0)
    return cfg


def load(path, **overrides) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return resolve(parse(text, str(path)), text=text, path=str(path), **overrides)


def build_model(cfg: dict) -> MarketModel:
    grid = cfg.get("grid")
    spec = GridSpec(grid["lower"], grid["upper"], grid["counts"]) if grid else None
    m = cfg["model"]
    return builtin(m["builtin"], m["params"], quadrature_order=cfg["noise"]["quadrature_order"],
                   grid=spec, x0=m.get("x0"))


def config_hash(cfg: dict) -> str:
    """SHA-256 of the canonical resolved config, without the output section."""
    body = {k: v for k, v in cfg.items() if k != "output"}
    canon = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()
