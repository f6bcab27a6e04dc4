"""Run configurations: JSON documents validated per experiment kind."""

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError

KINDS = ("combustion", "convection", "euler", "spectra", "nse2d", "nse3d", "kernel")

# required keys per kind (dotted paths) and defaults merged before validation
REQUIRED = {
    "combustion": ["kappa", "v0", "profile.kind", "t_end", "grid.nx", "grid.ny"],
    "convection": ["model", "grid.nx", "grid.nz", "t_end"],
    "euler": ["grid.n", "t_end", "dt"],
    "spectra": ["inputs", "nu", "L"],
    "nse2d": ["nu", "grid.n", "t_end", "forcing.k_lo", "forcing.k_hi", "forcing.amplitude"],
    "nse3d": ["nu", "grid.n", "t_end", "forcing.k_lo", "forcing.k_hi", "forcing.amplitude"],
    "kernel": ["p", "L", "eps", "x"],
}

DEFAULTS = {
    "combustion": {"profile": {"amplitude": 0.0}, "sample_every": 1, "scheme": "imex-ssp2"},
    "convection": {"sigma": 1.0, "L": 2.0, "E": "inf", "sample_every": 5, "spinup": 0.5, "dt_max": 1e-3},
    "euler": {"amplitude": 1.0, "method": "both", "checkpoint_every": 0},
    "spectra": {"regime": "thm9_2d", "spinup": 0.0},
    "nse2d": {"scheme": "rk4", "courant": 0.4, "sample_every": 10, "checkpoint_every": 0, "spinup": 0.2},
    "nse3d": {"scheme": "rk4", "courant": 0.4, "sample_every": 10, "checkpoint_every": 0, "spinup": 0.2},
    "kernel": {},
}


def get(cfg, path, default=None):
    node = cfg
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    return node


def set_path(cfg, path, value):
    parts = path.split(".")
    node = cfg
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class RunConfig:
    kind: str
    data: dict
    seed: int = 0

    @property
    def hash(self):
        return config_hash(self.data)

    def __getitem__(self, path):
        value = get(self.data, path)
        if value is None:
            raise ConfigError(f"missing key {path!r}", key=path)
        return value

    def get(self, path, default=None):
        return get(self.data, path, default)


def _check_positive(cfg, path):
    v = get(cfg, path)
    if v is not None and not (isinstance(v, (int, float)) and np.isfinite(v) and v > 0):
        raise ConfigError(f"{path} must be a positive number, got {v!r}", key=path)


def validate(raw):
    """Merge defaults and check required keys and ranges; returns a RunConfig."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {', '.join(KINDS)}; got {kind!r}", key="kind")
    cfg = _merge(DEFAULTS[kind], raw)
    cfg.setdefault("seed", 0)
    required = list(REQUIRED[kind])
    if kind == "convection":
        required.append("R" if cfg.get("model") == "ip_rotating" else "Ra")
    for path in required:
        if get(cfg, path) is None:
            raise ConfigError(f"missing key {path!r} for {kind} config", key=path)
    for path in ("kappa", "v0", "t_end", "nu", "L", "Ra", "R", "sigma", "dt", "tau"):
        _check_positive(cfg, path)
    if kind == "convection" and cfg["model"] not in ("boussinesq", "ip_rotating"):
        raise ConfigError("model must be boussinesq or ip_rotating", key="model")
    if kind == "kernel" and cfg["p"] not in (1, 2, 3):
        raise ConfigError("p must be 1, 2 or 3", key="p")
    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed must be an integer", key="seed")
    return RunConfig(kind, cfg, cfg["seed"])


def load_config(path):
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return validate(raw)
