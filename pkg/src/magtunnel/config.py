"""TOML run configuration: schema, defaults, validation and hashing."""
from __future__ import annotations

import copy
import hashlib
import json
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .model import ModelParams, QuarticShell
from .potentials import SeparableDoubleWell, TwistedValleyWell

FAMILIES = ("quartic", "separable", "twisted")

# section -> key -> (type, default); a default of REQUIRED must be given
REQUIRED = object()
SCHEMA = {
    "model": {
        "omega": (float, REQUIRED),
        "nu": (float, REQUIRED),
        "h": (float, 0.1),
    },
    "potential": {
        "family": (str, "quartic"),
        "v4": (float, 1.0),
        "r0": (float, 1.0),
        "transverse": (float, 1.0),
        "stiffness": (float, 1.0),
        "bow": (float, 0.5),
        "twist": (float, 1.0),
    },
    "grid": {
        "box": (list, [[-1.6, 1.6], [-1.6, 1.6], [-2.2, 2.2]]),
        "n": (list, [40, 40, 56]),
    },
    "spectrum": {
        "k": (int, 2),
        "sector": (str, "both"),
        "gauge": (str, "symmetric"),
        "omega_prime": (float, None),
    },
    "splitting": {
        "h": (list, [0.25, 0.2, 0.16, 0.13]),
        "omega_prime": (list, None),
        "epsilon": (float, None),
        "band_measure": (str, "smallest_h"),
    },
    "instanton": {
        "n_nodes": (int, 101),
        "n_seeds": (int, 3),
        "E_prime": (float, None),
    },
    "gap": {
        "h": (list, [0.2, 0.16, 0.13]),
        "halfspace_offset": (float, None),
        "stencil": (str, "central"),
    },
    "monodromy": {
        "n": (int, 64),
        "half_width": (float, 2.5),
        "K": (int, 5),
        "steps": (int, 4096),
        "s": (float, 0.0),
        "order": (int, 2),
        "gauge_form": (str, "velocity"),
        "h": (float, None),
    },
    "fbi": {
        "h": (float, None),
        "state": (str, "ground"),
        "section": (str, "y3-eta3"),
        "stride": (int, 1),
        "xi_max": (float, None),
    },
}

# keys that do not change numerical results and stay out of the hash
RUN_KEYS = ("out_dir", "workers")


def _coerce(value, typ, key):
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}", key)
        return float(value)
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer, got {value!r}", key)
        return value
    if typ is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string, got {value!r}", key)
        return value
    if typ is list:
        if not isinstance(value, list):
            raise ConfigError(f"{key} must be an array, got {value!r}", key)
        return value
    raise TypeError(typ)


def normalize(raw: dict) -> dict:
    """Fill defaults, check types and reject unknown keys."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a table")
    out = {}
    for section in raw:
        if section not in SCHEMA and section != "run":
            raise ConfigError(f"unknown section [{section}]", section)
    for section, keys in SCHEMA.items():
        given = raw.get(section, {})
        if not isinstance(given, dict):
            raise ConfigError(f"[{section}] must be a table", section)
        for k in given:
            if k not in keys:
                raise ConfigError(f"unknown key {section}.{k}", f"{section}.{k}")
        sec = {}
        for k, (typ, default) in keys.items():
            path = f"{section}.{k}"
            if k in given:
                sec[k] = _coerce(given[k], typ, path)
            elif default is REQUIRED:
                raise ConfigError(f"missing required key {path}", path)
            else:
                sec[k] = copy.deepcopy(default)
        out[section] = sec
    run = dict(raw.get("run", {}))
    for k in run:
        if k not in RUN_KEYS:
            raise ConfigError(f"unknown key run.{k}", f"run.{k}")
    out["run"] = run
    validate(out)
    return out


def validate(cfg):
    m = cfg["model"]
    for k in ("omega", "nu", "h"):
        if not m[k] > 0:
            raise ConfigError(f"model.{k} must be positive", f"model.{k}")
    fam = cfg["potential"]["family"]
    if fam not in FAMILIES:
        raise ConfigError(f"potential.family must be one of {FAMILIES}", "potential.family")
    g = cfg["grid"]
    if len(g["box"]) != len(g["n"]) or not 1 <= len(g["n"]) <= 3:
        raise ConfigError("grid.box and grid.n must have the same length (1 to 3)", "grid.box")
    for ax in g["box"]:
        if not (isinstance(ax, list) and len(ax) == 2 and ax[1] > ax[0]):
            raise ConfigError(f"grid.box entries must be [lo, hi], got {ax!r}", "grid.box")
    for k in ("splitting.h", "gap.h"):
        s, key = k.split(".")
        hs = cfg[s][key]
        if not hs or any(not isinstance(x, (int, float)) or x <= 0 for x in hs):
            raise ConfigError(f"{k} must be a non-empty list of positive numbers", k)
        cfg[s][key] = [float(x) for x in hs]
    if cfg["splitting"]["band_measure"] not in ("smallest_h", "fit"):
        raise ConfigError("splitting.band_measure must be smallest_h or fit",
                          "splitting.band_measure")
    if cfg["spectrum"]["sector"] not in ("none", "even", "odd", "both"):
        raise ConfigError("spectrum.sector must be none, even, odd or both", "spectrum.sector")
    if cfg["monodromy"]["gauge_form"] not in ("velocity", "length"):
        raise ConfigError("monodromy.gauge_form must be velocity or length",
                          "monodromy.gauge_form")
    if cfg["monodromy"]["order"] not in (2, 4):
        raise ConfigError("monodromy.order must be 2 or 4", "monodromy.order")
    if cfg["gap"]["stencil"] not in ("central", "one-sided"):
        raise ConfigError("gap.stencil must be central or one-sided", "gap.stencil")
    if cfg["fbi"]["state"] != "ground":
        raise ConfigError("fbi.state supports only 'ground'", "fbi.state")
    if cfg["fbi"]["section"] != "y3-eta3":
        raise ConfigError("fbi.section supports only 'y3-eta3'", "fbi.section")


def load_config(path) -> dict:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return normalize(raw)


def config_hash(cfg: dict) -> str:
    """SHA-256 of the canonical JSON of the numerical keys (order independent)."""
    core = {k: v for k, v in cfg.items() if k != "run"}
    blob = json.dumps(core, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def model_params(cfg, h=None) -> ModelParams:
    m = cfg["model"]
    return ModelParams(m["omega"], m["nu"], m["h"] if h is None else h)


def radial_potential(cfg):
    p = cfg["potential"]
    return QuarticShell(p["v4"], p["r0"])


def scalar_potential(cfg):
    """W in rescaled coordinates for the configured family."""
    from .model import ModelPotential

    p = cfg["potential"]
    fam = p["family"]
    if fam == "quartic":
        return ModelPotential(model_params(cfg), radial_potential(cfg))
    if fam == "separable":
        return SeparableDoubleWell(p["transverse"])
    return TwistedValleyWell(p["stiffness"], p["bow"], p["twist"])


def omega_prime(cfg, override=None):
    if override is not None:
        return float(override)
    wp = cfg["spectrum"]["omega_prime"]
    return model_params(cfg).omega_prime if wp is None else wp
