"""Run configuration: schema, loading and builders for models and distributions."""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .distributions import CompactDistribution
from .hermite import BasisSpec
from .models import CoefficientModel, brownian, constant_model, model_from_lists, ornstein_uhlenbeck

SCHEMA_VERSION = 1

CHECKS = ("spde", "duality", "martingale", "superposition", "symmetry", "translation",
          "monotonicity", "uniqueness", "semigroup", "moments")

_num = {"type": "number"}
_vec = {"type": "array", "items": _num}
_model = {
    "type": "object",
    "required": ["name"],
    "properties": {
        "name": {"enum": ["brownian", "ou", "constant", "polynomial"]},
        "d": {"type": "integer", "minimum": 1, "maximum": 3},
        "scale": _num,
        "rate": _num,
        "sigma": {},
        "drift": {},
        "self_adjoint": {"type": "boolean"},
    },
    "additionalProperties": False,
}
_distribution = {
    "type": "object",
    "properties": {
        "d": {"type": "integer", "minimum": 1, "maximum": 3},
        "atoms": {"type": "array", "items": {"type": "array", "minItems": 3, "maxItems": 3}},
        "densities": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["grid", "g"],
                "properties": {
                    "alpha": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                    "grid": {
                        "type": "object",
                        "required": ["lo", "hi", "n"],
                        "properties": {"lo": {}, "hi": {}, "n": {"type": "integer", "minimum": 1}},
                        "additionalProperties": False,
                    },
                    "g": {"oneOf": [{"enum": ["uniform", "bump"]}, _vec]},
                },
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}
_basis = {
    "type": "object",
    "properties": {
        "n_max": {"type": "integer", "minimum": 0},
        "quad_nodes": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
}
_solver = {
    "type": "object",
    "properties": {
        "T": {"oneOf": [_num, _vec]},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "M": {"type": "integer", "minimum": 2},
        "seed": {"type": "integer", "minimum": 0},
        "p": _num,
        "q": _num,
        "method": {"enum": ["mc", "galerkin", "both"]},
        "galerkin_n_max": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "required": ["schema_version"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "model": _model,
        "distribution": _distribution,
        "basis": _basis,
        "solver": _solver,
        "norms": {
            "type": "object",
            "properties": {
                "d": {"type": "integer", "minimum": 1, "maximum": 3},
                "p": _vec,
                "x": {"type": "array", "items": {"oneOf": [_num, _vec]}},
                "n_max": {"type": "integer", "minimum": 0},
                "rel_tol": _num,
                "assert_min_p": _num,
            },
            "additionalProperties": False,
        },
        "flow": {
            "type": "object",
            "properties": {
                "starts": {"type": "array", "items": {"oneOf": [_num, _vec]}},
                "T": _num,
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "K": {"type": "integer", "minimum": 0},
                "n_paths": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "split": _num,
                "inverse": {"type": "boolean"},
                "trajectories": {"type": "boolean"},
                "composition_tol": _num,
                "inverse_tol_factor": _num,
            },
            "additionalProperties": False,
        },
        "kernel": {
            "type": "object",
            "properties": {
                "x": {"oneOf": [_num, _vec]},
                "t": {"type": "number", "exclusiveMinimum": 0},
                "kde_points": {"type": "array", "items": {"oneOf": [_num, _vec]}},
            },
            "additionalProperties": False,
        },
        "verify": {
            "type": "object",
            "properties": {
                "models": {"type": "array", "items": _model},
                "checks": {"type": "array", "items": {"type": "string"}},
                "seed": {"type": "integer", "minimum": 0},
                "scale": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


class ConfigError(ValueError):
    pass


def load_config(path) -> dict:
    text = Path(path).read_text()
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return validate(cfg)


def validate(cfg) -> dict:
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"schema error at {loc}: {exc.message}") from None
    for c in cfg.get("verify", {}).get("checks", []):
        if c not in CHECKS:
            raise ConfigError(f"unknown check {c!r}; known: {', '.join(CHECKS)}")
    return copy.deepcopy(cfg)


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def build_model(spec: dict) -> CoefficientModel:
    d = spec.get("d", 1)
    name = spec["name"]
    try:
        if name == "brownian":
            return brownian(d, spec.get("scale", 1.0))
        if name == "ou":
            return ornstein_uhlenbeck(d, spec.get("rate", 1.0), spec.get("scale", 1.0))
        if name == "constant":
            sigma = np.asarray(spec.get("sigma", np.eye(d)), dtype=float).reshape(d, -1)
            drift = np.asarray(spec.get("drift", np.zeros(d)), dtype=float).reshape(d)
            return constant_model(sigma, drift)
        if "sigma" not in spec or "drift" not in spec:
            raise ConfigError("polynomial model needs sigma and drift")
        return model_from_lists(d, spec["sigma"], spec["drift"], self_adjoint=spec.get("self_adjoint", False))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad model spec: {exc}") from None


def build_distribution(spec: dict, d: int) -> CompactDistribution:
    d = spec.get("d", d)
    try:
        psi = CompactDistribution(d, atoms=[(c, g, x) for c, g, x in spec.get("atoms", [])])
        for term in spec.get("densities", []):
            grid = term["grid"]
            psi = psi + CompactDistribution.density(term["g"], grid["lo"], grid["hi"], grid["n"], term.get("alpha"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad distribution spec: {exc}") from None
    if not psi.atoms and not psi.quad_terms:
        raise ConfigError("distribution is empty")
    return psi


def build_basis(spec: dict, d: int) -> BasisSpec:
    return BasisSpec(d, spec.get("n_max", 16), spec.get("quad_nodes", 0))
