"""Model configuration files.

Structured JSON with keys {domain?, n, tau, gain, kernel, input, l_policy,
nu0?}; the full schema lives in docs/formats.md and is enforced with
jsonschema, reporting the JSON path of the offending key. Parse errors keep
the line/column from the decoder.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import jsonschema
import numpy as np

from .errors import SchemaError
from .model import (Domain, GainFunction, InputCurrent, Kernel, MacroModel,
                    MicroModel, build_micro_model)

__all__ = ["ModelConfig", "load_config", "parse_config", "CONFIG_SCHEMA"]

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["n", "tau", "gain", "kernel", "input", "l_policy"],
    "additionalProperties": False,
    "properties": {
        "domain": {
            "type": "object",
            "properties": {
                "bounds": {"type": "array", "minItems": 1, "maxItems": 2,
                           "items": {"type": "array", "minItems": 2, "maxItems": 2,
                                     "items": {"type": "number"}}},
            },
            "additionalProperties": False,
        },
        "n": {"type": "integer", "minimum": 1},
        "tau": {"type": "number", "exclusiveMinimum": 0},
        "gain": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["logistic", "tanh", "constant", "affine", "table"]},
                "beta1": {"type": "number"},
                "beta2": {"type": "number"},
                "value": {"type": "number", "minimum": 0},
                "slope": {"type": "number"},
                "intercept": {"type": "number"},
                "lo": {"type": "number"},
                "hi": {"type": "number"},
                "z": {"type": "array", "items": {"type": "number"}},
                "values": {"type": "array", "items": {"type": "number"}},
                "sup_norm": {"type": "number"},
                "lipschitz": {"type": "number"},
            },
        },
        "kernel": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["constant", "gaussian", "mexican_hat"]},
                "params": {"type": "object"},
            },
        },
        "input": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["zero", "constant", "linear", "sine"]},
                "params": {"type": "object"},
            },
        },
        "l_policy": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["uniform", "scaled"]},
                "value": {"type": "integer", "minimum": 1},
                "factor": {"type": "integer", "minimum": 1},
            },
        },
        "nu0": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["constant", "linear", "sine"]},
                "value": {"type": "number"},
                "slope": {"type": "number"},
                "intercept": {"type": "number"},
                "amplitude": {"type": "number"},
                "space_freq": {"type": "integer"},
                "offset": {"type": "number"},
            },
        },
    },
}


def _build_gain(cfg: dict) -> GainFunction:
    kind = cfg["kind"]
    if kind == "logistic":
        return GainFunction.logistic(cfg.get("beta1", 1.0), cfg.get("beta2", 0.0))
    if kind == "tanh":
        return GainFunction.tanh_gain(cfg.get("beta1", 1.0), cfg.get("beta2", 0.0))
    if kind == "constant":
        return GainFunction.constant(cfg["value"])
    if kind == "affine":
        return GainFunction.affine(cfg["slope"], cfg["intercept"],
                                   cfg.get("lo", 0.0), cfg.get("hi", 1.0))
    return GainFunction.from_table(cfg["z"], cfg["values"],
                                   cfg["sup_norm"], cfg["lipschitz"])


def _build_kernel(cfg: dict) -> Kernel:
    kind, p = cfg["kind"], cfg.get("params", {})
    if kind == "constant":
        return Kernel.constant(p.get("value", 1.0))
    if kind == "gaussian":
        return Kernel.gaussian(p.get("amplitude", 1.0), p.get("length", 1.0))
    return Kernel.mexican_hat(p.get("a1", 1.0), p.get("s1", 0.1),
                              p.get("a2", 0.5), p.get("s2", 0.3))


def _build_input(cfg: dict) -> InputCurrent:
    kind, p = cfg["kind"], cfg.get("params", {})
    if kind == "zero":
        return InputCurrent.zero()
    if kind == "constant":
        return InputCurrent.constant(p.get("value", 0.0))
    if kind == "linear":
        return InputCurrent.linear(p.get("slope", 1.0), p.get("intercept", 0.0))
    return InputCurrent.sine(p.get("amplitude", 1.0), p.get("space_freq", 1),
                             p.get("time_freq", 0.0))


class _Nu0:
    """Picklable initial-condition callable on (N, d) point arrays."""

    def __init__(self, cfg: dict | None):
        self.cfg = cfg or {"kind": "constant", "value": 0.0}

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        x0 = x[..., 0] if x.ndim >= 2 else x
        c = self.cfg
        if c["kind"] == "constant":
            return np.full_like(x0, c.get("value", 0.0))
        if c["kind"] == "linear":
            return c.get("slope", 1.0) * x0 + c.get("intercept", 0.0)
        return (c.get("offset", 0.0)
                + c.get("amplitude", 0.25) * np.sin(np.pi * c.get("space_freq", 1) * x0))


@dataclass
class ModelConfig:
    raw: dict
    macro: MacroModel
    n: int
    l_policy: dict
    nu0: _Nu0

    def l_for(self, n: int) -> int:
        if self.l_policy["kind"] == "uniform":
            return int(self.l_policy["value"])
        return int(self.l_policy["factor"]) * n

    def micro(self, n: int | None = None, quad_order: int = 8) -> MicroModel:
        n = self.n if n is None else n
        return build_micro_model(self.macro, n, self.l_for(n), quad_order)

    def sha256(self) -> str:
        return hashlib.sha256(
            json.dumps(self.raw, sort_keys=True).encode()).hexdigest()


def parse_config(raw: dict) -> ModelConfig:
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        path = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise SchemaError(f"config invalid at {path!r}: {e.message}") from None
    domain = Domain(tuple(tuple(b) for b in raw["domain"]["bounds"])) \
        if "domain" in raw else Domain.unit_interval()
    macro = MacroModel(domain, raw["tau"], _build_gain(raw["gain"]),
                       _build_kernel(raw["kernel"]), _build_input(raw["input"]))
    return ModelConfig(raw, macro, int(raw["n"]), raw["l_policy"], _Nu0(raw.get("nu0")))


def load_config(path: str) -> ModelConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise SchemaError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise SchemaError(
            f"config is not valid JSON: line {e.lineno}, column {e.colno}: {e.msg}") from None
    return parse_config(raw)
