"""Experiment configuration: JSON documents checked against a closed schema."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass

import jsonschema
import numpy as np

from . import spectrum
from .hilbert import Grid, WeightFamily

WEIGHT_LAW = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"law": {"const": "constant"}, "value": {"type": "number", "exclusiveMinimum": 0}},
            "required": ["law", "value"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "law": {"const": "geometric"},
                "ratio": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "scale": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["law", "ratio"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "law": {"const": "table"},
                "values": {"type": "array", "items": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}}},
            },
            "required": ["law", "values"],
            "additionalProperties": False,
        },
    ]
}

_INT = {"type": "integer"}
_POS = {"type": "integer", "minimum": 1}
_NUM = {"type": "number"}

SCHEMA = {
    "type": "object",
    "properties": {
        "grid": {
            "type": "object",
            "properties": {"modes": _INT, "levels": _INT},
            "required": ["modes", "levels"],
            "additionalProperties": False,
        },
        "weights": WEIGHT_LAW,
        "depth": _POS,
        "mode": {"enum": list(spectrum.MODES)},
        "seed": _INT,
        "base_order": _POS,
        "tolerances": {
            "type": "object",
            "properties": {
                "residual_rel": _NUM,
                "eigen_exact": _NUM,
                "span_residual": _NUM,
                "period_rel": _NUM,
                "intertwine": _NUM,
                "mutation_min": _NUM,
                "slope": _NUM,
                "nuclearity_ratio": _NUM,
            },
            "additionalProperties": False,
        },
        "experiments": {
            "type": "object",
            "properties": {
                "eigen": {
                    "type": "object",
                    "properties": {
                        "samples": _POS,
                        "sample_depth": _INT,
                        "modes": _POS,
                        "continuity_pairs": _POS,
                        "span_levels": _POS,
                    },
                    "additionalProperties": False,
                },
                "orbit": {
                    "type": "object",
                    "properties": {
                        "steps": _POS,
                        "x0": {"enum": ["fixed_point", "eigen_mix"]},
                        "decay": _NUM,
                        "targets": _POS,
                        "radius": _NUM,
                        "checkpoints": _POS,
                        "burn_in": _NUM,
                    },
                    "additionalProperties": False,
                },
                "periodic": {
                    "type": "object",
                    "properties": {
                        "picks": {"type": "array", "items": {"type": "array", "minItems": 3, "maxItems": 3}},
                        "max_period": _POS,
                    },
                    "additionalProperties": False,
                },
                "gaussian": {
                    "type": "object",
                    "properties": {
                        "terms": _POS,
                        "samples": _POS,
                        "birkhoff_length": _POS,
                        "birkhoff_samples": _POS,
                        "functionals": {"type": "array", "items": {"type": "array", "minItems": 3, "maxItems": 3}},
                    },
                    "additionalProperties": False,
                },
                "transfer": {
                    "type": "object",
                    "properties": {
                        "p": _NUM,
                        "scales": {"enum": ["default", "unit"]},
                        "samples": _POS,
                        "nuclearity_levels": _POS,
                        "weights": WEIGHT_LAW,
                        "gaussian_samples": _POS,
                    },
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
    },
    "required": ["grid", "weights", "depth"],
    "additionalProperties": False,
}

DEFAULT_TOLERANCES = {
    "residual_rel": 1e-12,
    "eigen_exact": 1e-11,
    "span_residual": 1e-8,
    "period_rel": 1e-9,
    "intertwine": 1e-12,
    "mutation_min": 1e-3,
    "slope": 1e-6,
    "nuclearity_ratio": 0.9,
}

DEFAULT_EXPERIMENTS = {
    "eigen": {"samples": 100, "continuity_pairs": 100, "span_levels": 64},
    "orbit": {"steps": 100_000, "x0": "eigen_mix", "decay": 0.5, "targets": 5, "radius": 0.05, "checkpoints": 100, "burn_in": 0.1},
    "periodic": {"picks": [[0, 0, 1.0], [0, 1, 1.0], [1, 1, 1.0]], "max_period": 1_000_000},
    "gaussian": {
        "terms": 8,
        "samples": 10_000,
        "birkhoff_length": 1000,
        "birkhoff_samples": 200,
        "functionals": [["abs2", 0, 0], ["re", 0, 1]],
    },
    "transfer": {
        "p": 2.0,
        "scales": "default",
        "samples": 100,
        "nuclearity_levels": 64,
        "weights": {"law": "geometric", "ratio": 0.25},
        "gaussian_samples": 10_000,
    },
}


class ConfigError(ValueError):
    """Malformed or inconsistent configuration (CLI exit code 2)."""


@dataclass
class ExperimentConfig:
    raw: dict

    @property
    def grid(self) -> Grid:
        g = self.raw["grid"]
        return Grid(g["modes"], g["levels"])

    @property
    def depth(self) -> int:
        return self.raw["depth"]

    @property
    def mode(self) -> str:
        return self.raw.get("mode", spectrum.GENERIC)

    @property
    def seed(self) -> int:
        return self.raw.get("seed", 0)

    @property
    def base_order(self) -> int:
        return self.raw.get("base_order", 1)

    @property
    def tolerances(self) -> dict:
        out = dict(DEFAULT_TOLERANCES)
        out.update(self.raw.get("tolerances", {}))
        return out

    def experiment(self, name) -> dict:
        out = copy.deepcopy(DEFAULT_EXPERIMENTS[name])
        out.update(self.raw.get("experiments", {}).get(name, {}))
        return out

    def weight_shape(self):
        need_modes, need_levels = spectrum.required_weight_shape(self.depth)
        g = self.grid
        return max(need_modes, g.modes), max(need_levels, g.levels)

    def weights(self) -> WeightFamily:
        return make_weights(self.raw["weights"], *self.weight_shape(), where="weights")

    def to_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, indent=1)

    def sha256(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def make_weights(law: dict, modes: int, levels: int, where="weights") -> WeightFamily:
    kind = law["law"]
    if kind == "constant":
        return WeightFamily.constant(law["value"], modes, levels)
    if kind == "geometric":
        return WeightFamily.geometric(law["ratio"], modes, levels, law.get("scale", 1.0))
    table = np.asarray(law["values"], dtype=float)
    if table.ndim != 2:
        raise ConfigError(f"{where}.values: must be a rectangular 2-d table")
    if table.shape[0] < modes or table.shape[1] < levels:
        raise ConfigError(f"{where}.values: table {table.shape} smaller than required {(modes, levels)}")
    return WeightFamily(table)


def parse_config(text: str, source="<config>") -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = ".".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"{source}: field {path}: {err.message}")
    cfg = ExperimentConfig(raw)
    g = raw["grid"]
    if g["modes"] < 1:
        raise ConfigError(f"{source}: field grid.modes: must be >= 1")
    if g["levels"] < 2:
        raise ConfigError(f"{source}: field grid.levels: must be >= 2 (at least one shift step)")
    if g["levels"] > 2 ** raw["depth"]:
        raise ConfigError(f"{source}: field grid.levels: {g['levels']} exceeds 2**depth = {2 ** raw['depth']}")
    cfg.weights()
    return cfg


def load_config(path, seed=None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    cfg = parse_config(text, str(path))
    if seed is not None:
        cfg.raw["seed"] = int(seed)
    return cfg
