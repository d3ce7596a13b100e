"""JSON schemas for command-line configuration files.

Validation errors are reported with the JSON pointer of the offending field.
"""

from __future__ import annotations

import jsonschema

from .forecast import COEFFICIENT_RULES
from .sim import KINDS, METHODS

__all__ = ["ConfigError", "FIT_SCHEMA", "HOUSING_SCHEMA", "SCHEMAS", "SIMULATE_SCHEMA", "validate"]

_BANDWIDTH = {
    "oneOf": [
        {"enum": ["auto", "silverman", "cv"]},
        {"type": "number", "exclusiveMinimum": 0},
        {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
    ]
}

DPDD_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["hermite", "monomial"]},
        "degree": {"type": ["integer", "null"], "minimum": 1},
        "n_modes": {"type": ["integer", "null"], "minimum": 1},
        "ratio": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "bandwidth": _BANDWIDTH,
        "whiten": {"type": "boolean"},
        "ridge": {"type": "number", "exclusiveMinimum": 0},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "grid_points": {"type": ["integer", "null"], "minimum": 2},
        "coefficients": {"enum": list(COEFFICIENT_RULES)},
        "normalization": {"enum": ["sample", "weighted"]},
    },
}

_SCENARIO = {
    "oneOf": [
        {"enum": list(KINDS)},
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": list(KINDS)},
                "params": {"type": "object", "additionalProperties": {"type": "number"}},
            },
        },
    ]
}

SIMULATE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "simulate configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "scenarios": {"type": "array", "items": _SCENARIO, "minItems": 1},
        "methods": {"type": "array", "items": {"enum": list(METHODS)}, "minItems": 1, "uniqueItems": True},
        "n_exp": {"type": "integer", "minimum": 1},
        "n_paths": {"type": "integer", "minimum": 2},
        "T": {"type": "integer", "minimum": 4},
        "horizon": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "stride": {"type": "integer", "minimum": 1},
        "fpca_threshold": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "window_multiplier": {"type": "integer", "minimum": 1},
        "window_cv": {"type": "boolean"},
        "threads": {"type": "integer", "minimum": 0},
        "dpdd": DPDD_SCHEMA,
    },
}

FIT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "fit configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {"dpdd": DPDD_SCHEMA},
}

HOUSING_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "housing configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "split": {"type": ["string", "integer"]},
        "kind": {"enum": ["hermite", "monomial"]},
        "degree": {"type": "integer", "minimum": 1},
        "n_modes": {"type": "integer", "minimum": 1},
        "bandwidth": _BANDWIDTH,
        "fpca_threshold": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "refit": {"type": "boolean"},
        "volatile_periods": {
            "type": "object",
            "additionalProperties": {
                "type": "array",
                "items": {"type": "string", "pattern": r"^\d{4}-\d{2}"},
                "minItems": 2,
                "maxItems": 2,
            },
        },
        "reference_means": {"type": ["object", "null"], "additionalProperties": {"type": "number"}},
        "synthetic": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_metros": {"type": "integer", "minimum": 2},
                "n_months": {"type": "integer", "minimum": 26},
                "phi": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "dispersion": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
}

SCHEMAS = {"simulate": SIMULATE_SCHEMA, "fit": FIT_SCHEMA, "forecast": FIT_SCHEMA, "housing": HOUSING_SCHEMA}


class ConfigError(ValueError):
    """Configuration rejected by its schema; ``pointer`` locates the field."""

    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


def _pointer(path) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in path)


def validate(config: dict, schema: dict) -> None:
    """Raise ``ConfigError`` for the first (deepest, then path-ordered) violation."""
    validator = jsonschema.Draft202012Validator(schema)
    errors = list(validator.iter_errors(config))
    if not errors:
        return
    best = jsonschema.exceptions.best_match(errors)
    # descend into oneOf branches for a more specific location
    while best.context:
        best = jsonschema.exceptions.best_match(best.context)
    raise ConfigError(_pointer(best.absolute_path), best.message)
