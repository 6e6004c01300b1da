"""Run-configuration defaults and JSON schema.

The config file is YAML (or the ``config`` section of a previously written
manifest); every field has a default, and CLI flags override file values.
``docs/config.schema.json`` in the repository is this schema serialised.
"""

from __future__ import annotations

import copy
from typing import Any

CONFIG_DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "method": "eris",
    "rounds": 50,
    "clients": 10,
    "aggregators": 4,
    "learning_rate": "auto",
    "shift_stepsize": "auto",
    "beta": 1.0,
    "weighting": "uniform",
    "mask_mode": "balanced",
    "dropout_rate": 0.0,
    "compressor": {"kind": "identity", "p": 1.0},
    "estimator": {"kind": "full-gradient", "batch": 1},
    "task": {
        "kind": "regression",
        "model": "linear-regression",
        "samples": 200,
        "dim": 20,
        "classes": 2,
        "noise": 0.1,
        "hidden": 8,
        "partition": "iid",
        "dirichlet_alpha": 0.5,
    },
    "loss_threshold": "auto",
}

CONFIG_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "erisfl run configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "method": {"enum": ["eris", "eris-base", "fedavg"]},
        "rounds": {"type": "integer", "minimum": 0},
        "clients": {"type": "integer", "minimum": 1},
        "aggregators": {"type": "integer", "minimum": 1},
        "learning_rate": {
            "anyOf": [{"const": "auto"}, {"type": "number", "exclusiveMinimum": 0}]
        },
        "shift_stepsize": {
            "anyOf": [
                {"const": "auto"},
                {"type": "number", "minimum": 0, "maximum": 1},
            ]
        },
        "beta": {"type": "number", "exclusiveMinimum": 0},
        "weighting": {"enum": ["uniform", "sample-weighted"]},
        "mask_mode": {"enum": ["balanced", "iid-categorical"]},
        "dropout_rate": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "compressor": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["identity", "random-sparsification"]},
                "p": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
        },
        "estimator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["full-gradient", "minibatch-sgd"]},
                "batch": {"type": "integer", "minimum": 1},
            },
        },
        "task": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["regression", "classification"]},
                "model": {
                    "enum": ["linear-regression", "logistic-regression", "mlp"]
                },
                "samples": {"type": "integer", "minimum": 1},
                "dim": {"type": "integer", "minimum": 1},
                "classes": {"type": "integer", "minimum": 2},
                "noise": {"type": "number", "minimum": 0},
                "hidden": {"type": "integer", "minimum": 1, "maximum": 32},
                "partition": {"enum": ["iid", "dirichlet"]},
                "dirichlet_alpha": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "loss_threshold": {
            "anyOf": [{"const": "auto"}, {"type": "number"}]
        },
    },
}


def merged_with_defaults(overrides: dict[str, Any]) -> dict[str, Any]:
    """Deep-merge a partial config onto the defaults."""
    config = copy.deepcopy(CONFIG_DEFAULTS)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(config.get(key), dict):
            config[key].update(value)
        else:
            config[key] = value
    return config
