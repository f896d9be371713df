"""MentorMix robust-training lab.

Thin wrappers over the C++ core: synthetic noisy splits, single training
runs, hyperparameter sweeps and the invariant self-test.
"""

import csv
import io
import json

from ._core import (
    ConfigError,
    ContractError,
    DimensionError,
    DivergedError,
    ResourceError,
    adjust_lambda,
    corrupted_count,
    generate_split,
    percentile,
    render_table,
    sampling_distribution,
    selftest,
    softmax_ce,
    sweep_csv,
    threshold_weights,
    train,
)
from ._core import resolve_config as _resolve_config

__all__ = [
    "ConfigError",
    "ContractError",
    "DimensionError",
    "DivergedError",
    "ResourceError",
    "adjust_lambda",
    "config",
    "corrupted_count",
    "generate_split",
    "percentile",
    "read_trials",
    "render_table",
    "sampling_distribution",
    "selftest",
    "softmax_ce",
    "sweep_csv",
    "threshold_weights",
    "train",
]


def config(name="default", overrides=()):
    """Resolved configuration as a dict."""
    return json.loads(_resolve_config(name, list(overrides)))


def read_trials(text):
    """Rows of a trials CSV as dicts; the provenance comment line is skipped."""
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))
