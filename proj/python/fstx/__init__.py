"""Python access to the fstx core."""

import json

from . import _fstx
from ._fstx import (
    ConfigError,
    DegenerateInputError,
    DimensionError,
    FstxError,
    ParameterError,
    TrainingError,
    UndefinedMetricError,
    delta_stability,
    exact_shapley,
    q_mean,
    q_metric,
    relevance_mask,
    sampled_shapley,
    schedule_count,
    shapley_of,
    top_fraction_mask,
    verify_axioms,
)


def default_config():
    return json.loads(_fstx.default_config_json())


def config_hash(config):
    return _fstx.config_hash(json.dumps(config))


def run_experiment(name, config=None, out_dir=None):
    """Runs hyp1, hyp2 or hyp3 and returns the report as a dict."""
    text = "" if config is None else json.dumps(config)
    return json.loads(_fstx.run_experiment(name, text, "" if out_dir is None else str(out_dir)))


__all__ = [
    "ConfigError",
    "DegenerateInputError",
    "DimensionError",
    "FstxError",
    "ParameterError",
    "TrainingError",
    "UndefinedMetricError",
    "config_hash",
    "default_config",
    "delta_stability",
    "exact_shapley",
    "q_mean",
    "q_metric",
    "relevance_mask",
    "run_experiment",
    "sampled_shapley",
    "schedule_count",
    "shapley_of",
    "top_fraction_mask",
    "verify_axioms",
]
