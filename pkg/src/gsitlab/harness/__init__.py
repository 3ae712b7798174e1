"""Configuration, synthetic data, training, diagnostics and the CLI."""

from gsitlab.harness.config import ConfigError, RunConfig
from gsitlab.harness.data import SyntheticSample, gen_dataset, gen_sample, stack
from gsitlab.harness.disorder import DisorderReport, disorder_demo
from gsitlab.harness.stats import WeightReport, weight_report
from gsitlab.harness.train import TrainResult, train

__all__ = [
    "ConfigError",
    "DisorderReport",
    "RunConfig",
    "SyntheticSample",
    "TrainResult",
    "WeightReport",
    "disorder_demo",
    "gen_dataset",
    "gen_sample",
    "stack",
    "train",
    "weight_report",
]
