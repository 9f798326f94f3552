"""Bivariate (network) meta-analysis models for surrogate endpoint evaluation."""

__version__ = "0.1.0"

from .data_model import (
    Dataset,
    DataValidationError,
    DisconnectedNetworkError,
    Network,
    StudyRecord,
    build_network,
    parse_dataset,
    read_dataset,
    serialize_dataset,
)
from .models import VARIANTS, ModelSpec, SurrogateModel
from .sampler import McmcSettings, PosteriorDraws, dic, run_mcmc, summarize
from .simulation import ScenarioSpec, builtin_scenario, simulate

__all__ = [
    "Dataset", "DataValidationError", "DisconnectedNetworkError", "Network", "StudyRecord",
    "build_network", "parse_dataset", "read_dataset", "serialize_dataset",
    "VARIANTS", "ModelSpec", "SurrogateModel",
    "McmcSettings", "PosteriorDraws", "dic", "run_mcmc", "summarize",
    "ScenarioSpec", "builtin_scenario", "simulate",
]
