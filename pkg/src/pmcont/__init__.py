"""Pseudomode ensembles for Gaussian bosonic baths, with analytic continuation
of observables from a physical parameter sweep to an unphysical target."""

from .bath import BathSpec, bath_correlation, brownian_correlation_split, crossover_beta
from .errors import ConfigError, NumericalError
from .field import FieldSpec, sample_field
from .lindblad import IntegratorConfig, SystemSpec, build_generator, propagate
from .params import LAMBDA_C, Mode, PseudomodeSet
from .protocols import ExperimentPreset, reconstruct, run_lambda_sweep

__version__ = "0.1.0"

__all__ = [
    "BathSpec",
    "bath_correlation",
    "brownian_correlation_split",
    "crossover_beta",
    "ConfigError",
    "NumericalError",
    "FieldSpec",
    "sample_field",
    "IntegratorConfig",
    "SystemSpec",
    "build_generator",
    "propagate",
    "LAMBDA_C",
    "Mode",
    "PseudomodeSet",
    "ExperimentPreset",
    "reconstruct",
    "run_lambda_sweep",
]
