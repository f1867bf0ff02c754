"""Gaussian quantum trajectories of a continuously measured mechanical oscillator."""

from .model import DerivedRates, ModelParams, derive_rates, params_from_config, table_s2

__version__ = "0.1.0"

__all__ = ["DerivedRates", "ModelParams", "derive_rates", "params_from_config", "table_s2"]
