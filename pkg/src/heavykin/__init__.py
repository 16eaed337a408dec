"""Numerical laboratory for kinetic equations with heavy-tailed equilibria."""

from .model import (
    FokkerPlanck,
    FractionalFP,
    ModelParams,
    RatePrediction,
    Regime,
    Scattering,
    alpha_exponent,
    equilibrium,
    gamma_star,
    log_nash_profile,
    nash_profile,
    normalization_constant,
    predicted_rate,
)
from .grid import VelocityGrid, WeightedVector, build_grid, build_radial_grid

__version__ = "0.1.0"

__all__ = [
    "FokkerPlanck",
    "FractionalFP",
    "ModelParams",
    "RatePrediction",
    "Regime",
    "Scattering",
    "VelocityGrid",
    "WeightedVector",
    "alpha_exponent",
    "build_grid",
    "build_radial_grid",
    "equilibrium",
    "gamma_star",
    "log_nash_profile",
    "nash_profile",
    "normalization_constant",
    "predicted_rate",
]
