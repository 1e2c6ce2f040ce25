"""Autoregressive transport models for distributional time series.

Simulation, least-squares estimation, residual autocorrelation diagnostics
(McLeod-type and sample-splitting portmanteau tests), Monte Carlo studies
and an empirical pipeline from raw per-period samples.
"""

from .atm import POLY, POWER, TRIG, AtmConfig, FamilyKind, InnovationFamily, simulate
from .chisquare import chi_square_cdf, chi_square_quantile, chi_square_sf
from .diagnostics import (
    condition_check,
    covariance_mcleod,
    g_derivative,
    mcleod_test,
    residuals,
    sample_acf,
    split_test,
)
from .errors import AtmError
from .estimation import AlphaFit, fit_alpha, m_hat
from .grid_transport import (
    UNIT,
    AtmSeries,
    Grid,
    Interval,
    MonotoneCurve,
    alpha_contract,
    barycenter,
    compose,
    d1_distance,
    evaluate,
    identity,
    invert,
    wasserstein_distance,
)

__all__ = [
    "POLY", "POWER", "TRIG", "AtmConfig", "FamilyKind", "InnovationFamily", "simulate",
    "chi_square_cdf", "chi_square_quantile", "chi_square_sf",
    "condition_check", "covariance_mcleod", "g_derivative", "mcleod_test", "residuals",
    "sample_acf", "split_test",
    "AtmError", "AlphaFit", "fit_alpha", "m_hat",
    "UNIT", "AtmSeries", "Grid", "Interval", "MonotoneCurve", "alpha_contract", "barycenter",
    "compose", "d1_distance", "evaluate", "identity", "invert", "wasserstein_distance",
]
