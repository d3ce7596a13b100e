"""Distributional time-series forecasting with weighted EDMD."""

__version__ = "0.1.0"

from .basis import Dictionary, build_dictionary
from .density import KdeModel, importance_weights, kde_fit
from .forecast import (
    DpddConfig,
    ForecastDensity,
    ModalCoefficients,
    dpdd_forecast,
    fit_dpdd,
    make_grid,
    project_coefficients,
    propagate_coefficients,
    reconstruct_density,
)
from .koopman import KoopmanError, KoopmanModel, fit_koopman, truncate_modes
from .panel import DistributionPanel
from .sim import BenchmarkConfig, DgpSpec, default_specs, generate, run_benchmark
from .transport import QuantileCurve, mse_w2, w2_assignment, w2_quantile_grid, w2_sorted_samples

__all__ = [
    "BenchmarkConfig",
    "DgpSpec",
    "Dictionary",
    "DistributionPanel",
    "DpddConfig",
    "ForecastDensity",
    "KdeModel",
    "KoopmanError",
    "KoopmanModel",
    "ModalCoefficients",
    "QuantileCurve",
    "build_dictionary",
    "default_specs",
    "dpdd_forecast",
    "fit_dpdd",
    "fit_koopman",
    "generate",
    "importance_weights",
    "kde_fit",
    "make_grid",
    "mse_w2",
    "project_coefficients",
    "propagate_coefficients",
    "reconstruct_density",
    "run_benchmark",
    "truncate_modes",
    "w2_assignment",
    "w2_quantile_grid",
    "w2_sorted_samples",
]
