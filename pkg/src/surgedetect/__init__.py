"""Trend changepoint detection and warming-surge testing for annual series."""

from .types import (
    AnnualSeries,
    FitResult,
    ModelSpec,
    Segmentation,
    param_count,
    regime_index,
)
from .ar import ArModel, ar_loglik, fit_ar, sample_acf, simulate_ar1
from .trend import contrast_sd, fit_at, residuals, slope_diff_variance
from .search import bic_penalty, detect, exact_dp_search, exhaustive_search, pelt_search
from .surge import (
    NullParams,
    SurgeGrid,
    mc_null_quantile,
    min_detectable_slope,
    surge_grid,
    surge_grid_from_series,
    t_max,
    t_statistic,
)
from .diagnostics import diagnose, fisher_gallagher_test, shapiro_wilk
from .dataio import DatasetDescriptor, export_normalized, ingest

__version__ = "0.1.0"
