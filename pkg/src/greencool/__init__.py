"""Cooling metrics, between-city inequality and enhancement scenarios for urban green space."""
from .grid import Grid, GridHeader, ValidCellSet, apply_masks, neighborhood_mean, read_ascii_grid, write_ascii_grid
from .inequality import WeightScheme, gini, gini_brute_force, lorenz_curve
from .metrics import (CityInputs, CityMetrics, MetricsConfig, city_metrics, cooling_benefit, cooling_capacity,
                      cooling_efficiency, relative_cooling)
from .stats import ols_fit, pearson, percentile

__version__ = "0.1.0"

__all__ = [
    "CityInputs", "CityMetrics", "Grid", "GridHeader", "MetricsConfig", "ValidCellSet", "WeightScheme",
    "apply_masks", "city_metrics", "cooling_benefit", "cooling_capacity", "cooling_efficiency", "gini",
    "gini_brute_force", "lorenz_curve", "neighborhood_mean", "ols_fit", "pearson", "percentile",
    "read_ascii_grid", "relative_cooling", "write_ascii_grid",
]
