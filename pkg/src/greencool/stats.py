"""Ordinary least squares, Pearson correlation and linear-interpolation percentiles."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ArgumentError, DegenerateInput, DegenerateX, InsufficientData


@dataclass(frozen=True)
class RegressionResult:
    slope: float
    intercept: float
    r2: float
    n: int


def _pair(x, y):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ArgumentError(f"x and y differ in length ({x.size} vs {y.size})")
    if x.size < 2:
        raise InsufficientData(f"need at least 2 points, got {x.size}")
    return x, y


def ols_fit(x, y) -> RegressionResult:
    """Fit ``y = intercept + slope * x`` by least squares.

    Uses mean-subtracted sums. ``r2`` is 0 when ``y`` is constant.
    """
    x, y = _pair(x, y)
    if np.all(x == x[0]):
        raise DegenerateX("x is constant; slope undefined")
    mx, my, sxx, sxy, syy = kernels.ols_moments(x, y)
    slope = sxy / sxx
    intercept = my - slope * mx
    if syy == 0.0:
        r2 = 0.0
    else:
        r2 = min(1.0, max(0.0, (sxy * sxy) / (sxx * syy)))
    return RegressionResult(slope=slope, intercept=intercept, r2=r2, n=int(x.size))


def pearson(x, y) -> float:
    x, y = _pair(x, y)
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateInput("pearson correlation undefined for a constant series")
    _, _, sxx, sxy, syy = kernels.ols_moments(x, y)
    r = sxy / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def percentile(values, p: float) -> float:
    """Linear interpolation between order statistics at rank ``(n - 1) * p / 100``."""
    if not 0.0 <= p <= 100.0:
        raise ArgumentError(f"percentile must lie in [0, 100], got {p}")
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise InsufficientData("percentile of an empty list")
    h = (v.size - 1) * p / 100.0
    lo = int(math.floor(h))
    frac = h - lo
    if lo >= v.size - 1 or frac == 0.0:
        return float(v[min(lo, v.size - 1)])
    return float(v[lo] + frac * (v[lo + 1] - v[lo]))


def quantiles(values, ps) -> list[float]:
    return [percentile(values, p) for p in ps]


def driver_correlations(table: dict, targets, drivers) -> list[dict]:
    """Univariate OLS and Pearson r of each target column on each driver column.

    ``table`` maps column name to an equal-length sequence; NaN rows are
    dropped pairwise. Pairs that are too short or constant are skipped.
    """
    rows = []
    for target in targets:
        for driver in drivers:
            x = np.asarray(table[driver], dtype=np.float64)
            y = np.asarray(table[target], dtype=np.float64)
            ok = np.isfinite(x) & np.isfinite(y)
            try:
                fit = ols_fit(x[ok], y[ok])
                r = pearson(x[ok], y[ok])
            except (InsufficientData, DegenerateInput):
                continue
            rows.append(
                {"target": target, "driver": driver, "n": fit.n, "slope": fit.slope,
                 "intercept": fit.intercept, "r2": fit.r2, "pearson_r": r}
            )
    return rows
