"""Between-city Lorenz curves and Gini coefficients.

Two independent estimators are provided: :func:`gini` integrates the Lorenz
curve with the trapezoid rule, :func:`gini_brute_force` sums weighted pairwise
absolute differences. They agree analytically for any non-negative values and
positive weights.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ArgumentError, DegenerateInput, IoError


class WeightScheme(str, enum.Enum):
    UNWEIGHTED = "unweighted"
    POPULATION_DENSITY = "population_density"
    POPULATION_SIZE = "population_size"

    @classmethod
    def parse(cls, text: str) -> WeightScheme:
        aliases = {"density": cls.POPULATION_DENSITY, "size": cls.POPULATION_SIZE}
        if text in aliases:
            return aliases[text]
        try:
            return cls(text)
        except ValueError:
            raise ArgumentError(f"unknown weight scheme {text!r}") from None

    @property
    def short(self) -> str:
        return {"unweighted": "unweighted", "population_density": "density", "population_size": "size"}[self.value]


def scheme_weights(records, scheme: WeightScheme) -> np.ndarray:
    """Per-city weights for ``scheme`` from manifest records."""
    scheme = WeightScheme(scheme)
    if scheme is WeightScheme.UNWEIGHTED:
        return np.ones(len(records))
    if scheme is WeightScheme.POPULATION_DENSITY:
        return np.array([r.population / r.area_km2 for r in records], dtype=np.float64)
    return np.array([r.population for r in records], dtype=np.float64)


@dataclass(frozen=True)
class LorenzCurve:
    """Cumulative (weight share, value share) points from (0, 0) to (1, 1)."""

    points: np.ndarray
    order: np.ndarray

    @property
    def weight_share(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def value_share(self) -> np.ndarray:
        return self.points[:, 1]

    def __len__(self):
        return len(self.points)


def _check(values, weights):
    x = np.asarray(values, dtype=np.float64).ravel()
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=np.float64).ravel()
    if x.size != w.size:
        raise ArgumentError(f"values and weights differ in length ({x.size} vs {w.size})")
    if x.size == 0:
        raise DegenerateInput("no values")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
        raise ArgumentError("values and weights must be finite")
    if np.any(x < 0):
        raise ArgumentError("Gini requires non-negative values")
    if np.any(w <= 0):
        raise ArgumentError("weights must be positive")
    if not np.any(x > 0):
        raise DegenerateInput("all values are zero")
    return x, w


def lorenz_curve(values, weights=None, ids=None) -> LorenzCurve:
    """Sort by value (ties by ``ids``, else input position) and accumulate shares."""
    x, w = _check(values, weights)
    if ids is not None:
        if len(ids) != x.size:
            raise ArgumentError("ids length differs from values")
        tie = np.argsort(np.asarray(ids, dtype=str), kind="stable")
        rank = np.empty(x.size, dtype=np.int64)
        rank[tie] = np.arange(x.size)
    else:
        rank = np.arange(x.size)
    order = np.lexsort((rank, x))
    xs, ws = x[order], w[order]
    cw = np.cumsum(ws)
    cv = np.cumsum(xs * ws)
    points = np.empty((x.size + 1, 2))
    points[0] = 0.0
    points[1:, 0] = cw / cw[-1]
    points[1:, 1] = cv / cv[-1]
    points[-1] = 1.0
    return LorenzCurve(points=points, order=order)


def gini_from_curve(curve: LorenzCurve) -> float:
    p, l = curve.weight_share, curve.value_share
    area = kernels.seqsum(np.diff(p) * (l[1:] + l[:-1]))
    return max(0.0, 1.0 - area)


def gini(values, weights=None, ids=None) -> float:
    """Weighted Gini via trapezoid integration of the Lorenz curve."""
    return gini_from_curve(lorenz_curve(values, weights, ids))


def gini_brute_force(values, weights=None) -> float:
    """Weighted Gini from all ordered pairs, O(n^2)."""
    x, w = _check(values, weights)
    total_w = kernels.seqsum(w)
    mu = kernels.seqsum(w * x) / total_w
    return kernels.pairwise_weighted_absdiff(x, w) / (2.0 * total_w * total_w * mu)


def write_lorenz_csv(curve: LorenzCurve, path) -> None:
    try:
        with Path(path).open("w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["cum_weight_share", "cum_value_share"])
            for pw, pv in curve.points.tolist():
                out.writerow([f"{pw:.17g}", f"{pv:.17g}"])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_lorenz_svg(curve: LorenzCurve, path, title: str = "", size: int = 320) -> None:
    """Line of equality plus the Lorenz polyline, in a square SVG."""
    pad = 24
    span = size - 2 * pad

    def xy(pw, pv):
        return f"{pad + pw * span:.3f},{pad + (1.0 - pv) * span:.3f}"

    poly = " ".join(xy(pw, pv) for pw, pv in curve.points.tolist())
    g = gini_from_curve(curve)
    svg = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">\n'
        f'<rect x="{pad}" y="{pad}" width="{span}" height="{span}" fill="none" stroke="#999"/>\n'
        f'<line x1="{pad}" y1="{pad + span}" x2="{pad + span}" y2="{pad}" stroke="#999" stroke-dasharray="4 3"/>\n'
        f'<polyline points="{poly}" fill="none" stroke="#1b7837" stroke-width="1.5"/>\n'
        f'<text x="{pad}" y="{pad - 8}" font-size="11" font-family="sans-serif">{title} Gini={g:.3f}</text>\n'
        "</svg>\n"
    )
    try:
        Path(path).write_text(svg)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
