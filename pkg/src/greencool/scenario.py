"""Potential cooling under greener, more efficient or better-matched cities.

For each city and percentile ``p`` the NDVI target is the ``p``-th percentile
of the per-city NDVI maxima in the city's climate class, and the cooling
efficiency target is the ``p``-th percentile of that class's per-city CE.
Cells and cities already above a target keep their own value. Potential
capacity always uses the city's original (pre-enhancement) reference NDVI.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .citymodel import CityRecord
from .errors import ArgumentError, ConfigError, DegenerateInput, IoError
from .grid import Grid, ValidCellSet
from .inequality import WeightScheme, gini, scheme_weights
from .metrics import FLAG_NEGATIVE_CE, CityMetrics, population_at, resolve_reference, weighted_mean
from . import kernels
from .stats import percentile, quantiles

logger = logging.getLogger(__name__)

MODES = ("ndvi_only", "ce_only", "both")
DEFAULT_PERCENTILES = (50, 60, 70, 80, 90)
AGGREGATE_QUANTILES = (2.5, 25.0, 50.0, 75.0, 97.5)
SCENARIO_REFERENCES = ("city_min_original", "zero")
NEGATIVE_POLICIES = ("exclude", "clamp")


@dataclass(frozen=True)
class RegionBounds:
    ndvi_max: np.ndarray
    ce: np.ndarray


class RegionalBounds(dict):
    """Mapping of Koppen class to :class:`RegionBounds`."""

    def __missing__(self, koppen):
        raise ConfigError(f"no regional upper bounds for climate class {koppen!r}")


def regional_upper_bounds(entries) -> RegionalBounds:
    """Group per-city NDVI maxima and CE by Koppen class.

    ``entries`` yields ``(CityMetrics, CityRecord)`` pairs; the NDVI maximum
    is ``CityMetrics.max_ndvi`` (over valid cells).
    """
    ndvi: dict[str, list] = {}
    ce: dict[str, list] = {}
    for m, rec in entries:
        ndvi.setdefault(rec.koppen, []).append(m.max_ndvi)
        ce.setdefault(rec.koppen, []).append(m.ce)
    bounds = RegionalBounds()
    for k in sorted(ndvi):
        bounds[k] = RegionBounds(np.sort(np.array(ndvi[k], dtype=np.float64)), np.sort(np.array(ce[k], dtype=np.float64)))
    return bounds


@dataclass(frozen=True)
class ScenarioConfig:
    percentiles: tuple = DEFAULT_PERCENTILES
    modes: tuple = MODES
    idealize: tuple = (False,)
    reference: str = "city_min_original"
    schemes: tuple = tuple(WeightScheme)
    negative_policy: str = "exclude"

    def __post_init__(self):
        ps = tuple(float(p) for p in self.percentiles)
        if not ps or any(not 0.0 <= p <= 100.0 for p in ps):
            raise ArgumentError(f"percentiles must lie in [0, 100], got {self.percentiles}")
        object.__setattr__(self, "percentiles", tuple(sorted(set(ps))))
        modes = tuple(self.modes)
        bad = [m for m in modes if m not in MODES]
        if bad or not modes:
            raise ArgumentError(f"unknown scenario mode(s) {bad}; choose from {MODES}")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "idealize", tuple(bool(i) for i in self.idealize))
        if self.reference not in SCENARIO_REFERENCES:
            raise ArgumentError(f"scenario reference must be one of {SCENARIO_REFERENCES}")
        object.__setattr__(self, "schemes", tuple(WeightScheme(s) for s in self.schemes))
        if self.negative_policy not in NEGATIVE_POLICIES:
            raise ArgumentError(f"negative_policy must be one of {NEGATIVE_POLICIES}")


def enhance_ndvi(ndvi: Grid, valid: ValidCellSet, target: float) -> Grid:
    """Raise valid cells below ``target`` to ``target``; other cells are untouched."""
    mask = valid.mask
    raised = np.where(mask, np.maximum(ndvi.values, target), ndvi.values)
    return Grid(ndvi.header, raised, ndvi.valid)


def enhance_ce(ce_city: float, region_ce_list, p: float) -> float:
    return max(ce_city, percentile(region_ce_list, p))


def idealize_distribution(ndvi_values, pop_values) -> np.ndarray:
    """Rank-match population to NDVI: rows of ``(pop, ndvi)``, both descending.

    Ties in either sequence keep the lower cell index first.
    """
    ndvi_values = np.asarray(ndvi_values, dtype=np.float64)
    pop_values = np.asarray(pop_values, dtype=np.float64)
    if ndvi_values.shape != pop_values.shape:
        raise ArgumentError("ndvi and population sequences differ in length")
    pop_sorted = pop_values[np.argsort(-pop_values, kind="stable")]
    ndvi_sorted = ndvi_values[np.argsort(-ndvi_values, kind="stable")]
    return np.column_stack([pop_sorted, ndvi_sorted])


def idealized_population(ndvi_values, pop_values) -> np.ndarray:
    """Population reassigned so the ``k``-th greenest cell holds the ``k``-th largest count."""
    ndvi_values = np.asarray(ndvi_values, dtype=np.float64)
    pop_values = np.asarray(pop_values, dtype=np.float64)
    out = np.empty_like(pop_values)
    out[np.argsort(-ndvi_values, kind="stable")] = pop_values[np.argsort(-pop_values, kind="stable")]
    return out


@dataclass
class ScenarioCity:
    """Baseline state of one city needed to evaluate its potentials."""

    record: CityRecord
    metrics: CityMetrics
    ndvi: Grid
    pop: Grid
    valid: ValidCellSet

    @property
    def city_id(self) -> str:
        return self.record.city_id


def _potential(ndvi_vals, pop_vals, ref, slope_magnitude, idealize):
    local = (ndvi_vals - ref) * slope_magnitude
    cc = kernels.seqsum(local) / local.size
    weights = idealized_population(ndvi_vals, pop_vals) if idealize else pop_vals
    return cc, weighted_mean(local, weights)


def evaluate_city(city: ScenarioCity, bounds: RegionalBounds, config: ScenarioConfig) -> list[dict]:
    """Potential cc/cb rows for every (percentile, mode, idealize) combination."""
    region = bounds[city.record.koppen]
    ref_kind = "city_min" if config.reference == "city_min_original" else "zero"
    ref = resolve_reference(city.ndvi, city.valid, ref_kind)
    ndvi_vals = city.valid.take(city.ndvi)
    pop_vals = population_at(city.pop, city.valid)
    sm = city.metrics.slope_magnitude
    ce = city.metrics.ce
    base_cc, base_cb = _potential(ndvi_vals, pop_vals, ref, sm, False)
    rows = []
    for p in config.percentiles:
        target = percentile(region.ndvi_max, p)
        ce_target = percentile(region.ce, p)
        if ce_target > ce:
            sm_enh, ce_enh = max(sm, 100.0 * ce_target), ce_target
        else:
            sm_enh, ce_enh = sm, ce
        raised = np.maximum(ndvi_vals, target)
        for mode in config.modes:
            vals = ndvi_vals if mode == "ce_only" else raised
            slope_mag = sm if mode == "ndvi_only" else sm_enh
            for ideal in config.idealize:
                cc, cb = _potential(vals, pop_vals, ref, slope_mag, ideal)
                rows.append({
                    "city_id": city.city_id,
                    "global_region": city.record.global_region,
                    "koppen": city.record.koppen,
                    "percentile": p,
                    "mode": mode,
                    "idealize": ideal,
                    "ndvi_target": target if mode != "ce_only" else math.nan,
                    "ce_potential": ce_enh if mode != "ndvi_only" else ce,
                    "baseline_cc": base_cc,
                    "baseline_cb": base_cb,
                    "potential_cc": cc,
                    "potential_cb": cb,
                    "negative_ce": FLAG_NEGATIVE_CE in city.metrics.flags,
                })
    return rows


def _gini_or_nan(values, weights, ids):
    try:
        return gini(values, weights, ids)
    except DegenerateInput:
        return math.nan


def _prepare_values(values, negative, policy):
    values = np.asarray(values, dtype=np.float64)
    keep = np.isfinite(values)
    if policy == "exclude":
        keep &= ~np.asarray(negative, dtype=bool)
    return keep, np.maximum(values, 0.0)


class ScenarioResult:
    """Per-city potentials plus cross-city quantiles and Gini per combination."""

    CITY_COLUMNS = ("city_id", "global_region", "koppen", "percentile", "mode", "idealize", "ndvi_target",
                    "ce_potential", "baseline_cc", "baseline_cb", "potential_cc", "potential_cb")

    def __init__(self, city_rows, aggregate_rows):
        self.city_rows = city_rows
        self.aggregate_rows = aggregate_rows

    def rows_for(self, city_id):
        return [r for r in self.city_rows if r["city_id"] == city_id]

    @property
    def aggregate_columns(self):
        return tuple(self.aggregate_rows[0]) if self.aggregate_rows else ()

    def write_city_csv(self, path) -> None:
        _write_rows(path, self.CITY_COLUMNS, self.city_rows)

    def write_aggregate_csv(self, path) -> None:
        _write_rows(path, self.aggregate_columns, self.aggregate_rows)


def format_value(v) -> str:
    """CSV cell text: 17 significant digits for floats, blank for NaN, on/off for flags."""
    if isinstance(v, (bool, np.bool_)):
        return "on" if v else "off"
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else f"{float(v):.17g}"
    return str(v)


def _write_rows(path, columns, rows) -> None:
    try:
        with Path(path).open("w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(columns)
            for r in rows:
                out.writerow([format_value(r[c]) for c in columns])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def aggregate(city_rows, records: dict, config: ScenarioConfig) -> list[dict]:
    """Cross-city quantiles and Gini for every combination, subset and metric.

    Rows are sorted by ``city_id`` before any reduction.
    """
    rows = sorted(city_rows, key=lambda r: (r["city_id"], r["percentile"], MODES.index(r["mode"]), r["idealize"]))
    combos = {}
    for r in rows:
        combos.setdefault((r["percentile"], r["mode"], r["idealize"]), []).append(r)
    out = []
    ideal_keys = sorted(set(config.idealize))
    # baseline columns repeat on every row; read them from the first combination
    first = (config.percentiles[0], config.modes[0], ideal_keys[0])
    keys = [("baseline", None, False)]
    keys += [(p, m, i) for p in config.percentiles for m in config.modes for i in ideal_keys]
    for p, mode, ideal in keys:
        if p == "baseline":
            group = combos.get(first, [])
            label_p, label_mode = "baseline", "baseline"
        else:
            group = combos.get((p, mode, ideal), [])
            label_p, label_mode = p, mode
        for subset in ("all", "north", "south"):
            sub = [r for r in group if subset == "all" or r["global_region"] == subset]
            if not sub:
                continue
            recs = [records[r["city_id"]] for r in sub]
            ids = [r["city_id"] for r in sub]
            negative = [r["negative_ce"] for r in sub]
            for metric in ("cc", "cb"):
                col = f"baseline_{metric}" if p == "baseline" else f"potential_{metric}"
                vals = np.array([r[col] for r in sub], dtype=np.float64)
                row = {"percentile": label_p, "mode": label_mode, "idealize": ideal, "subset": subset,
                       "metric": metric, "n": len(sub)}
                for q, v in zip(AGGREGATE_QUANTILES, quantiles(vals, AGGREGATE_QUANTILES)):
                    row[f"q{q:g}".replace(".", "_")] = v
                row["mean"] = kernels.seqsum(vals) / vals.size
                keep, clean = _prepare_values(vals, negative, config.negative_policy)
                for scheme in config.schemes:
                    w = scheme_weights(recs, scheme)
                    k = keep & (w > 0)
                    g = _gini_or_nan(clean[k], w[k], [i for i, kk in zip(ids, k) if kk]) if k.any() else math.nan
                    row[f"gini_{scheme.short}"] = g
                out.append(row)
    return out


def scenario_run(cities, bounds: RegionalBounds, config: ScenarioConfig) -> ScenarioResult:
    """Evaluate every city, then reduce across cities in ``city_id`` order."""
    cities = sorted(cities, key=lambda c: c.city_id)
    rows = []
    for city in cities:
        rows.extend(evaluate_city(city, bounds, config))
    records = {c.city_id: c.record for c in cities}
    return ScenarioResult(rows, aggregate(rows, records, config))
