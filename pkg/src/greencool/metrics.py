"""Per-city cooling metrics.

Internally the LST-NDVI slope is kept in degC per NDVI unit. The reported
cooling efficiency ``ce`` is per 0.01 NDVI and positive when greener cells
are cooler, so ``slope_magnitude == -slope == 100 * ce``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .citymodel import MIN_VALID_CELLS, CityRecord
from .errors import ArgumentError, DataError, GreencoolError, NearLimitError
from .grid import Grid, ValidCellSet, align_check, apply_masks, neighborhood_mean
from .stats import RegressionResult, ols_fit

logger = logging.getLogger(__name__)

T_MAX = 45.0
T_MAX_GUARD = 0.5
REFERENCES = ("city_min", "zero")

FLAG_NEGATIVE_CE = "negative_ce"
FLAG_LOW_N = "low_n"
FLAG_T_NEAR_MAX = "t_near_max"


@dataclass
class CityInputs:
    ndvi_monthly: list
    lst_monthly: list
    pop: Grid
    water_frac: Grid
    qa: Grid | None = None

    def __post_init__(self):
        self.ndvi_monthly = list(self.ndvi_monthly)
        self.lst_monthly = list(self.lst_monthly)
        for name, seq in (("ndvi", self.ndvi_monthly), ("lst", self.lst_monthly)):
            if len(seq) not in (1, 12):
                raise ArgumentError(f"{name} needs 1 or 12 monthly grids, got {len(seq)}")
        grids = self.ndvi_monthly + self.lst_monthly + [self.pop, self.water_frac]
        names = [f"ndvi[{i}]" for i in range(len(self.ndvi_monthly))]
        names += [f"lst[{i}]" for i in range(len(self.lst_monthly))] + ["pop", "water_frac"]
        if self.qa is not None:
            grids.append(self.qa)
            names.append("qa")
        align_check(grids, names)


@dataclass
class MetricsConfig:
    reference: str = "city_min"
    min_valid_cells: int = MIN_VALID_CELLS
    t_max: float = T_MAX
    windows: tuple = (3, 5)

    def __post_init__(self):
        if self.reference not in REFERENCES:
            raise ArgumentError(f"reference must be one of {REFERENCES}, got {self.reference!r}")


@dataclass
class CityMetrics:
    city_id: str
    hottest_month: int
    n_valid: int
    mean_lst: float
    mean_ndvi: float
    min_ndvi: float
    max_ndvi: float
    slope: float
    intercept: float
    r2: float
    ce: float
    cc: float
    cb: float
    cb_3km: float
    cb_5km: float
    cc_rel: float
    cb_rel: float
    reference: str = "city_min"
    flags: frozenset = frozenset()
    maps: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def slope_magnitude(self) -> float:
        return -self.slope


def _valid_values(grid: Grid, valid: ValidCellSet) -> np.ndarray:
    if valid.shape != grid.shape:
        raise DataError(f"valid-cell set shape {valid.shape} does not match grid {grid.shape}")
    return valid.take(grid)


def select_hottest_month(lst_monthly, valid: ValidCellSet):
    """Return ``(month, grid)`` for the month with the highest mean LST.

    Months are numbered 1-12. The mean uses cells of ``valid`` that are also
    valid in that month's grid. Ties go to the earliest month.
    """
    lst_monthly = list(lst_monthly)
    if len(lst_monthly) != 12:
        raise ArgumentError(f"expected 12 monthly LST grids, got {len(lst_monthly)}")
    align_check(lst_monthly, [f"lst[{i}]" for i in range(12)])
    best, best_mean = None, -math.inf
    for month, g in enumerate(lst_monthly, start=1):
        idx = valid.indices[g.valid.ravel()[valid.indices]]
        if idx.size == 0:
            raise DataError(f"month {month} has no valid LST cells")
        mean = kernels.seqsum(g.flat()[idx]) / idx.size
        if mean > best_mean:
            best, best_mean = month, mean
    return best, lst_monthly[best - 1]


def cooling_efficiency(lst: Grid, ndvi: Grid, valid: ValidCellSet) -> tuple[RegressionResult, float]:
    """OLS of LST on NDVI over the valid cells; ``ce = -slope / 100``."""
    fit = ols_fit(_valid_values(ndvi, valid), _valid_values(lst, valid))
    return fit, -fit.slope / 100.0


def resolve_reference(ndvi: Grid, valid: ValidCellSet, reference) -> float:
    """NDVI value that local cooling is measured against.

    ``reference`` is ``"city_min"`` (minimum valid NDVI), ``"zero"``, or an
    explicit number.
    """
    if isinstance(reference, str):
        if reference in ("city_min", "min", "city_min_original"):
            vals = _valid_values(ndvi, valid)
            if vals.size == 0:
                raise DataError("empty valid-cell set")
            return float(vals.min())
        if reference == "zero":
            return 0.0
        raise ArgumentError(f"unknown reference {reference!r}")
    return float(reference)


def cooling_capacity(ndvi: Grid, valid: ValidCellSet, slope_magnitude: float, reference="city_min"):
    """City-mean cooling relative to the reference NDVI.

    ``local_i = (ndvi_i - ref) * slope_magnitude``; returns ``(cc, local_grid)``.
    """
    if valid.n == 0:
        raise DataError("cooling capacity of an empty valid-cell set")
    ref = resolve_reference(ndvi, valid, reference)
    local = (_valid_values(ndvi, valid) - ref) * slope_magnitude
    cc = kernels.seqsum(local) / valid.n
    return cc, _scatter(ndvi, valid, local)


def _scatter(like: Grid, valid: ValidCellSet, vals: np.ndarray) -> Grid:
    flat = np.full(like.shape[0] * like.shape[1], like.header.nodata_value)
    flat[valid.indices] = vals
    return Grid(like.header, flat.reshape(like.shape), valid.mask)


def population_at(pop: Grid, valid: ValidCellSet) -> np.ndarray:
    """Population per valid cell; nodata population counts as zero."""
    if valid.shape != pop.shape:
        raise DataError("population grid does not match valid-cell set")
    p = np.where(pop.valid.ravel()[valid.indices], pop.flat()[valid.indices], 0.0)
    if np.any(p < 0):
        raise DataError("negative population")
    return p


def weighted_mean(values: np.ndarray, weights: np.ndarray) -> float:
    """Population-weighted mean; exactly the plain mean when weights are uniform."""
    if values.size == 0:
        raise DataError("weighted mean of no cells")
    if np.all(weights == weights[0]):
        if weights[0] <= 0:
            raise DataError("total population is zero")
        return kernels.seqsum(values) / values.size
    num, den = kernels.weighted_sums(values, weights)
    if not den > 0:
        raise DataError("total population is zero")
    return num / den


def cooling_benefit(local_cc: Grid, pop: Grid, valid: ValidCellSet):
    """Population-weighted mean of local cooling; returns ``(cb, local_cb_grid)``.

    ``local_cb_i = local_cc_i * pop_i / mean_pop`` with the mean over valid cells.
    """
    local = _valid_values(local_cc, valid)
    p = population_at(pop, valid)
    cb = weighted_mean(local, p)
    mean_pop = kernels.seqsum(p) / p.size
    return cb, _scatter(local_cc, valid, local * (p / mean_pop))


def relative_cooling(value: float, mean_lst: float, t_max: float = T_MAX) -> float:
    """Cooling divided by the headroom ``t_max - mean_lst``."""
    if mean_lst > t_max - T_MAX_GUARD:
        raise NearLimitError(f"mean LST {mean_lst:.3f} is within {T_MAX_GUARD} degC of t_max {t_max}")
    return value / (t_max - mean_lst)


def multiscale_benefit(ndvi: Grid, valid: ValidCellSet, slope_magnitude: float, reference, pop: Grid,
                       window: int) -> float:
    """Cooling benefit with each cell's NDVI replaced by its neighborhood mean.

    The reference NDVI comes from the unsmoothed grid.
    """
    ref = resolve_reference(ndvi, valid, reference)
    smoothed = neighborhood_mean(ndvi, valid, window)
    _, local = cooling_capacity(smoothed, valid, slope_magnitude, reference=ref)
    cb, _ = cooling_benefit(local, pop, valid)
    return cb


@dataclass
class PreparedCity:
    """Hottest-month NDVI/LST grids and valid cells for one city."""

    hottest_month: int
    ndvi: Grid
    lst: Grid
    pop: Grid
    valid: ValidCellSet


def prepare_city(inputs: CityInputs) -> PreparedCity:
    """Pick the hottest month (when monthly data is given) and apply the cell masks.

    The month is chosen over cells that pass the water and QA masks and are
    valid in every monthly LST grid; the full mask is then applied to that
    month's NDVI and LST.
    """
    if len(inputs.lst_monthly) == 12:
        pre = inputs.water_frac.valid & (inputs.water_frac.values <= 0.20)
        if inputs.qa is not None:
            pre &= inputs.qa.valid & (inputs.qa.values == 1)
        for g in inputs.lst_monthly:
            pre &= g.valid
        month, lst = select_hottest_month(inputs.lst_monthly, ValidCellSet.from_mask(pre))
    else:
        month, lst = 0, inputs.lst_monthly[0]
    if len(inputs.ndvi_monthly) == 12:
        ndvi = inputs.ndvi_monthly[(month or 1) - 1]
    else:
        ndvi = inputs.ndvi_monthly[0]
    valid = apply_masks(ndvi, lst, inputs.water_frac, inputs.qa)
    return PreparedCity(month, ndvi, lst, inputs.pop, valid)


def city_metrics(inputs: CityInputs, record: CityRecord, config: MetricsConfig | None = None,
                 emit_maps: bool = False) -> CityMetrics:
    """Run masks, month selection, regression and every cooling metric for one city."""
    config = config or MetricsConfig()
    try:
        prep = prepare_city(inputs)
        return metrics_from_prepared(prep, record.city_id, config, emit_maps)
    except GreencoolError as exc:
        exc.city_id = record.city_id
        exc.args = (f"{record.city_id}: {exc}",)
        raise


def metrics_from_prepared(prep: PreparedCity, city_id: str, config: MetricsConfig,
                          emit_maps: bool = False) -> CityMetrics:
    valid, ndvi, lst, pop = prep.valid, prep.ndvi, prep.lst, prep.pop
    flags = set()
    if valid.n < config.min_valid_cells:
        flags.add(FLAG_LOW_N)
    fit, ce = cooling_efficiency(lst, ndvi, valid)
    if fit.slope > 0:
        flags.add(FLAG_NEGATIVE_CE)
    sm = -fit.slope
    cc, local_cc = cooling_capacity(ndvi, valid, sm, config.reference)
    cb, local_cb = cooling_benefit(local_cc, pop, valid)
    ndvi_vals = valid.take(ndvi)
    min_ndvi = float(ndvi_vals.min())
    mean_lst = kernels.seqsum(valid.take(lst)) / valid.n
    try:
        cc_rel = relative_cooling(cc, mean_lst, config.t_max)
        cb_rel = relative_cooling(cb, mean_lst, config.t_max)
    except NearLimitError:
        flags.add(FLAG_T_NEAR_MAX)
        cc_rel = cb_rel = math.nan
    scaled = {w: multiscale_benefit(ndvi, valid, sm, config.reference, pop, w) for w in config.windows}
    maps = {"local_cc": local_cc, "local_cb": local_cb} if emit_maps else {}
    return CityMetrics(
        city_id=city_id,
        hottest_month=prep.hottest_month,
        n_valid=valid.n,
        mean_lst=mean_lst,
        mean_ndvi=min_ndvi + kernels.seqsum(ndvi_vals - min_ndvi) / valid.n,
        min_ndvi=min_ndvi,
        max_ndvi=float(ndvi_vals.max()),
        slope=fit.slope,
        intercept=fit.intercept,
        r2=fit.r2,
        ce=ce,
        cc=cc,
        cb=cb,
        cb_3km=scaled.get(3, math.nan),
        cb_5km=scaled.get(5, math.nan),
        cc_rel=cc_rel,
        cb_rel=cb_rel,
        reference=config.reference,
        flags=frozenset(flags),
        maps=maps,
    )
