"""Batch pipeline over a city manifest.

Cities are processed independently in a process pool; each worker owns one
city's rasters. Results are collected, sorted by ``city_id`` and only then
written, so output bytes do not depend on the pool width.
"""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import citymodel
from .citymodel import CityRecord, load_manifest, size_filter
from .errors import AlignmentError, GreencoolError, IoError
from .grid import read_ascii_grid, write_ascii_grid
from .inequality import (WeightScheme, gini_brute_force, gini_from_curve, lorenz_curve, scheme_weights,
                         write_lorenz_csv, write_lorenz_svg)
from .metrics import FLAG_NEGATIVE_CE, CityInputs, CityMetrics, MetricsConfig, metrics_from_prepared, prepare_city
from .scenario import (ScenarioCity, ScenarioConfig, ScenarioResult, aggregate, evaluate_city, format_value,
                       regional_upper_bounds)
from .stats import driver_correlations

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2

METRICS_FILE = "metrics.csv"
ERRORS_FILE = "errors.csv"
GINI_FILE = "gini.csv"
DRIVERS_FILE = "drivers.csv"
SCENARIO_CITY_FILE = "scenario_city.csv"
SCENARIO_AGGREGATE_FILE = "scenario_aggregate.csv"

METRICS_COLUMNS = ("city_id", "global_region", "koppen", "hottest_month", "n_valid", "mean_lst", "mean_ndvi",
                   "min_ndvi", "max_ndvi", "slope", "intercept", "r2", "ce", "cc", "cb", "cb_3km", "cb_5km",
                   "cc_rel", "cb_rel", "reference", "flags")
ERROR_COLUMNS = ("city_id", "stage", "error", "message")
GINI_METRICS = ("cc", "cb", "cb_3km", "cb_5km", "cc_rel", "cb_rel")
SUBSETS = ("all", "north", "south")
SOFT_STAGES = ("size_filter",)


@dataclass
class RunConfig:
    manifest: Path | None = None
    out: Path = Path("out")
    reference: str = "city_min"
    exclude_negative_ce: bool = True
    min_valid_cells: int = citymodel.MIN_VALID_CELLS
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    schemes: tuple = tuple(WeightScheme)
    parallelism: int = 1
    emit_local_maps: bool = False
    emit_lorenz_svg: bool = False
    seed: int = 42

    def metrics_config(self) -> MetricsConfig:
        return MetricsConfig(reference=self.reference, min_valid_cells=self.min_valid_cells)

    @property
    def negative_policy(self) -> str:
        return "exclude" if self.exclude_negative_ce else "clamp"


def load_city_inputs(record: CityRecord, base_dir: Path) -> CityInputs:
    def read(rel):
        p = Path(rel)
        return read_ascii_grid(p if p.is_absolute() else base_dir / p)

    return CityInputs(
        ndvi_monthly=[read(p) for p in record.ndvi_paths],
        lst_monthly=[read(p) for p in record.lst_paths],
        pop=read(record.pop_path),
        water_frac=read(record.water_path),
        qa=read(record.qa_path) if record.qa_path else None,
    )


def _error(city_id, stage, exc):
    return {"city_id": city_id, "stage": stage, "error": type(exc).__name__, "message": str(exc)}


def _compute_worker(task):
    record, base_dir, mconfig, maps_dir = task
    try:
        prep = prepare_city(load_city_inputs(record, base_dir))
    except (GreencoolError, OSError) as exc:
        return record.city_id, None, None, _error(record.city_id, "load", exc)
    n_valid = prep.valid.n
    if n_valid < mconfig.min_valid_cells:
        return record.city_id, n_valid, None, None
    try:
        m = metrics_from_prepared(prep, record.city_id, mconfig, emit_maps=maps_dir is not None)
        if maps_dir is not None:
            for name, g in m.maps.items():
                write_ascii_grid(g, Path(maps_dir) / f"{record.city_id}_{name}.asc")
            m.maps = {}
    except (GreencoolError, OSError) as exc:
        return record.city_id, n_valid, None, _error(record.city_id, "metrics", exc)
    return record.city_id, n_valid, m, None


def _map(fn, tasks, parallelism):
    if parallelism <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(fn, tasks))


def metrics_row(m: CityMetrics, record: CityRecord) -> dict:
    row = {c: getattr(m, c) for c in METRICS_COLUMNS if hasattr(m, c)}
    row["global_region"] = record.global_region
    row["koppen"] = record.koppen
    row["flags"] = ";".join(sorted(m.flags))
    return row


def write_csv(path, columns, rows) -> None:
    try:
        with Path(path).open("w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(columns)
            for r in rows:
                out.writerow([format_value(r[c]) for c in columns])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


_INT_FIELDS = {"hottest_month", "n_valid"}
_STR_FIELDS = {"city_id", "reference"}


def read_metrics_csv(path) -> dict[str, CityMetrics]:
    """Parse ``metrics.csv`` back into :class:`CityMetrics` (floats round-trip exactly)."""
    try:
        fh = Path(path).open(newline="")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    names = {f.name for f in fields(CityMetrics)}
    out = {}
    with fh:
        for row in csv.DictReader(fh):
            kw = {}
            for k, v in row.items():
                if k not in names:
                    continue
                if k in _STR_FIELDS:
                    kw[k] = v
                elif k in _INT_FIELDS:
                    kw[k] = int(v)
                elif k == "flags":
                    kw[k] = frozenset(f for f in v.split(";") if f)
                else:
                    kw[k] = float(v) if v != "" else math.nan
            out[kw["city_id"]] = CityMetrics(**kw)
    return out


def run_validate(manifest_path, min_valid_cells: int = citymodel.MIN_VALID_CELLS):
    """Check files, per-city alignment, mask statistics and the size filter.

    Returns ``(findings, stats)``; ``findings`` is empty for a clean corpus.
    """
    manifest = load_manifest(manifest_path)
    findings, stats = [], []
    missing = manifest.missing_files()
    for city_id, kind, path in missing:
        findings.append({"city_id": city_id, "check": "file", "field": kind, "message": f"missing {kind} raster {path}"})
    broken = {m[0] for m in missing}
    for rec in manifest:
        if rec.city_id in broken:
            continue
        try:
            inputs = load_city_inputs(rec, manifest.base_dir)
        except AlignmentError as exc:
            findings.append({"city_id": rec.city_id, "check": "alignment", "field": exc.field or "", "message": str(exc)})
            continue
        except (GreencoolError, OSError) as exc:
            findings.append({"city_id": rec.city_id, "check": "parse", "field": "", "message": str(exc)})
            continue
        try:
            prep = prepare_city(inputs)
        except GreencoolError as exc:
            findings.append({"city_id": rec.city_id, "check": "masks", "field": "", "message": str(exc)})
            continue
        removed = prep.valid.removed
        stats.append({"city_id": rec.city_id, "n_valid": prep.valid.n, **{f"removed_{k}": v for k, v in removed.items()}})
        if prep.valid.n < min_valid_cells:
            findings.append({"city_id": rec.city_id, "check": "size_filter", "field": "n_valid",
                             "message": f"{prep.valid.n} valid cells < {min_valid_cells}"})
    return findings, stats


def run_compute(config: RunConfig) -> int:
    manifest = load_manifest(config.manifest)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    maps_dir = None
    if config.emit_local_maps:
        maps_dir = out / "maps"
        maps_dir.mkdir(exist_ok=True)
    mconfig = config.metrics_config()
    tasks = [(rec, manifest.base_dir, mconfig, maps_dir) for rec in manifest]
    results = sorted(_map(_compute_worker, tasks, config.parallelism), key=lambda r: r[0])

    # cities whose rasters could not be loaded never reach the size filter
    counts = {cid: n for cid, n, _, _ in results if n is not None}
    kept, rejections = size_filter(manifest, counts, config.min_valid_cells)
    kept_ids = {c.city_id for c in kept}
    by_id = manifest.by_id()
    rows, errors = [], []
    for cid, _, m, err in results:
        if err is not None and cid in kept_ids:
            errors.append(err)
        elif m is not None and cid in kept_ids:
            rows.append(metrics_row(m, by_id[cid]))
    for rej in rejections:
        errors.append({"city_id": rej.city_id, "stage": "size_filter", "error": "SizeFilter",
                       "message": f"{rej.n_valid} valid cells < {rej.min_valid_cells}"})
    errors.sort(key=lambda e: (e["city_id"], e["stage"]))
    write_csv(out / METRICS_FILE, METRICS_COLUMNS, rows)
    write_csv(out / ERRORS_FILE, ERROR_COLUMNS, errors)
    hard = [e for e in errors if e["stage"] not in SOFT_STAGES]
    logger.info("computed %d cities, %d failed, %d below size threshold", len(rows), len(hard), len(rejections))
    return EXIT_PARTIAL if hard else EXIT_OK


def gini_inputs(values, metrics_list, records, scheme, policy):
    """Filter one metric column for Gini: drop NaN, negative-CE cities (or clamp), zero weights."""
    vals = np.array(values, dtype=np.float64)
    w = scheme_weights(records, scheme)
    keep = np.isfinite(vals) & (w > 0)
    if policy == "exclude":
        keep &= np.array([FLAG_NEGATIVE_CE not in m.flags for m in metrics_list], dtype=bool)
    ids = [m.city_id for m, k in zip(metrics_list, keep) if k]
    return np.maximum(vals[keep], 0.0), w[keep], ids


def run_gini(config: RunConfig) -> int:
    manifest = load_manifest(config.manifest)
    out = Path(config.out)
    metrics = read_metrics_csv(out / METRICS_FILE)
    by_id = manifest.by_id()
    ids = sorted(cid for cid in metrics if cid in by_id)
    report = []
    for subset in SUBSETS:
        sub_ids = [cid for cid in ids if subset == "all" or by_id[cid].global_region == subset]
        if not sub_ids:
            logger.warning("subset %s is empty; skipped", subset)
            continue
        ms = [metrics[c] for c in sub_ids]
        recs = [by_id[c] for c in sub_ids]
        for metric in GINI_METRICS:
            for scheme in config.schemes:
                scheme = WeightScheme(scheme)
                vals, w, kept_ids = gini_inputs([getattr(m, metric) for m in ms], ms, recs, scheme,
                                                config.negative_policy)
                if vals.size == 0 or not np.any(vals > 0):
                    logger.warning("no usable values for %s/%s/%s; skipped", subset, metric, scheme.short)
                    continue
                curve = lorenz_curve(vals, w, kept_ids)
                g = gini_from_curve(curve)
                report.append({"subset": subset, "metric": metric, "scheme": scheme.short, "n": vals.size,
                               "gini": g, "gini_pairwise": gini_brute_force(vals, w)})
                stem = f"lorenz_{subset}_{metric}_{scheme.short}"
                write_lorenz_csv(curve, out / f"{stem}.csv")
                if config.emit_lorenz_svg:
                    write_lorenz_svg(curve, out / f"{stem}.svg", title=f"{subset} {metric} ({scheme.short})")
    write_csv(out / GINI_FILE, ("subset", "metric", "scheme", "n", "gini", "gini_pairwise"), report)

    table = {k: [getattr(metrics[c], k) for c in ids] for k in ("cc", "cb", "ce", "mean_ndvi")}
    for k in ("mat", "map_mm", "elev_range", "gdp_per_capita", "area_km2"):
        table[k] = [getattr(by_id[c], k) for c in ids]
    drivers = driver_correlations(table, ("cc", "cb", "ce", "mean_ndvi"),
                                  ("mat", "map_mm", "elev_range", "gdp_per_capita", "area_km2"))
    write_csv(out / DRIVERS_FILE, ("target", "driver", "n", "slope", "intercept", "r2", "pearson_r"), drivers)
    return EXIT_OK


def _scenario_worker(task):
    record, base_dir, m, bounds, sconfig = task
    try:
        prep = prepare_city(load_city_inputs(record, base_dir))
        city = ScenarioCity(record, m, prep.ndvi, prep.pop, prep.valid)
        return record.city_id, evaluate_city(city, bounds, sconfig), None
    except (GreencoolError, OSError) as exc:
        return record.city_id, [], _error(record.city_id, "scenario", exc)


def run_scenario(config: RunConfig) -> int:
    manifest = load_manifest(config.manifest)
    out = Path(config.out)
    metrics = read_metrics_csv(out / METRICS_FILE)
    by_id = manifest.by_id()
    ids = sorted(cid for cid in metrics if cid in by_id)
    bounds = regional_upper_bounds((metrics[c], by_id[c]) for c in ids)
    sconfig = config.scenario
    tasks = [(by_id[c], manifest.base_dir, metrics[c], bounds, sconfig) for c in ids]
    results = sorted(_map(_scenario_worker, tasks, config.parallelism), key=lambda r: r[0])
    rows = [row for _, rs, _ in results for row in rs]
    errors = [err for _, _, err in results if err is not None]
    result = ScenarioResult(rows, aggregate(rows, by_id, sconfig))
    result.write_city_csv(out / SCENARIO_CITY_FILE)
    result.write_aggregate_csv(out / SCENARIO_AGGREGATE_FILE)
    if errors:
        write_csv(out / "scenario_errors.csv", ERROR_COLUMNS, errors)
    return EXIT_PARTIAL if errors else EXIT_OK
