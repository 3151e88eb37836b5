"""Seeded synthetic city corpora with a ground-truth sidecar.

Every city gets an NDVI field, an LST field that is affine in NDVI (plus
optional Gaussian noise), a population field, a water-fraction field and
optionally a QA raster. The sidecar ``synth_truth.csv`` records the generator
coefficients and a direct evaluation of cooling capacity/benefit computed
here from the in-memory arrays, without touching :mod:`greencool.metrics`.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .citymodel import KOPPEN_CLASSES, CityRecord, Manifest, write_manifest
from .errors import ArgumentError, IoError
from .grid import Grid, GridHeader, write_ascii_grid

NDVI_MODELS = ("uniform_random", "gradient", "clustered")
POP_MODELS = ("uniform", "clustered", "anti_correlated")
NODATA = -9999.0
TRUTH_FILE = "synth_truth.csv"
MANIFEST_FILE = "manifest.csv"


@dataclass(frozen=True)
class SynthSpec:
    n_cities: int = 20
    nrows: int = 30
    ncols: int = 30
    slopes: tuple | None = None
    slope_range: tuple = (-25.0, -5.0)
    ndvi_model: str = "mixed"
    pop_model: str = "mixed"
    lst_noise_sd: float = 0.0
    koppen: tuple = ("tropical", "temperate")
    months: int = 12
    with_qa: bool = True
    seed: int = 42

    def __post_init__(self):
        if self.n_cities < 1 or self.nrows < 1 or self.ncols < 1:
            raise ArgumentError("n_cities, nrows and ncols must be positive")
        if self.ndvi_model not in NDVI_MODELS + ("mixed",):
            raise ArgumentError(f"unknown ndvi model {self.ndvi_model!r}")
        if self.pop_model not in POP_MODELS + ("mixed",):
            raise ArgumentError(f"unknown population model {self.pop_model!r}")
        if self.months not in (1, 12):
            raise ArgumentError("months must be 1 or 12")
        if self.lst_noise_sd < 0:
            raise ArgumentError("lst_noise_sd must be non-negative")
        if self.slopes is not None and len(self.slopes) != self.n_cities:
            raise ArgumentError("slopes must list one value per city")
        bad = [k for k in self.koppen if k not in KOPPEN_CLASSES]
        if bad or not self.koppen:
            raise ArgumentError(f"koppen classes must come from {KOPPEN_CLASSES}")
        if self.seed < 0:
            raise ArgumentError("seed must be unsigned")

    def city_models(self, i: int) -> tuple[str, str]:
        ndvi = NDVI_MODELS[i % 3] if self.ndvi_model == "mixed" else self.ndvi_model
        # offset so mixed corpora cover every (ndvi, pop) pairing
        pop = POP_MODELS[(i // 3 + i) % 3] if self.pop_model == "mixed" else self.pop_model
        return ndvi, pop


def _blobs(rng, shape, k):
    rows, cols = np.mgrid[0:shape[0], 0:shape[1]]
    field = np.zeros(shape)
    scale = max(shape) / 6.0 + 0.5
    for _ in range(k):
        r0, c0 = rng.uniform(0, shape[0]), rng.uniform(0, shape[1])
        field += np.exp(-((rows - r0) ** 2 + (cols - c0) ** 2) / (2 * scale**2))
    return field


def _rescale(field, lo, hi):
    span = field.max() - field.min()
    if span == 0:
        return np.full_like(field, (lo + hi) / 2)
    return lo + (hi - lo) * (field - field.min()) / span


def ndvi_field(rng, shape, model):
    if model == "uniform_random":
        return rng.uniform(0.02, 0.85, shape)
    if model == "gradient":
        ramp = np.broadcast_to(np.linspace(0.05, 0.8, shape[1]), shape)
        return np.clip(ramp + rng.normal(0, 0.02, shape), 0.0, 0.9)
    return np.clip(_rescale(_blobs(rng, shape, 4), 0.05, 0.8) + rng.normal(0, 0.01, shape), 0.0, 0.9)


def pop_field(rng, ndvi, model):
    shape = ndvi.shape
    if model == "uniform":
        return np.full(shape, 1000.0)
    if model == "clustered":
        return np.round(50.0 + 5000.0 * _rescale(_blobs(rng, shape, 3), 0.0, 1.0))
    inv = _rescale(-ndvi, 0.0, 1.0)
    return np.round(20.0 + 5000.0 * inv**2)


def _boundary(shape):
    """Ellipse inscribed in the grid; corners fall outside the city."""
    if min(shape) < 8:
        return np.ones(shape, dtype=bool)
    r, c = np.mgrid[0:shape[0], 0:shape[1]]
    rr = (r + 0.5 - shape[0] / 2) / (shape[0] / 2)
    cc = (c + 0.5 - shape[1] / 2) / (shape[1] / 2)
    return rr**2 + cc**2 <= 1.15


def _month_offsets(hot: int) -> np.ndarray:
    m = np.arange(1, 13)
    return 1.0 + 3.0 * (1.0 - np.cos(2 * np.pi * (m - hot) / 12.0))


@dataclass
class SynthCity:
    record: CityRecord
    hottest_month: int
    ndvi: list
    lst: list
    pop: np.ndarray
    water: np.ndarray
    qa: np.ndarray | None
    inside: np.ndarray
    slope: float
    intercept: float
    ndvi_model: str
    pop_model: str


def make_city(spec: SynthSpec, i: int) -> SynthCity:
    rng = np.random.default_rng([spec.seed, i])
    shape = (spec.nrows, spec.ncols)
    ndvi_model, pop_model = spec.city_models(i)
    slope = float(spec.slopes[i]) if spec.slopes is not None else float(rng.uniform(*spec.slope_range))
    intercept = float(rng.uniform(35.0, 42.0))

    ndvi = ndvi_field(rng, shape, ndvi_model)
    pop = pop_field(rng, ndvi, pop_model)
    n = ndvi.size
    n_neg = int(round(0.01 * n))
    if n_neg:
        neg = rng.choice(n, size=n_neg, replace=False)
        ndvi.flat[neg] = rng.uniform(-0.1, -0.01, n_neg)

    water = rng.uniform(0.0, 0.2, shape)
    n_wet = int(round(0.03 * n))
    if n_wet:
        wet = rng.choice(n, size=n_wet, replace=False)
        water.flat[wet] = rng.uniform(0.25, 0.9, n_wet)
    water.flat[rng.integers(0, n)] = 0.2

    qa = None
    if spec.with_qa and i % 3 == 2:
        qa = np.ones(shape)
        n_bad = int(round(0.01 * n))
        if n_bad:
            qa.flat[rng.choice(n, size=n_bad, replace=False)] = 0.0

    lst_hot = intercept + slope * ndvi
    if spec.lst_noise_sd > 0:
        lst_hot = lst_hot + rng.normal(0.0, spec.lst_noise_sd, shape)

    if spec.months == 12:
        hot = int(rng.integers(1, 13))
        offsets = _month_offsets(hot)
        lst = [lst_hot - offsets[m] if m != hot - 1 else lst_hot for m in range(12)]
        ndvi_months = [ndvi if m == hot - 1 else ndvi * 0.9 for m in range(12)]
    else:
        hot = 0
        lst, ndvi_months = [lst_hot], [ndvi]

    inside = _boundary(shape)
    koppen = spec.koppen[i % len(spec.koppen)]
    region = ("north", "south")[(i // len(spec.koppen)) % 2]
    city_id = f"c{i:03d}"
    total_pop = float(pop[inside].sum())
    area = float(inside.sum())
    rel = Path("rasters")

    def names(kind, k=None):
        return str(rel / (f"{city_id}_{kind}.asc" if k is None else f"{city_id}_{kind}_{k:02d}.asc"))

    months = range(1, len(lst) + 1)
    record = CityRecord(
        city_id=city_id,
        name=f"Synthetic City {i}",
        country="Synthland",
        global_region=region,
        continent=("northern_america", "africa")[region == "south"],
        koppen=koppen,
        area_km2=area,
        population=total_pop,
        gdp_per_capita=float(np.round(rng.uniform(1000, 60000), 2)),
        mat=float(np.round(rng.uniform(5, 28), 3)),
        map_mm=float(np.round(rng.uniform(100, 2500), 1)),
        elev_range=float(np.round(rng.uniform(10, 900), 1)),
        ndvi_paths=tuple(names("ndvi", m) for m in months) if len(lst) == 12 else (names("ndvi"),),
        lst_paths=tuple(names("lst", m) for m in months) if len(lst) == 12 else (names("lst"),),
        pop_path=names("pop"),
        water_path=names("water"),
        qa_path=names("qa") if qa is not None else None,
    )
    return SynthCity(record, hot, ndvi_months, lst, pop, water, qa, inside, slope, intercept, ndvi_model, pop_model)


def direct_truth(city: SynthCity) -> dict:
    """Independent evaluation of the city metrics straight from the arrays."""
    k = city.hottest_month - 1 if city.hottest_month else 0
    x_all, y_all = city.ndvi[k], city.lst[k]
    keep = city.inside & (city.water <= 0.2) & (x_all >= 0)
    if city.qa is not None:
        keep &= city.qa == 1
    x, y, p = x_all[keep], y_all[keep], city.pop[keep]
    design = np.column_stack([np.ones_like(x), x])
    (b0, b1), *_ = np.linalg.lstsq(design, y, rcond=None)
    x_min = float(x.min())

    def eq1(mag, ref):
        return math.fsum(((xi - ref) * mag) for xi in x.tolist()) / x.size

    def eq2(mag, ref):
        num = math.fsum((xi - ref) * mag * pi for xi, pi in zip(x.tolist(), p.tolist()))
        return num / math.fsum(p.tolist())

    return {
        "city_id": city.record.city_id,
        "ndvi_model": city.ndvi_model,
        "pop_model": city.pop_model,
        "hottest_month": city.hottest_month,
        "n_valid": int(keep.sum()),
        "true_slope": city.slope,
        "true_intercept": city.intercept,
        "true_ce": -city.slope / 100.0,
        "true_cc": eq1(-city.slope, x_min),
        "true_cb": eq2(-city.slope, x_min),
        "oracle_slope": float(b1),
        "oracle_intercept": float(b0),
        "oracle_cc": eq1(-float(b1), x_min),
        "oracle_cb": eq2(-float(b1), x_min),
        "oracle_cc_zero": eq1(-float(b1), 0.0),
        "min_ndvi": x_min,
        "max_ndvi": float(x.max()),
    }


TRUTH_COLUMNS = ("city_id", "ndvi_model", "pop_model", "hottest_month", "n_valid", "true_slope", "true_intercept",
                 "true_ce", "true_cc", "true_cb", "oracle_slope", "oracle_intercept", "oracle_cc", "oracle_cb",
                 "oracle_cc_zero", "min_ndvi", "max_ndvi")


def _grid(values, inside):
    h = GridHeader(ncols=values.shape[1], nrows=values.shape[0], xllcorner=0.0, yllcorner=0.0,
                   cellsize=1.0, nodata_value=NODATA)
    return Grid(h, np.where(inside, values, NODATA), inside)


def run_synth(spec: SynthSpec, outdir) -> Path:
    """Write a corpus (manifest, rasters, truth sidecar) and return the manifest path."""
    outdir = Path(outdir)
    try:
        (outdir / "rasters").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {outdir}: {exc}") from exc
    cities = [make_city(spec, i) for i in range(spec.n_cities)]
    truths = []
    for city in cities:
        rec = city.record
        # pixel values round-trip exactly through the 17-digit text format
        for path, arr in itertools.chain(zip(rec.ndvi_paths, city.ndvi), zip(rec.lst_paths, city.lst)):
            write_ascii_grid(_grid(arr, city.inside), outdir / path)
        write_ascii_grid(_grid(city.pop, city.inside), outdir / rec.pop_path)
        write_ascii_grid(_grid(city.water, city.inside), outdir / rec.water_path)
        if city.qa is not None:
            write_ascii_grid(_grid(city.qa, city.inside), outdir / rec.qa_path)
        truths.append(direct_truth(city))
    manifest_path = outdir / MANIFEST_FILE
    write_manifest(Manifest(tuple(c.record for c in cities), manifest_path), manifest_path)
    try:
        with (outdir / TRUTH_FILE).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRUTH_COLUMNS)
            for t in truths:
                w.writerow([f"{t[c]:.17g}" if isinstance(t[c], float) else t[c] for c in TRUTH_COLUMNS])
    except OSError as exc:
        raise IoError(f"cannot write truth sidecar: {exc}") from exc
    return manifest_path


def read_truth(path) -> dict[str, dict]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = {}
    for r in rows:
        conv = {}
        for k, v in r.items():
            if k in ("city_id", "ndvi_model", "pop_model"):
                conv[k] = v
            elif k in ("hottest_month", "n_valid"):
                conv[k] = int(v)
            else:
                conv[k] = float(v)
        out[r["city_id"]] = conv
    return out
