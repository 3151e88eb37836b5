"""City manifest: CSV schema, validation, grouping and the minimum-size filter."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import DuplicateError, IoError, ParseError, SchemaError

logger = logging.getLogger(__name__)

COLUMNS = (
    "city_id", "name", "country", "global_region", "continent", "koppen", "area_km2",
    "population", "gdp_per_capita", "mat", "map_mm", "elev_range",
    "ndvi_paths", "lst_paths", "pop_path", "water_path", "qa_path",
)
GLOBAL_REGIONS = ("north", "south")
KOPPEN_CLASSES = ("tropical", "arid", "temperate", "continental")
CONTINENTS = ("africa", "asia", "europe", "latin_america", "northern_america", "oceania")
MIN_VALID_CELLS = 30

# column -> lower bound (inclusive unless strict)
_NUMERIC = {
    "area_km2": (0.0, True),
    "population": (0.0, False),
    "gdp_per_capita": (0.0, False),
    "mat": (None, False),
    "map_mm": (0.0, False),
    "elev_range": (0.0, False),
}


@dataclass(frozen=True)
class CityRecord:
    city_id: str
    name: str
    country: str
    global_region: str
    continent: str
    koppen: str
    area_km2: float
    population: float
    gdp_per_capita: float
    mat: float
    map_mm: float
    elev_range: float
    ndvi_paths: tuple[str, ...]
    lst_paths: tuple[str, ...]
    pop_path: str
    water_path: str
    qa_path: str | None = None

    @property
    def density(self) -> float:
        """Persons per km^2, from the manifest population and area."""
        return self.population / self.area_km2

    def raster_paths(self) -> dict[str, list[str]]:
        paths = {
            "ndvi": list(self.ndvi_paths),
            "lst": list(self.lst_paths),
            "pop": [self.pop_path],
            "water": [self.water_path],
        }
        if self.qa_path:
            paths["qa"] = [self.qa_path]
        return paths


@dataclass(frozen=True)
class Manifest:
    cities: tuple[CityRecord, ...]
    source: Path | None = None

    @property
    def base_dir(self) -> Path:
        return self.source.parent if self.source is not None else Path(".")

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p

    def __len__(self):
        return len(self.cities)

    def __iter__(self):
        return iter(self.cities)

    def by_id(self) -> dict[str, CityRecord]:
        return {c.city_id: c for c in self.cities}

    def missing_files(self) -> list[tuple[str, str, Path]]:
        """``(city_id, raster kind, path)`` for every referenced file that does not exist."""
        missing = []
        for city in self.cities:
            for kind, rels in city.raster_paths().items():
                for rel in rels:
                    path = self.resolve(rel)
                    if not path.is_file():
                        missing.append((city.city_id, kind, path))
        return missing

    def subset(self, keep) -> Manifest:
        keep = set(keep)
        return Manifest(tuple(c for c in self.cities if c.city_id in keep), self.source)


def _enum(value: str, allowed, column: str, lineno: int, path) -> str:
    norm = value.strip().lower().replace(" ", "_").replace("-", "_")
    if norm not in allowed:
        raise ParseError(f"{column}={value!r} not in {{{', '.join(allowed)}}}", line=lineno, path=path)
    return norm


def _number(value: str, column: str, lineno: int, path) -> float:
    try:
        x = float(value)
    except ValueError:
        raise ParseError(f"{column}={value!r} is not a number", line=lineno, path=path) from None
    if not math.isfinite(x):
        raise ParseError(f"{column}={value!r} must be finite", line=lineno, path=path)
    lower, strict = _NUMERIC[column]
    if lower is not None and (x < lower or (strict and x == lower)):
        op = ">" if strict else ">="
        raise ParseError(f"{column}={value!r} must be {op} {lower:g}", line=lineno, path=path)
    return x


def _path_list(value: str, column: str, lineno: int, path) -> tuple[str, ...]:
    parts = tuple(p.strip() for p in value.split(";") if p.strip())
    if len(parts) not in (1, 12):
        raise ParseError(f"{column} must list 1 or 12 rasters, got {len(parts)}", line=lineno, path=path)
    return parts


def parse_row(row: dict, lineno: int, path=None) -> CityRecord:
    city_id = row["city_id"].strip()
    if not city_id:
        raise ParseError("empty city_id", line=lineno, path=path)
    pop_path = row["pop_path"].strip()
    water_path = row["water_path"].strip()
    if not pop_path or not water_path:
        raise ParseError("pop_path and water_path are required", line=lineno, path=path)
    return CityRecord(
        city_id=city_id,
        name=row["name"].strip(),
        country=row["country"].strip(),
        global_region=_enum(row["global_region"], GLOBAL_REGIONS, "global_region", lineno, path),
        continent=_enum(row["continent"], CONTINENTS, "continent", lineno, path),
        koppen=_enum(row["koppen"], KOPPEN_CLASSES, "koppen", lineno, path),
        **{col: _number(row[col], col, lineno, path) for col in _NUMERIC},
        ndvi_paths=_path_list(row["ndvi_paths"], "ndvi_paths", lineno, path),
        lst_paths=_path_list(row["lst_paths"], "lst_paths", lineno, path),
        pop_path=pop_path,
        water_path=water_path,
        qa_path=row["qa_path"].strip() or None,
    )


def load_manifest(path) -> Manifest:
    """Parse and validate a manifest CSV.

    Raster paths are kept as written; relative paths resolve against the
    manifest's directory. File existence is not checked here.
    """
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read manifest {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        cities = []
        seen = {}
        for row in reader:
            lineno = reader.line_num
            if None in row or any(row[c] is None for c in COLUMNS):
                raise ParseError("wrong number of fields", line=lineno, path=path)
            rec = parse_row(row, lineno, path)
            if rec.city_id in seen:
                raise DuplicateError(f"{path}: city_id {rec.city_id!r} on lines {seen[rec.city_id]} and {lineno}")
            seen[rec.city_id] = lineno
            cities.append(rec)
    if not cities:
        raise SchemaError(f"{path}: manifest has no cities")
    return Manifest(tuple(cities), path)


def _cell(rec: CityRecord, col: str) -> str:
    v = getattr(rec, col)
    if col in ("ndvi_paths", "lst_paths"):
        return ";".join(v)
    if col == "qa_path":
        return v or ""
    if isinstance(v, float):
        return repr(v)
    return v


def write_manifest(manifest: Manifest, path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for rec in manifest.cities:
                w.writerow([_cell(rec, c) for c in COLUMNS])
    except OSError as exc:
        raise IoError(f"cannot write manifest {path}: {exc}") from exc


@dataclass(frozen=True)
class SizeRejection:
    city_id: str
    n_valid: int
    min_valid_cells: int


def size_filter(manifest: Manifest, valid_counts: dict, min_valid_cells: int = MIN_VALID_CELLS):
    """Drop cities with fewer than ``min_valid_cells`` valid cells.

    Returns ``(kept_manifest, rejections)``. Cities absent from
    ``valid_counts`` are kept untouched (they failed elsewhere).
    """
    kept, rejected = [], []
    for city in manifest.cities:
        n = valid_counts.get(city.city_id)
        if n is not None and n < min_valid_cells:
            rejected.append(SizeRejection(city.city_id, int(n), min_valid_cells))
        else:
            kept.append(city)
    if not kept:
        logger.warning("size filter removed every city (threshold %d cells)", min_valid_cells)
    return Manifest(tuple(kept), manifest.source), rejected


def group_by(cities, attr: str) -> dict[str, list]:
    """Group records (or objects exposing ``attr``) by attribute value, keeping input order."""
    groups: dict[str, list] = {}
    for c in cities:
        groups.setdefault(getattr(c, attr), []).append(c)
    return groups
