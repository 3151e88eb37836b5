"""Raster data model, ASCII grid I/O, cell masks and windowed means.

Grids are stored as ``(nrows, ncols)`` float64 arrays in file order (first
row is the northernmost), with a boolean validity mask alongside. Flat cell
indices are row-major.
"""
from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import AlignmentError, ArgumentError, IoError, ParseError, ShapeError

logger = logging.getLogger(__name__)

HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")
WATER_MAX_FRACTION = 0.20
ALIGN_RTOL = 1e-9

_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?|[+-]?(?:nan|inf|infinity)", re.I)


@dataclass(frozen=True)
class GridHeader:
    ncols: int
    nrows: int
    xllcorner: float = 0.0
    yllcorner: float = 0.0
    cellsize: float = 1.0
    nodata_value: float = -9999.0

    def __post_init__(self):
        if self.ncols < 1 or self.nrows < 1:
            raise ArgumentError(f"grid must have at least one row and column, got {self.nrows}x{self.ncols}")
        if not self.cellsize > 0:
            raise ArgumentError(f"cellsize must be positive, got {self.cellsize}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)


class Grid:
    """One raster variable for one city.

    ``values`` holds ``nodata_value`` in every invalid cell. Both arrays are
    read-only; derive new grids with :meth:`with_values`.
    """

    __slots__ = ("header", "values", "valid")

    def __init__(self, header: GridHeader, values, valid=None):
        values = np.array(values, dtype=np.float64, copy=True)
        if values.ndim == 1:
            if values.size != header.ncols * header.nrows:
                raise ShapeError(f"expected {header.ncols * header.nrows} values, got {values.size}")
            values = values.reshape(header.shape)
        if values.shape != header.shape:
            raise ShapeError(f"values shape {values.shape} does not match header {header.shape}")
        finite = np.isfinite(values)
        if valid is None:
            valid = finite & (values != header.nodata_value)
        else:
            valid = np.array(valid, dtype=bool, copy=True).reshape(header.shape)
            if np.any(valid & ~finite):
                raise ArgumentError("valid cells must hold finite values")
            if np.any(valid & (values == header.nodata_value)):
                raise ArgumentError("a valid cell equals nodata_value")
        values[~valid] = header.nodata_value
        values.setflags(write=False)
        valid.setflags(write=False)
        self.header = header
        self.values = values
        self.valid = valid

    @classmethod
    def from_array(cls, values, valid=None, **header_kw) -> Grid:
        """Build a grid from a 2-D array; header fields default to a unit grid at the origin."""
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeError("from_array expects a 2-D array")
        header = GridHeader(ncols=values.shape[1], nrows=values.shape[0], **header_kw)
        if valid is None:
            valid = np.isfinite(values)
        return cls(header, np.where(valid, values, header.nodata_value), valid)

    def with_values(self, values, valid=None) -> Grid:
        valid = self.valid if valid is None else valid
        return Grid(self.header, np.where(valid, values, self.header.nodata_value), valid)

    @property
    def shape(self) -> tuple[int, int]:
        return self.header.shape

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def masked(self) -> np.ndarray:
        """Float copy with NaN in invalid cells."""
        return np.where(self.valid, self.values, np.nan)

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return (
            self.header == other.header
            and np.array_equal(self.valid, other.valid)
            and np.array_equal(self.values[self.valid], other.values[other.valid])
        )

    def __repr__(self):
        h = self.header
        return f"Grid({h.nrows}x{h.ncols}, n_valid={self.n_valid}, cellsize={h.cellsize})"


@dataclass(frozen=True)
class ValidCellSet:
    """Row-major flat indices of the cells that pass every mask."""

    indices: np.ndarray
    shape: tuple[int, int]
    removed: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= self.shape[0] * self.shape[1]):
            raise ArgumentError("indices must be strictly increasing and within the grid")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @classmethod
    def from_mask(cls, mask, removed=None) -> ValidCellSet:
        mask = np.asarray(mask, dtype=bool)
        return cls(np.flatnonzero(mask), mask.shape, dict(removed or {}))

    @property
    def n(self) -> int:
        return int(self.indices.size)

    def __len__(self):
        return self.n

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.shape[0] * self.shape[1], dtype=bool)
        m[self.indices] = True
        return m.reshape(self.shape)

    def take(self, grid: Grid) -> np.ndarray:
        """Values of ``grid`` at the valid cells, in index order."""
        return grid.flat()[self.indices]


def _parse_number(token: str, lineno: int, path) -> float:
    if not _NUMBER.fullmatch(token):
        raise ParseError(f"non-numeric token {token!r}", line=lineno, path=path)
    return float(token)


def read_ascii_grid(path) -> Grid:
    """Read a six-key ASCII grid file.

    The header keys must appear in the order NCOLS, NROWS, XLLCORNER,
    YLLCORNER, CELLSIZE, NODATA_VALUE (any case). Cells equal to the nodata
    value, or non-finite, are marked invalid.
    """
    try:
        text = Path(path).read_text(encoding="ascii")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not an ASCII file: {exc}", path=path) from exc
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc

    lines = text.splitlines()
    header = {}
    for i, key in enumerate(HEADER_KEYS):
        lineno = i + 1
        if i >= len(lines):
            raise ParseError(f"missing header key {key.upper()}", line=lineno, path=path)
        parts = lines[i].split()
        if len(parts) != 2 or parts[0].lower() != key:
            raise ParseError(f"expected '{key.upper()} <value>', got {lines[i]!r}", line=lineno, path=path)
        if key in ("ncols", "nrows"):
            if not re.fullmatch(r"\+?\d+", parts[1]):
                raise ParseError(f"{key.upper()} must be a positive integer", line=lineno, path=path)
            header[key] = int(parts[1])
        else:
            header[key] = _parse_number(parts[1], lineno, path)
    try:
        hdr = GridHeader(**header)
    except ArgumentError as exc:
        raise ParseError(str(exc), path=path) from exc

    values = []
    for lineno, line in enumerate(lines[len(HEADER_KEYS):], start=len(HEADER_KEYS) + 1):
        for token in line.split():
            values.append(_parse_number(token, lineno, path))
    expected = hdr.ncols * hdr.nrows
    if len(values) != expected:
        raise ShapeError(f"{path}: header declares {hdr.nrows}x{hdr.ncols}={expected} cells, found {len(values)}")
    return Grid(hdr, np.array(values, dtype=np.float64))


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def write_ascii_grid(grid: Grid, path) -> None:
    """Write ``grid`` with 17 significant digits so reading it back is exact."""
    h = grid.header
    out = [
        f"NCOLS {h.ncols}",
        f"NROWS {h.nrows}",
        f"XLLCORNER {_fmt(h.xllcorner)}",
        f"YLLCORNER {_fmt(h.yllcorner)}",
        f"CELLSIZE {_fmt(h.cellsize)}",
        f"NODATA_VALUE {_fmt(h.nodata_value)}",
    ]
    for row in grid.values:
        out.append(" ".join(_fmt(v) for v in row.tolist()))
    try:
        Path(path).write_text("\n".join(out) + "\n", encoding="ascii")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def align_check(grids, names=None) -> None:
    """Raise :class:`AlignmentError` unless every grid shares the first grid's geometry."""
    grids = list(grids)
    if not grids:
        raise ArgumentError("align_check needs at least one grid")
    names = list(names) if names is not None else [f"grid[{i}]" for i in range(len(grids))]
    ref = grids[0].header
    for name, g in zip(names[1:], grids[1:]):
        h = g.header
        for key in ("ncols", "nrows"):
            if getattr(h, key) != getattr(ref, key):
                raise AlignmentError(
                    f"{name}: {key} {getattr(h, key)} != {getattr(ref, key)} in {names[0]}", field=key, grid=name
                )
        for key in ("xllcorner", "yllcorner", "cellsize"):
            a, b = getattr(h, key), getattr(ref, key)
            if not math.isclose(a, b, rel_tol=ALIGN_RTOL, abs_tol=ALIGN_RTOL * ref.cellsize):
                raise AlignmentError(f"{name}: {key} {a!r} != {b!r} in {names[0]}", field=key, grid=name)


def apply_masks(ndvi: Grid, lst: Grid, water_frac: Grid, qa: Grid | None = None) -> ValidCellSet:
    """Cells valid in NDVI and LST, with water <= 20%, QA == 1 (if given) and NDVI >= 0.

    ``removed`` on the result counts exclusions per criterion, applied in the
    order nodata, water, qa, ndvi_negative.
    """
    grids = [ndvi, lst, water_frac] + ([qa] if qa is not None else [])
    align_check(grids, ["ndvi", "lst", "water_frac", "qa"][: len(grids)])

    keep = ndvi.valid & lst.valid
    removed = {"nodata": int(keep.size - keep.sum())}

    water_ok = water_frac.valid & (water_frac.values <= WATER_MAX_FRACTION)
    removed["water"] = int((keep & ~water_ok).sum())
    keep = keep & water_ok

    if qa is not None:
        qa_ok = qa.valid & (qa.values == 1)
        removed["qa"] = int((keep & ~qa_ok).sum())
        keep = keep & qa_ok
    else:
        removed["qa"] = 0

    ndvi_ok = ndvi.values >= 0
    removed["ndvi_negative"] = int((keep & ~ndvi_ok).sum())
    keep = keep & ndvi_ok
    return ValidCellSet.from_mask(keep, removed)


def neighborhood_mean(grid: Grid, valid: ValidCellSet, window: int) -> Grid:
    """Mean over valid cells in a ``window`` x ``window`` box around each valid cell.

    The box is truncated at the grid edge. Cells outside ``valid`` are invalid
    in the result.
    """
    if isinstance(window, bool) or int(window) != window or window < 1 or window % 2 == 0:
        raise ArgumentError(f"window must be an odd integer >= 1, got {window!r}")
    if valid.shape != grid.shape:
        raise AlignmentError("valid-cell set does not match grid shape", field="shape")
    mask = valid.mask
    out = kernels.box_mean(grid.values, mask, int(window))
    return grid.with_values(np.where(mask, out, grid.header.nodata_value), mask)
