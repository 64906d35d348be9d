"""Planar raster grids, ESRI ASCII grid I/O and rook adjacency.

Row 0 is the northernmost row, as in ESRI ASCII files, and values are
stored row-major. Cells whose value equals the ``nodata`` sentinel are
treated as missing by every downstream module.
"""
from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")
DEFAULT_NODATA = -9999.0


class RasterFormatError(ValueError):
    """Malformed ESRI ASCII grid file."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


@dataclass(frozen=True, eq=False)
class Raster:
    nrows: int
    ncols: int
    xll: float
    yll: float
    cellsize: float
    nodata: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.nrows < 1 or self.ncols < 1:
            raise ValueError("raster dimensions must be positive")
        if not self.cellsize > 0:
            raise ValueError("cellsize must be positive")
        vals = np.array(self.values, dtype=float).reshape(-1)
        if vals.size != self.nrows * self.ncols:
            raise ValueError(
                f"value count mismatch: expected {self.nrows * self.ncols}, got {vals.size}"
            )
        data = vals[vals != self.nodata]
        if not np.all(np.isfinite(data)):
            raise ValueError("raster contains non-finite values")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_array(cls, array, xll=0.0, yll=0.0, cellsize=1.0, nodata=DEFAULT_NODATA):
        array = np.asarray(array, dtype=float)
        if array.ndim != 2:
            raise ValueError("expected a 2-d array")
        nrows, ncols = array.shape
        return cls(nrows, ncols, float(xll), float(yll), float(cellsize), float(nodata), array)

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    @property
    def ncells(self):
        return self.nrows * self.ncols

    def as_array(self):
        return self.values.reshape(self.nrows, self.ncols)

    @property
    def valid(self):
        """Boolean mask (flat) of non-nodata cells."""
        return self.values != self.nodata

    def masked(self):
        """Values as float array with NaN in nodata cells."""
        out = self.values.astype(float)
        out[~self.valid] = np.nan
        return out

    def with_values(self, values):
        return Raster(self.nrows, self.ncols, self.xll, self.yll, self.cellsize,
                      self.nodata, np.asarray(values, dtype=float))

    def same_geometry(self, other):
        return (self.nrows == other.nrows and self.ncols == other.ncols
                and math.isclose(self.xll, other.xll) and math.isclose(self.yll, other.yll)
                and math.isclose(self.cellsize, other.cellsize))

    def extent(self):
        """(xmin, xmax, ymin, ymax)."""
        return (self.xll, self.xll + self.ncols * self.cellsize,
                self.yll, self.yll + self.nrows * self.cellsize)

    def cell_of(self, x, y):
        """Return ``(row, col)`` of the cell containing ``(x, y)``, or None if outside.

        Points on the east and north boundary belong to the last column and
        first row respectively.
        """
        rows, cols = self.cells_of(np.atleast_1d(x), np.atleast_1d(y))
        if rows[0] < 0:
            return None
        return int(rows[0]), int(cols[0])

    def cells_of(self, x, y):
        """Vectorised ``cell_of``; out-of-bounds points get row = col = -1."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        xmin, xmax, ymin, ymax = self.extent()
        col = np.floor((x - xmin) / self.cellsize).astype(np.int64)
        row_from_south = np.floor((y - ymin) / self.cellsize).astype(np.int64)
        col = np.where(x == xmax, self.ncols - 1, col)
        row_from_south = np.where(y == ymax, self.nrows - 1, row_from_south)
        inside = (x >= xmin) & (x <= xmax) & (y >= ymin) & (y <= ymax)
        inside &= (col >= 0) & (col < self.ncols)
        inside &= (row_from_south >= 0) & (row_from_south < self.nrows)
        row = self.nrows - 1 - row_from_south
        return np.where(inside, row, -1), np.where(inside, col, -1)

    def cell_ids_of(self, x, y):
        """Flat cell ids for points; -1 outside the extent."""
        rows, cols = self.cells_of(x, y)
        return np.where(rows >= 0, rows * self.ncols + cols, -1)

    def center_of(self, row, col):
        x = self.xll + (np.asarray(col) + 0.5) * self.cellsize
        y = self.yll + (self.nrows - 1 - np.asarray(row) + 0.5) * self.cellsize
        return x, y

    def value_at(self, x, y):
        cell = self.cell_of(x, y)
        if cell is None:
            return None
        return float(self.values[cell[0] * self.ncols + cell[1]])


def _tokens(lines):
    for lineno, line in lines:
        for tok in line.split():
            yield lineno, tok


def read_ascii_grid(path):
    """Read an ESRI ASCII grid file into a :class:`Raster`.

    Header keys are matched case-insensitively. ``NODATA_value`` is optional
    and defaults to -9999. Errors carry the offending line number.
    """
    path = os.fspath(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = list(enumerate(fh.read().splitlines(), start=1))

    header = {}
    pos = 0
    while pos < len(lines):
        lineno, line = lines[pos]
        parts = line.split()
        if not parts:
            pos += 1
            continue
        key = parts[0].lower()
        if key not in HEADER_KEYS:
            break
        if len(parts) != 2:
            raise RasterFormatError(f"malformed header line {line!r}", path, lineno)
        if key in header:
            raise RasterFormatError(f"duplicate header key {parts[0]!r}", path, lineno)
        try:
            header[key] = (float(parts[1]), lineno)
        except ValueError:
            raise RasterFormatError(f"non-numeric header value {parts[1]!r}", path, lineno) from None
        pos += 1

    for key in HEADER_KEYS[:5]:
        if key not in header:
            raise RasterFormatError(f"malformed header: missing {key}", path,
                                    lines[pos][0] if pos < len(lines) else None)
    ncols, ncols_line = header["ncols"]
    nrows, nrows_line = header["nrows"]
    if ncols != int(ncols) or ncols < 1:
        raise RasterFormatError("malformed header: ncols must be a positive integer", path, ncols_line)
    if nrows != int(nrows) or nrows < 1:
        raise RasterFormatError("malformed header: nrows must be a positive integer", path, nrows_line)
    cellsize, cs_line = header["cellsize"]
    if not cellsize > 0:
        raise RasterFormatError("malformed header: cellsize must be positive", path, cs_line)
    nodata = header.get("nodata_value", (DEFAULT_NODATA, None))[0]
    ncols, nrows = int(ncols), int(nrows)

    expected = ncols * nrows
    values = np.empty(expected, dtype=float)
    count = 0
    last_line = lines[pos - 1][0] if pos else 1
    for lineno, tok in _tokens(lines[pos:]):
        last_line = lineno
        try:
            v = float(tok)
        except ValueError:
            raise RasterFormatError(f"non-numeric token {tok!r}", path, lineno) from None
        if count >= expected:
            raise RasterFormatError(
                f"value count mismatch: more than {expected} values", path, lineno)
        if v != nodata and not math.isfinite(v):
            raise RasterFormatError(f"non-finite value {tok!r}", path, lineno)
        values[count] = v
        count += 1
    if count != expected:
        raise RasterFormatError(
            f"value count mismatch: expected {expected}, got {count}", path, last_line)

    return Raster(nrows, ncols, header["xllcorner"][0], header["yllcorner"][0],
                  cellsize, nodata, values)


def _fmt(v):
    v = float(v)
    if math.isfinite(v) and v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def format_ascii_grid(r):
    out = [
        f"ncols {r.ncols}",
        f"nrows {r.nrows}",
        f"xllcorner {r.xll!r}",
        f"yllcorner {r.yll!r}",
        f"cellsize {r.cellsize!r}",
        f"NODATA_value {_fmt(r.nodata)}",
    ]
    arr = r.as_array()
    for row in arr:
        # repr() gives the shortest string that round-trips exactly (17 sig. digits max)
        out.append(" ".join(_fmt(v) for v in row))
    return "\n".join(out) + "\n"


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` via a temp file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_ascii_grid(r, path):
    atomic_write_text(path, format_ascii_grid(r))
    return path


@dataclass(frozen=True)
class Adjacency:
    """Rook neighbour graph of a grid; cell id = row * ncols + col."""

    nrows: int
    ncols: int
    neighbors: tuple
    edges: np.ndarray = field(repr=False)

    @property
    def ncells(self):
        return self.nrows * self.ncols

    @property
    def nedges(self):
        return int(self.edges.shape[0])

    def degree(self):
        return np.array([len(n) for n in self.neighbors], dtype=np.int64)


def build_rook_adjacency(nrows, ncols):
    if nrows < 1 or ncols < 1:
        raise ValueError("grid dimensions must be >= 1")
    ids = np.arange(nrows * ncols).reshape(nrows, ncols)
    horiz = np.column_stack([ids[:, :-1].ravel(), ids[:, 1:].ravel()])
    vert = np.column_stack([ids[:-1, :].ravel(), ids[1:, :].ravel()])
    edges = np.concatenate([horiz, vert]).astype(np.int64).reshape(-1, 2)
    nbrs = [[] for _ in range(nrows * ncols)]
    for a, b in edges:
        nbrs[a].append(int(b))
        nbrs[b].append(int(a))
    edges.flags.writeable = False
    return Adjacency(nrows, ncols, tuple(tuple(sorted(n)) for n in nbrs), edges)
