"""Pseudo-absence generation, covariate extraction, training sets and folds."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .raster import atomic_write_text

DEFAULT_BACKGROUND_FLOOR = 0.01
OVERSAMPLE_FACTOR = 10


class PointDataError(ValueError):
    """Bad point data; ``line`` is set when read from a file."""

    def __init__(self, message, path=None, line=None):
        prefix = ""
        if path is not None:
            prefix = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(prefix + message)
        self.path = path
        self.line = line


@dataclass(frozen=True)
class Standardization:
    mean: np.ndarray
    sd: np.ndarray

    def apply(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.sd

    def invert(self, Z):
        return np.asarray(Z, dtype=float) * self.sd + self.mean

    def to_dict(self, names):
        return {n: {"mean": float(m), "sd": float(s)} for n, m, s in zip(names, self.mean, self.sd)}

    @classmethod
    def from_dict(cls, d, names):
        return cls(np.array([d[n]["mean"] for n in names], dtype=float),
                   np.array([d[n]["sd"] for n in names], dtype=float))

    @classmethod
    def fit(cls, X):
        X = np.asarray(X, dtype=float)
        sd = X.std(axis=0)
        return cls(X.mean(axis=0), sd)


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Labelled point records with raw covariates.

    ``standardization`` is fitted on these points at construction; subsets
    keep the parent's standardization unless ``restandardize`` is called.
    """

    ids: np.ndarray
    x: np.ndarray
    y: np.ndarray
    labels: np.ndarray
    weights: np.ndarray
    covariates: np.ndarray = field(repr=False)
    covariate_names: tuple
    standardization: Standardization = None

    def __post_init__(self):
        n = len(self.ids)
        X = np.asarray(self.covariates, dtype=float).reshape(n, len(self.covariate_names))
        for name in ("x", "y", "labels", "weights"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has wrong length")
        labels = np.asarray(self.labels).astype(np.int64)
        if not np.all((labels == 0) | (labels == 1)):
            raise ValueError("labels must be 0 or 1")
        w = np.asarray(self.weights, dtype=float)
        if not np.all(np.isfinite(w) & (w > 0)):
            raise ValueError("weights must be positive and finite")
        if not np.all(np.isfinite(X)):
            raise ValueError("covariates must be finite")
        object.__setattr__(self, "ids", np.asarray(self.ids).astype(np.int64))
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "covariates", X)
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        if self.standardization is None and n > 0:
            std = Standardization.fit(X)
            bad = [nm for nm, s in zip(self.covariate_names, std.sd) if not s > 0]
            if bad:
                raise ValueError(f"constant covariate(s) cannot be standardized: {bad}")
            object.__setattr__(self, "standardization", std)

    def __len__(self):
        return len(self.ids)

    @property
    def n_features(self):
        return len(self.covariate_names)

    def standardized(self):
        return self.standardization.apply(self.covariates)

    def subset(self, mask_or_index):
        idx = np.asarray(mask_or_index)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        return TrainingSet(self.ids[idx], self.x[idx], self.y[idx], self.labels[idx],
                           self.weights[idx], self.covariates[idx], self.covariate_names,
                           self.standardization)

    def restandardize(self):
        return replace(self, standardization=None)

    def with_weights(self, weights):
        return replace(self, weights=np.broadcast_to(np.asarray(weights, dtype=float), len(self)).copy())

    def unit_weights(self):
        return self.with_weights(1.0)


def sample_pseudo_absences(n, effort, presences, seed, floor=DEFAULT_BACKGROUND_FLOOR):
    """Draw ``n`` background points with cell probability proportional to effort.

    Cells holding a presence and nodata cells are excluded. Zero-effort
    cells get ``floor`` times the smallest positive effort. Points are
    jittered uniformly inside the chosen cell. Returns an ``(n, 2)`` array.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if floor < 0:
        raise ValueError("floor must be non-negative")
    vals = effort.values
    valid = effort.valid
    if np.any(vals[valid] < 0):
        raise ValueError("effort values must be non-negative")
    positive = vals[valid & (vals > 0)]
    if positive.size == 0:
        raise ValueError("degenerate effort layer: total effort is zero")

    candidate = valid.copy()
    pres = np.asarray(presences, dtype=float).reshape(-1, 2)
    if len(pres):
        ids = effort.cell_ids_of(pres[:, 0], pres[:, 1])
        candidate[ids[ids >= 0]] = False
    prob = np.where(candidate, np.where(vals > 0, vals, floor * positive.min()), 0.0)
    prob = np.where(candidate, prob, 0.0)
    ncand = int(np.count_nonzero(prob > 0))
    if n > ncand * OVERSAMPLE_FACTOR:
        raise ValueError(f"cannot draw {n} pseudo-absences from {ncand} candidate cells")
    prob = prob / prob.sum()

    rng = np.random.default_rng(seed)
    cells = rng.choice(effort.ncells, size=n, p=prob)
    rows, cols = np.divmod(cells, effort.ncols)
    jitter = rng.random((n, 2))
    x = effort.xll + (cols + jitter[:, 0]) * effort.cellsize
    y = effort.yll + (effort.nrows - 1 - rows + jitter[:, 1]) * effort.cellsize
    return np.column_stack([x, y])


def extract_covariates(points, layers, labels=None, weights=None, ids=None,
                       standardization=None):
    """Read covariate values at point locations from a named layer stack.

    ``layers`` is a mapping (or sequence of pairs) name -> Raster, all on one
    grid. Points in nodata cells raise, listing the offenders.
    """
    layers = list(layers.items()) if hasattr(layers, "items") else list(layers)
    if not layers:
        raise ValueError("no covariate layers")
    ref = layers[0][1]
    for name, r in layers[1:]:
        if not r.same_geometry(ref):
            raise ValueError(f"layer {name!r} does not share the grid geometry")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    cells = ref.cell_ids_of(pts[:, 0], pts[:, 1])
    outside = np.flatnonzero(cells < 0)
    if outside.size:
        raise PointDataError(f"points outside raster extent: {outside.tolist()[:20]}")
    X = np.empty((n, len(layers)))
    for j, (name, r) in enumerate(layers):
        bad = np.flatnonzero(~r.valid[cells])
        if bad.size:
            raise PointDataError(f"nodata in layer {name!r} at points {bad.tolist()[:20]}")
        X[:, j] = r.values[cells]
    if labels is None:
        labels = np.zeros(n, dtype=np.int64)
    if weights is None:
        weights = np.ones(n)
    if ids is None:
        ids = np.arange(n)
    return TrainingSet(np.asarray(ids), pts[:, 0], pts[:, 1], np.asarray(labels),
                       np.asarray(weights, dtype=float), X, tuple(nm for nm, _ in layers),
                       standardization)


def build_training_set(presences, absences, layers, presence_weights=None,
                       absence_weights=None):
    """Stack presences (label 1) and pseudo-absences (label 0) into one set."""
    pres = np.asarray(presences, dtype=float).reshape(-1, 2)
    absn = np.asarray(absences, dtype=float).reshape(-1, 2)
    pw = np.ones(len(pres)) if presence_weights is None else np.asarray(presence_weights, float)
    aw = np.ones(len(absn)) if absence_weights is None else np.asarray(absence_weights, float)
    labels = np.concatenate([np.ones(len(pres), np.int64), np.zeros(len(absn), np.int64)])
    return extract_covariates(np.vstack([pres, absn]), layers, labels=labels,
                              weights=np.concatenate([pw, aw]))


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    fold_of: np.ndarray
    seed: int
    ids: np.ndarray = None

    def train_test(self, fold):
        test = self.fold_of == fold
        return ~test, test


def assign_folds(ts, k, seed):
    """Stratified random k-fold partition.

    Each class is shuffled independently (in id order, so the result does
    not depend on record order) and dealt round-robin into folds; the
    negatives start where the positives stopped so fold sizes differ by at
    most one.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    labels = ts.labels
    npos = int(labels.sum())
    nneg = len(labels) - npos
    if npos < k or nneg < k:
        raise ValueError(f"too few points per class for {k} folds ({npos} positive, {nneg} negative)")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(labels), dtype=np.int64)
    start = 0
    for cls in (1, 0):
        idx = np.flatnonzero(labels == cls)
        idx = idx[np.argsort(ts.ids[idx], kind="stable")]
        idx = idx[rng.permutation(len(idx))]
        fold_of[idx] = (start + np.arange(len(idx))) % k
        start = (start + len(idx)) % k
    return FoldAssignment(int(k), fold_of, int(seed), ts.ids.copy())


CSV_FIXED = ("id", "x", "y", "label", "weight")


def _num(v):
    return repr(float(v))


def format_points_csv(ts):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(CSV_FIXED) + list(ts.covariate_names))
    for i in range(len(ts)):
        w.writerow([int(ts.ids[i]), _num(ts.x[i]), _num(ts.y[i]), int(ts.labels[i]),
                    _num(ts.weights[i])] + [_num(v) for v in ts.covariates[i]])
    return buf.getvalue()


def write_points_csv(ts, path):
    atomic_write_text(path, format_points_csv(ts))


def read_points_csv(path, require=None):
    """Read the point CSV format back into a :class:`TrainingSet`.

    ``require`` optionally names covariate columns that must be present.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PointDataError("empty file", path, 1) from None
        if tuple(h.strip() for h in header[:5]) != CSV_FIXED:
            raise PointDataError(f"header must start with {','.join(CSV_FIXED)}", path, 1)
        names = tuple(h.strip() for h in header[5:])
        for name in require or ():
            if name not in names:
                raise PointDataError(f"missing covariate column {name!r}", path, 1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise PointDataError(f"expected {len(header)} fields, got {len(row)}", path, lineno)
            try:
                rec = [int(row[0]), float(row[1]), float(row[2]), int(row[3]), float(row[4])]
                rec += [float(v) for v in row[5:]]
            except ValueError as exc:
                raise PointDataError(f"bad value: {exc}", path, lineno) from None
            if rec[3] not in (0, 1):
                raise PointDataError(f"label must be 0 or 1, got {rec[3]}", path, lineno)
            if not rec[4] > 0:
                raise PointDataError("weight must be positive", path, lineno)
            rows.append(rec)
    arr = np.array(rows, dtype=float).reshape(-1, 5 + len(names))
    return TrainingSet(arr[:, 0].astype(np.int64), arr[:, 1], arr[:, 2], arr[:, 3].astype(np.int64),
                       arr[:, 4], arr[:, 5:], names)
