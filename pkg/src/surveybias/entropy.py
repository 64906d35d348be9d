"""Shannon entropy of survey effort and the sample weights derived from it."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .raster import Raster

DEFAULT_WINDOW = 5
DEFAULT_EPSILON = 1e-3


class DegenerateEffortError(ValueError):
    pass


@dataclass(frozen=True)
class EffortDistribution:
    counts: np.ndarray
    proportions: np.ndarray
    nunits: int


@dataclass(frozen=True)
class EntropySurface:
    raw: Raster
    normalized: Raster
    window: int


@dataclass(frozen=True)
class WeightScheme:
    presence_weights: np.ndarray
    absence_weights: np.ndarray
    epsilon: float
    normalization: bool = True


def effort_distribution(effort):
    """Proportion of total effort per cell.

    Accepts a :class:`Raster` (nodata cells dropped) or a plain sequence of
    counts.
    """
    if isinstance(effort, Raster):
        counts = effort.values[effort.valid].astype(float)
    else:
        counts = np.asarray(effort, dtype=float).ravel()
    if np.any(counts < 0) or not np.all(np.isfinite(counts)):
        raise ValueError("effort values must be finite and non-negative")
    total = counts.sum()
    if not total > 0:
        raise DegenerateEffortError("degenerate effort layer: total effort is zero")
    return EffortDistribution(counts, counts / total, int(counts.size))


def shannon_entropy(p):
    """Shannon entropy in nats, with 0 ln 0 = 0."""
    if isinstance(p, EffortDistribution):
        p = p.proportions
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    # fsum is correctly rounded, so the result does not depend on cell order
    return 0.0 - math.fsum(nz * np.log(nz))


def normalized_entropy(p):
    """Entropy divided by ln N; 0 when N == 1."""
    if not isinstance(p, EffortDistribution):
        p = effort_distribution(p)
    if p.nunits <= 1:
        return 0.0
    return shannon_entropy(p) / np.log(p.nunits)


def _window_entropy(counts, valid):
    """Entropy (nats) and unit count for each window in the last two axes."""
    k = valid.sum(axis=(-2, -1))
    c = np.where(valid, counts, 0.0)
    total = c.sum(axis=(-2, -1))
    with np.errstate(divide="ignore", invalid="ignore"):
        p = c / total[..., None, None]
        terms = np.where(p > 0, -p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return terms.sum(axis=(-2, -1)), total, k


def entropy_surface(effort, window=DEFAULT_WINDOW):
    """Moving-window Shannon entropy of survey effort.

    Each cell gets the entropy of effort proportions in the centred
    ``window`` x ``window`` block, clipped at grid borders and ignoring
    nodata. The normalized surface divides by ln(k), k being the number of
    usable cells in the block. Blocks with no effort are maximally uncertain
    (1.0); single-cell blocks with effort are 0.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be a positive odd integer, got {window}")
    arr = effort.as_array()
    valid = effort.valid.reshape(effort.shape)
    if np.any(arr[valid] < 0):
        raise ValueError("effort values must be non-negative")

    h = window // 2
    padded = np.pad(np.where(valid, arr, 0.0), h, constant_values=0.0)
    pvalid = np.pad(valid, h, constant_values=False)
    wins = sliding_window_view(padded, (window, window))
    wvalid = sliding_window_view(pvalid, (window, window))
    raw, total, k = _window_entropy(wins, wvalid)

    with np.errstate(divide="ignore", invalid="ignore"):
        norm = np.where(k > 1, raw / np.log(np.maximum(k, 2)), 0.0)
    norm = np.where(total > 0, norm, 1.0)
    norm = np.clip(norm, 0.0, 1.0)

    nodata = effort.nodata
    raw = np.where(valid, raw, nodata)
    norm = np.where(valid, norm, nodata)
    return EntropySurface(effort.with_values(raw), effort.with_values(norm), window)


def _point_cells(raster, points, what):
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    ids = raster.cell_ids_of(pts[:, 0], pts[:, 1])
    bad = np.flatnonzero(ids < 0)
    if bad.size:
        raise ValueError(f"{what} outside raster extent: indices {bad.tolist()[:10]}")
    nd = np.flatnonzero(~raster.valid[ids])
    if nd.size:
        raise ValueError(f"{what} in nodata cells: indices {nd.tolist()[:10]}")
    return ids


def mean_one(w):
    w = np.asarray(w, dtype=float)
    if w.size == 0:
        return w
    return w / w.mean()


def raw_presence_weights(effort, cells, epsilon=DEFAULT_EPSILON):
    share = np.zeros(effort.ncells)
    share[effort.valid] = effort_distribution(effort).proportions
    return 1.0 / (epsilon + share[cells])


def raw_absence_weights(surface, cells, epsilon=DEFAULT_EPSILON):
    return 1.0 - surface.normalized.values[cells] + epsilon


def derive_weights(presences, absences, effort, surface, epsilon=DEFAULT_EPSILON,
                   normalize=True):
    """Entropy-based sample weights for presence and pseudo-absence records.

    Presences are weighted by ``1 / (epsilon + p_cell)`` where ``p_cell`` is
    the cell's share of total effort, so finds from thinly surveyed cells
    count more. Pseudo-absences are weighted by ``1 - H_cell + epsilon``
    with ``H_cell`` the normalized local entropy, so background points in
    poorly known areas count less. Each class is rescaled to mean one.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not effort.same_geometry(surface.normalized):
        raise ValueError("effort and entropy surface grids differ")
    pw = raw_presence_weights(effort, _point_cells(effort, presences, "presence"), epsilon)
    aw = raw_absence_weights(surface, _point_cells(effort, absences, "absence"), epsilon)
    if normalize:
        pw, aw = mean_one(pw), mean_one(aw)
    return WeightScheme(pw, aw, float(epsilon), bool(normalize))
