"""Synthetic landscapes with known site probability and biased surveys."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.optimize import bisect

from .raster import Raster
from .sampling import TrainingSet, extract_covariates

BIAS_KINDS = ("corner-gradient", "corridor", "patchy")
EFFORT_MAX = 100.0


@dataclass(frozen=True)
class LandscapeSpec:
    nrows: int = 100
    ncols: int = 100
    n_covariates: int = 3
    smoothness: tuple = (4.0, 8.0, 2.0)
    coefficients: tuple = (1.5, -1.0, 0.75)
    quadratic_index: int = None
    quadratic_coef: float = -1.0
    site_rate: float = 0.1
    seed: int = 0
    cellsize: float = 1.0

    def __post_init__(self):
        if self.nrows < 1 or self.ncols < 1:
            raise ValueError("grid dimensions must be positive")
        if len(self.smoothness) != self.n_covariates or len(self.coefficients) != self.n_covariates:
            raise ValueError("smoothness and coefficients need one entry per covariate")
        if any(r < 0 for r in self.smoothness):
            raise ValueError("smoothness radius must be >= 0")
        if not 0 < self.site_rate < 0.5:
            raise ValueError("site_rate must lie in (0, 0.5)")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class SurveyBiasSpec:
    kind: str = "corner-gradient"
    intensity: float = 3.0
    coverage: float = 0.3
    detection: float = 0.8
    seed: int = 0
    patch_radius: float = 6.0

    def __post_init__(self):
        if self.kind not in BIAS_KINDS:
            raise ValueError(f"bias kind must be one of {BIAS_KINDS}")
        if self.intensity < 0:
            raise ValueError("intensity must be >= 0")
        if not 0 < self.coverage <= 1:
            raise ValueError("coverage must lie in (0, 1]")
        if not 0 < self.detection <= 1:
            raise ValueError("detection must lie in (0, 1]")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class Landscape:
    covariates: dict  # name -> Raster
    probability: Raster
    sites: Raster
    intercept: float
    spec: LandscapeSpec = field(repr=False)


def _standardize(a):
    sd = a.std()
    return (a - a.mean()) / sd if sd > 0 else a - a.mean()


def covariate_fields(spec):
    rng = np.random.default_rng(spec.seed)
    out = []
    for r in spec.smoothness:
        noise = rng.standard_normal((spec.nrows, spec.ncols))
        field_ = gaussian_filter(noise, r, mode="reflect") if r > 0 else noise
        out.append(_standardize(field_))
    return out


def _logistic(v):
    return 1.0 / (1.0 + np.exp(-v))


def tune_intercept(linear, target, lo=-40.0, hi=40.0):
    """Intercept making the mean of logistic(intercept + linear) equal ``target``."""
    def gap(b):
        return _logistic(b + linear).mean() - target
    if gap(lo) > 0 or gap(hi) < 0:
        raise ValueError(f"unreachable site rate {target}")
    return bisect(gap, lo, hi, xtol=1e-12)


def generate_landscape(spec):
    fields = covariate_fields(spec)
    linear = sum(c * f for c, f in zip(spec.coefficients, fields))
    if spec.quadratic_index is not None:
        linear = linear + spec.quadratic_coef * fields[spec.quadratic_index] ** 2
    linear = np.asarray(linear, dtype=float) * np.ones((spec.nrows, spec.ncols))
    b0 = tune_intercept(linear, spec.site_rate)
    prob = _logistic(b0 + linear)
    rng = np.random.default_rng([spec.seed, 1])
    sites = (rng.random(prob.shape) < prob).astype(float)
    cs = spec.cellsize
    covs = {f"cov{j + 1}": Raster.from_array(f, cellsize=cs) for j, f in enumerate(fields)}
    return Landscape(covs, Raster.from_array(prob, cellsize=cs), Raster.from_array(sites, cellsize=cs),
                     float(b0), spec)


def _base_field(bias, nrows, ncols, rng):
    rows, cols = np.mgrid[0:nrows, 0:ncols].astype(float)
    if bias.kind == "corner-gradient":
        cr = rng.choice([0, nrows - 1])
        cc = rng.choice([0, ncols - 1])
        d = np.hypot(rows - cr, cols - cc)
        d = d / max(d.max(), 1.0)
        return np.exp(-bias.intensity * d)
    if bias.kind == "corridor":
        if rng.random() < 0.5:
            line = rng.integers(nrows)
            d = np.abs(rows - line) / max(nrows - 1, 1)
        else:
            line = rng.integers(ncols)
            d = np.abs(cols - line) / max(ncols - 1, 1)
        return np.exp(-bias.intensity * d)
    noise = gaussian_filter(rng.standard_normal((nrows, ncols)), bias.patch_radius)
    patches = gaussian_filter((noise > np.median(noise)).astype(float), bias.patch_radius / 2)
    return np.exp(-bias.intensity * (1.0 - patches / max(patches.max(), 1e-12)))


def generate_survey(bias, truth):
    """Survey effort raster and observed presence points (n x 2 array).

    Exactly ``round(coverage * ncells)`` cells (at least one) receive positive
    effort: those with the largest base field, ties broken at random. A true
    site in a surveyed cell is recorded with probability detection times the
    cell's effort percentile among surveyed cells.
    """
    sites = truth.sites if hasattr(truth, "sites") else truth
    nrows, ncols = sites.shape
    rng = np.random.default_rng(bias.seed)
    base = _base_field(bias, nrows, ncols, rng).ravel()
    ncells = nrows * ncols
    k = max(1, int(round(bias.coverage * ncells)))
    tiebreak = rng.random(ncells)
    order = np.lexsort((tiebreak, -base))
    surveyed = np.zeros(ncells, dtype=bool)
    surveyed[order[:k]] = True
    effort = np.where(surveyed, base / base[surveyed].max() * EFFORT_MAX, 0.0)

    s_eff = np.sort(effort[surveyed])
    pct = np.zeros(ncells)
    pct[surveyed] = np.searchsorted(s_eff, effort[surveyed], side="right") / k
    true_site = sites.values > 0.5
    observed = true_site & surveyed & (rng.random(ncells) < bias.detection * pct)
    cells = np.flatnonzero(observed)
    rows, cols = np.divmod(cells, ncols)
    jit = rng.random((len(cells), 2))
    x = sites.xll + (cols + jit[:, 0]) * sites.cellsize
    y = sites.yll + (nrows - 1 - rows + jit[:, 1]) * sites.cellsize
    return sites.with_values(effort), np.column_stack([x, y])


def uniform_truth_testset(world, n, seed):
    """``n`` distinct cells drawn uniformly, labelled by the true-site raster."""
    if n < 50:
        raise ValueError("n must be >= 50")
    sites = world.sites
    if n > sites.ncells:
        raise ValueError("n exceeds the number of cells")
    rng = np.random.default_rng(seed)
    cells = np.sort(rng.choice(sites.ncells, size=n, replace=False))
    rows, cols = np.divmod(cells, sites.ncols)
    x, y = sites.center_of(rows, cols)
    labels = (sites.values[cells] > 0.5).astype(np.int64)
    ts = extract_covariates(np.column_stack([x, y]), world.covariates, labels=labels,
                            weights=np.ones(n), ids=cells)
    return ts
