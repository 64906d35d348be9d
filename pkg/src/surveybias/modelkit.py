"""One train/predict/serialize contract over the four learners."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .models import forest, gam, maxent, spatial_logit
from .raster import Raster, atomic_write_text
from .sampling import Standardization, TrainingSet

MODEL_FILE_VERSION = 1
KINDS = ("spatial_logit", "gam", "maxent", "forest")

_ALLOWED = {
    "spatial_logit": set(spatial_logit.DEFAULTS),
    "gam": {"K", "lambdas"},
    "maxent": {"rho0", "floor", "quadratic"},
    "forest": set(forest.DEFAULTS),
}


class ModelError(ValueError):
    pass


class CovariateMismatch(ModelError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    kind: str
    hyperparameters: dict = field(default_factory=dict)
    use_weights: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        bad = set(self.hyperparameters) - _ALLOWED[self.kind]
        if bad:
            raise ModelError(f"unknown {self.kind} hyperparameters: {sorted(bad)}")

    @property
    def label(self):
        return f"{self.kind}:{'weighted' if self.use_weights else 'unweighted'}"

    def to_dict(self):
        return {"kind": self.kind, "hyperparameters": dict(self.hyperparameters),
                "use_weights": self.use_weights, "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], dict(d.get("hyperparameters", {})), bool(d.get("use_weights", True)),
                   int(d.get("seed", 0)))


@dataclass(frozen=True)
class Landscape:
    """Covariate layers (name -> Raster, one grid) and the survey-effort raster."""

    layers: dict
    effort: Raster = None

    def __post_init__(self):
        ref = self.grid
        for name, r in self.layers.items():
            if not r.same_geometry(ref):
                raise ModelError(f"layer {name!r} does not share the grid geometry")
        if self.effort is not None and not self.effort.same_geometry(ref):
            raise ModelError("effort raster does not share the layer grid")

    @property
    def grid(self):
        return next(iter(self.layers.values()))

    def stack(self, names):
        missing = [n for n in names if n not in self.layers]
        if missing:
            raise CovariateMismatch(f"missing covariate layer(s): {missing}")
        return np.column_stack([self.layers[n].values for n in names])

    def valid(self, names):
        ok = np.ones(self.grid.ncells, dtype=bool)
        for n in names:
            ok &= self.layers[n].valid
        return ok


@dataclass(eq=False)
class FittedModel:
    kind: str
    covariate_names: tuple
    standardization: Standardization
    parameters: dict
    meta: dict

    def to_dict(self):
        conv = {"forest": forest.to_json, "gam": gam.to_json, "maxent": _maxent_to_json,
                "spatial_logit": spatial_logit.to_json}[self.kind]
        meta = {k: v for k, v in self.meta.items() if k != "wall_time"}
        return {
            "version": MODEL_FILE_VERSION,
            "kind": self.kind,
            "standardization": self.standardization.to_dict(self.covariate_names),
            "parameters": conv(self.parameters),
            "meta": dict(meta, covariate_names=list(self.covariate_names)),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("version") != MODEL_FILE_VERSION:
            raise ModelError(f"unsupported model file version {d.get('version')!r}")
        kind = d["kind"]
        if kind not in KINDS:
            raise ModelError(f"unknown model kind {kind!r}")
        names = tuple(d["meta"]["covariate_names"])
        conv = {"forest": forest.from_json, "gam": gam.from_json, "maxent": _maxent_from_json,
                "spatial_logit": spatial_logit.from_json}[kind]
        meta = {k: v for k, v in d["meta"].items() if k != "covariate_names"}
        return cls(kind, names, Standardization.from_dict(d["standardization"], names),
                   conv(d["parameters"]), meta)


def _maxent_to_json(p):
    out = dict(p)
    for key in ("lambda", "rho"):
        out[key] = np.asarray(p[key]).tolist()
    out.pop("history", None)
    return out


def _maxent_from_json(d):
    out = dict(d)
    for key in ("lambda", "rho"):
        out[key] = np.asarray(d[key], float)
    return out


def dumps(model):
    return json.dumps(model.to_dict(), indent=1, sort_keys=True) + "\n"


def save_model(model, path):
    atomic_write_text(path, dumps(model))


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return FittedModel.from_dict(json.load(fh))


def _grid_meta(r):
    return {"nrows": r.nrows, "ncols": r.ncols, "xll": r.xll, "yll": r.yll,
            "cellsize": r.cellsize, "nodata": r.nodata}


def _grid_from_meta(g):
    return Raster(g["nrows"], g["ncols"], g["xll"], g["yll"], g["cellsize"], g["nodata"],
                  np.zeros(g["nrows"] * g["ncols"]))


def train(cfg, ts, landscape=None):
    """Fit ``cfg.kind`` on ``ts``; weights are ignored when ``use_weights`` is off.

    ``spatial_logit`` and ``maxent`` need ``landscape`` (the grid, and for
    MaxEnt the covariate layers and effort bias grid).
    """
    if not isinstance(cfg, ModelConfig):
        cfg = ModelConfig.from_dict(cfg)
    if len(ts) == 0:
        raise ModelError("empty training set")
    weights = ts.weights if cfg.use_weights else np.ones(len(ts))
    Z = ts.standardized()
    y = ts.labels
    hp = dict(cfg.hyperparameters)
    t0 = time.perf_counter()
    if cfg.kind != "maxent" and (y.min() == y.max()):
        raise ModelError(f"{cfg.kind} needs both classes in the training set")

    if cfg.kind == "forest":
        params = forest.fit_forest(Z, y, weights, hp, cfg.seed)
    elif cfg.kind == "gam":
        params = gam.fit_gam(Z, y, weights, K=int(hp.get("K", gam.DEFAULT_K)),
                             lambdas=hp.get("lambdas", gam.DEFAULT_LAMBDAS))
    elif cfg.kind == "spatial_logit":
        if landscape is None:
            raise ModelError("spatial_logit needs the landscape grid")
        grid = landscape.grid
        cells = grid.cell_ids_of(ts.x, ts.y)
        if np.any(cells < 0):
            raise ModelError("training points fall outside the grid")
        params, summary = spatial_logit.fit_car_mcmc(
            Z, y, weights, cells, grid.nrows, grid.ncols, hp, cfg.seed, ts.covariate_names)
        params["grid"] = _grid_meta(grid)
    else:
        params = _train_maxent(ts, weights, hp, landscape)
    meta = {"n": len(ts), "p": ts.n_features, "seed": cfg.seed, "use_weights": cfg.use_weights,
            "hyperparameters": _jsonable(hp), "wall_time": time.perf_counter() - t0}
    return FittedModel(cfg.kind, ts.covariate_names, ts.standardization, params, meta)


def _jsonable(hp):
    return json.loads(json.dumps(hp, default=lambda v: v.tolist() if hasattr(v, "tolist") else str(v)))


def _train_maxent(ts, weights, hp, landscape):
    if landscape is None or landscape.effort is None:
        raise ModelError("maxent needs covariate layers and an effort raster")
    names = ts.covariate_names
    quadratic = bool(hp.get("quadratic", True))
    grid = landscape.grid
    domain = np.flatnonzero(landscape.valid(names) & landscape.effort.valid)
    Zc = ts.standardization.apply(landscape.stack(names)[domain])
    F = maxent.features(Zc, quadratic)
    if F.shape[1] == 0:
        raise ModelError("empty feature set")
    q = maxent.bias_measure(landscape.effort.values[domain], hp.get("floor", maxent.DEFAULT_BACKGROUND_FLOOR))
    pos = ts.labels == 1
    cells = grid.cell_ids_of(ts.x[pos], ts.y[pos])
    lookup = np.full(grid.ncells, -1, dtype=np.int64)
    lookup[domain] = np.arange(len(domain))
    rows = lookup[cells]
    if np.any(rows < 0):
        raise ModelError("presence points in nodata cells or outside the grid")
    fit = maxent.fit_maxent(F, np.log(q), rows, weights[pos],
                            rho0=float(hp.get("rho0", maxent.DEFAULT_RHO0)))
    fit["quadratic"] = quadratic
    fit["feature_names"] = maxent.feature_names(names, quadratic)
    fit["offset"] = maxent.logistic_offset(F, fit["lambda"])
    fit["grid"] = _grid_meta(grid)
    return fit


def _check_names(model, names):
    if tuple(names) != tuple(model.covariate_names):
        raise CovariateMismatch(
            f"covariates {list(names)} do not match training covariates {list(model.covariate_names)}")


def predict_standardized(model, Z, x=None, y=None):
    """Probabilities for standardized covariate rows (and map coordinates)."""
    p = model.parameters
    if model.kind == "forest":
        out = forest.predict_forest(p, Z)
    elif model.kind == "gam":
        out = gam.predict_gam(p, Z)
    elif model.kind == "maxent":
        out = maxent.logistic_output(maxent.features(Z, p["quadratic"]), p["lambda"], p["offset"])
    else:
        grid = _grid_from_meta(p["grid"])
        cells = grid.cell_ids_of(x, y)
        out = spatial_logit.predict_spatial_logit(p, Z, cells)
    return np.clip(out, 0.0, 1.0)


def predict(model, data):
    """Predict for a TrainingSet (returns a vector) or a layer mapping (returns a Raster)."""
    if isinstance(data, TrainingSet):
        _check_names(model, data.covariate_names)
        Z = model.standardization.apply(data.covariates)
        return predict_standardized(model, Z, data.x, data.y)
    layers = data.layers if isinstance(data, Landscape) else data
    land = data if isinstance(data, Landscape) else Landscape(dict(layers))
    missing = [n for n in model.covariate_names if n not in layers]
    if missing:
        raise CovariateMismatch(f"missing covariate layer(s): {missing}")
    grid = land.grid
    ok = land.valid(model.covariate_names)
    X = land.stack(model.covariate_names)[ok]
    rows, cols = np.divmod(np.flatnonzero(ok), grid.ncols)
    cx, cy = grid.center_of(rows, cols)
    out = np.full(grid.ncells, grid.nodata)
    out[ok] = predict_standardized(model, model.standardization.apply(X), cx, cy)
    return grid.with_values(out)


def maxent_suitability_map(model, layers, effort=None):
    """Gibbs cell probabilities and bias-free relative suitability.

    Returns ``(p, relative)``: ``p`` sums to one over usable cells and
    includes the bias grid when ``effort`` is given (uniform otherwise);
    ``relative`` is ncells times the bias-free distribution.
    """
    if model.kind != "maxent":
        raise ModelError("suitability maps need a maxent model")
    land = layers if isinstance(layers, Landscape) else Landscape(dict(layers), effort)
    p = model.parameters
    grid = land.grid
    g = p["grid"]
    if (grid.nrows, grid.ncols) != (g["nrows"], g["ncols"]):
        raise ModelError("geometry mismatch between model and layers")
    names = model.covariate_names
    ok = land.valid(names)
    if land.effort is not None:
        ok &= land.effort.valid
    domain = np.flatnonzero(ok)
    F = maxent.features(model.standardization.apply(land.stack(names)[domain]), p["quadratic"])
    if land.effort is not None:
        log_q = np.log(maxent.bias_measure(land.effort.values[domain],
                                           model.meta.get("hyperparameters", {}).get("floor", maxent.DEFAULT_BACKGROUND_FLOOR)))
    else:
        log_q = np.full(len(domain), -np.log(len(domain)))
    prob = maxent.gibbs_probabilities(F, log_q, p["lambda"])
    rel = maxent.suitability(F, p["lambda"]) * len(domain)
    a = np.full(grid.ncells, grid.nodata)
    b = np.full(grid.ncells, grid.nodata)
    a[domain] = prob
    b[domain] = rel
    return grid.with_values(a), grid.with_values(b)
