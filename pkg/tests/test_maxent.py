import numpy as np
import pytest
from scipy.special import logsumexp

from surveybias import modelkit
from surveybias.models import maxent
from surveybias.raster import Raster
from surveybias.sampling import extract_covariates


def grid_problem(seed=0, side=20, npres=60):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=side * side)
    effort = rng.exponential(size=side * side) + 0.1
    q = maxent.bias_measure(effort)
    # presences favour high z
    p = q * np.exp(1.2 * z)
    cells = rng.choice(side * side, size=npres, p=p / p.sum())
    return z, effort, q, cells


def test_no_features_gives_bias_measure():
    q = np.array([1.0, 2.0, 3.0, 4.0])
    fit = maxent.fit_maxent(np.zeros((4, 0)), np.log(q / q.sum()), [0, 1, 2, 3, 3], np.ones(5))
    p = maxent.gibbs_probabilities(np.zeros((4, 0)), np.log(q / q.sum()), fit["lambda"])
    assert np.allclose(p, q / q.sum(), atol=1e-15)


def test_moment_matching_without_penalty():
    z, _, q, cells = grid_problem(1)
    F = maxent.features(z[:, None])
    w = np.random.default_rng(2).exponential(size=len(cells)) + 0.2
    fit = maxent.fit_maxent(F, np.log(q), cells, w, rho0=0.0)
    p = maxent.gibbs_probabilities(F, np.log(q), fit["lambda"])
    # direct summation over cells
    model_mean = [sum(p[i] * F[i, j] for i in range(len(p))) for j in range(F.shape[1])]
    emp = (w @ F[cells]) / w.sum()
    assert np.all(np.abs(np.array(model_mean) - emp) < 1e-4)


def test_normalization_and_objective_every_update():
    z, _, q, cells = grid_problem(3)
    F = maxent.features(np.column_stack([z, np.sin(z)]))
    fit = maxent.fit_maxent(F, np.log(q), cells, np.ones(len(cells)), rho0=0.5, record=True)
    h = fit["history"]
    assert len(h["objective"]) > 4
    assert max(h["norm_error"]) <= 1e-10
    assert all(b >= a for a, b in zip(h["objective"], h["objective"][1:]))


def test_penalty_scale():
    z, _, q, cells = grid_problem(4)
    F = maxent.features(z[:, None])
    fit = maxent.fit_maxent(F, np.log(q), cells, np.ones(len(cells)), rho0=2.0)
    assert np.allclose(fit["rho"], 2.0 * F[cells].std(axis=0) / np.sqrt(len(cells)))
    assert np.all(fit["rho"] >= 0)


def test_sign_sanity_uniform_effort():
    rng = np.random.default_rng(5)
    z = rng.normal(size=400)
    log_q = np.full(400, -np.log(400))
    cells = np.argsort(z)[-40:][rng.integers(0, 40, 30)]
    fit = maxent.fit_maxent(z[:, None], log_q, cells, np.ones(30))
    assert fit["lambda"][0] > 0


def test_indicator_partition_closed_form():
    # two groups of cells; one indicator feature for group A = {0, 1}
    q = np.array([0.1, 0.3, 0.2, 0.4])
    F = np.array([[1.0], [1.0], [0.0], [0.0]])
    cells = np.array([0, 0, 1, 2, 3, 3, 3])  # 3/7 of presences in group A
    fit = maxent.fit_maxent(F, np.log(q), cells, np.ones(7), rho0=0.0)
    p = maxent.gibbs_probabilities(F, np.log(q), fit["lambda"])
    share = 3 / 7
    expect = np.array([share * 0.1 / 0.4, share * 0.3 / 0.4, (1 - share) * 0.2 / 0.6, (1 - share) * 0.4 / 0.6])
    assert np.allclose(p, expect, atol=1e-6)


def test_log_sum_exp_guard_large_features():
    F = np.array([[800.0], [0.0], [-800.0]])
    p = maxent.gibbs_probabilities(F, np.log(np.full(3, 1 / 3)), [1.0])
    assert np.isfinite(p).all() and abs(p.sum() - 1) < 1e-12


def test_too_few_presences():
    with pytest.raises(ValueError, match="5 presence"):
        maxent.fit_maxent(np.ones((4, 1)), np.log(np.full(4, 0.25)), [0, 1, 2, 3], np.ones(4))


def test_bias_measure_floor_and_errors():
    q = maxent.bias_measure([4.0, 0.0, 2.0], floor=0.5)
    assert np.allclose(q, np.array([4.0, 1.0, 2.0]) / 7)
    with pytest.raises(ValueError, match="degenerate"):
        maxent.bias_measure([0.0, 0.0])


def test_logistic_offset_identity():
    rng = np.random.default_rng(6)
    F = rng.normal(size=(50, 2))
    lam = np.array([0.7, -0.3])
    raw = np.exp(F @ lam - logsumexp(F @ lam))
    H = -np.sum(raw * np.log(raw))
    expect = np.exp(H) * raw / (1 + np.exp(H) * raw)
    off = maxent.logistic_offset(F, lam)
    assert np.allclose(maxent.logistic_output(F, lam, off), expect, rtol=1e-12)


def _landscape(seed=7, side=12):
    rng = np.random.default_rng(seed)
    a = Raster.from_array(rng.normal(size=(side, side)))
    b = Raster.from_array(rng.normal(size=(side, side)))
    effort = Raster.from_array(rng.exponential(size=(side, side)) + 0.05)
    return modelkit.Landscape({"a": a, "b": b}, effort), rng


def _fit_model(land, rng, rho0=1.0, effort=None):
    if effort is not None:
        land = modelkit.Landscape(land.layers, effort)
    grid = land.grid
    pres = rng.choice(grid.ncells, 25, replace=False)
    absn = rng.choice(grid.ncells, 25, replace=False)
    cells = np.r_[pres, absn]
    x, y = grid.center_of(*np.divmod(cells, grid.ncols))
    ts = extract_covariates(np.column_stack([x, y]), land.layers)
    ts = type(ts)(ts.ids, ts.x, ts.y, np.r_[np.ones(25), np.zeros(25)], ts.weights,
                  ts.covariates, ts.covariate_names)
    return modelkit.train(modelkit.ModelConfig("maxent", {"rho0": rho0}), ts, land)


def test_suitability_map_sums_to_one():
    land, rng = _landscape()
    m = _fit_model(land, rng)
    p, rel = modelkit.maxent_suitability_map(m, land)
    assert abs(p.values.sum() - 1) <= 1e-10
    assert abs(rel.values.sum() - land.grid.ncells) <= 1e-8


def test_zero_lambda_uniform_bias_is_flat():
    land, rng = _landscape()
    m = _fit_model(land, rng)
    m.parameters["lambda"] = np.zeros_like(m.parameters["lambda"])
    flat = modelkit.Landscape(land.layers, land.effort.with_values(np.ones(land.grid.ncells)))
    p, _ = modelkit.maxent_suitability_map(m, flat)
    assert np.allclose(p.values, 1 / land.grid.ncells, atol=1e-15)


def test_doubling_effort_leaves_map_unchanged():
    land, _ = _landscape()
    m1 = _fit_model(land, np.random.default_rng(8))
    doubled = land.effort.with_values(land.effort.values * 2)
    m2 = _fit_model(land, np.random.default_rng(8), effort=doubled)
    assert np.allclose(m1.parameters["lambda"], m2.parameters["lambda"], atol=1e-12)
    p1, _ = modelkit.maxent_suitability_map(m1, land)
    p2, _ = modelkit.maxent_suitability_map(m2, modelkit.Landscape(land.layers, doubled))
    assert np.allclose(p1.values, p2.values, atol=1e-15)


def test_map_geometry_mismatch():
    land, rng = _landscape()
    m = _fit_model(land, rng)
    small, _ = _landscape(side=5)
    with pytest.raises(modelkit.ModelError, match="geometry"):
        modelkit.maxent_suitability_map(m, small)
