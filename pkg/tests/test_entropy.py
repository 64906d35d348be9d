import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surveybias import entropy
from surveybias.raster import Raster


def brute_window_entropy(arr, valid, r, c, window):
    h = window // 2
    vals = []
    for rr in range(r - h, r + h + 1):
        for cc in range(c - h, c + h + 1):
            if 0 <= rr < arr.shape[0] and 0 <= cc < arr.shape[1] and valid[rr, cc]:
                vals.append(arr[rr, cc])
    k = len(vals)
    total = sum(vals)
    if total == 0:
        return 1.0
    if k == 1:
        return 0.0
    H = -sum(v / total * math.log(v / total) for v in vals if v > 0)
    return H / math.log(k)


def test_effort_distribution_examples():
    assert entropy.effort_distribution([2, 1, 1]).proportions.tolist() == [0.5, 0.25, 0.25]
    assert entropy.effort_distribution([5, 0, 0]).proportions.tolist() == [1, 0, 0]
    with pytest.raises(entropy.DegenerateEffortError, match="degenerate effort layer"):
        entropy.effort_distribution([0, 0, 0])
    with pytest.raises(ValueError):
        entropy.effort_distribution([1, -1])


def test_effort_distribution_drops_nodata():
    r = Raster.from_array([[1.0, -9999.0], [3.0, 0.0]])
    d = entropy.effort_distribution(r)
    assert d.nunits == 3
    assert d.proportions.tolist() == [0.25, 0.75, 0.0]


def test_proportions_sum_to_one():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        c = rng.exponential(size=rng.integers(1, 50)) * (rng.random() * 1e6)
        c[0] += 1e-3
        assert abs(entropy.effort_distribution(c).proportions.sum() - 1) <= 1e-12


def test_entropy_examples():
    assert abs(entropy.shannon_entropy(np.full(8, 1 / 8)) - math.log(8)) <= 1e-12
    assert entropy.shannon_entropy([1, 0, 0, 0]) == 0
    assert abs(entropy.shannon_entropy([0.5, 0.25, 0.25]) - 1.0397208) < 1e-6
    assert entropy.normalized_entropy([3]) == 0.0


def test_entropy_bounds_and_permutation():
    rng = np.random.default_rng(1)
    for _ in range(300):
        d = entropy.effort_distribution(rng.exponential(size=rng.integers(1, 40)))
        H = entropy.shannon_entropy(d)
        assert 0 <= H <= math.log(d.nunits) + 1e-12
        perm = rng.permutation(d.proportions)
        assert entropy.shannon_entropy(perm) == H


def test_concentration_never_increases_entropy():
    rng = np.random.default_rng(2)
    for _ in range(500):
        p = entropy.effort_distribution(rng.exponential(size=10)).proportions.copy()
        H = entropy.shannon_entropy(p)
        i, j = np.argsort(p)[[0, -1]]  # lowest, highest
        move = p[i] * rng.random()
        p[i] -= move
        p[j] += move
        assert entropy.shannon_entropy(p) <= H + 1e-12


def test_window_one():
    r = Raster.from_array([[0.0, 2.0], [5.0, 0.0]])
    s = entropy.entropy_surface(r, 1)
    assert s.normalized.values.tolist() == [1.0, 0.0, 0.0, 1.0]


def test_uniform_effort_interior_is_one():
    r = Raster.from_array(np.full((6, 6), 3.0))
    s = entropy.entropy_surface(r, 3)
    assert abs(s.normalized.as_array()[2, 3] - 1.0) <= 1e-9
    assert abs(s.normalized.as_array()[0, 0] - 1.0) <= 1e-9  # clipped windows too


def test_one_hot_cell_matches_brute_force():
    arr = np.zeros((5, 5))
    arr[1, 3] = 7.0
    r = Raster.from_array(arr)
    for window in (1, 3, 5):
        s = entropy.entropy_surface(r, window).normalized.as_array()
        for rr in range(5):
            for cc in range(5):
                assert s[rr, cc] == pytest.approx(
                    brute_window_entropy(arr, np.ones_like(arr, bool), rr, cc, window), abs=1e-12)
    assert entropy.entropy_surface(r, 5).normalized.as_array()[2, 2] == 0.0


def test_random_surface_matches_brute_force_with_nodata():
    rng = np.random.default_rng(3)
    for _ in range(5):
        arr = rng.exponential(size=(8, 7)) * (rng.random((8, 7)) < 0.6)
        arr[rng.random(arr.shape) < 0.15] = -9999.0
        r = Raster.from_array(arr)
        valid = arr != -9999.0
        for window in (3, 5):
            s = entropy.entropy_surface(r, window)
            norm = s.normalized.as_array()
            for rr in range(8):
                for cc in range(7):
                    if not valid[rr, cc]:
                        assert norm[rr, cc] == -9999.0
                        continue
                    assert norm[rr, cc] == pytest.approx(
                        brute_window_entropy(arr, valid, rr, cc, window), abs=1e-12)
                    assert 0.0 <= norm[rr, cc] <= 1.0


def test_full_window_equals_global():
    rng = np.random.default_rng(4)
    arr = rng.exponential(size=(6, 9))
    r = Raster.from_array(arr)
    s = entropy.entropy_surface(r, 2 * 9 - 1)
    glob = entropy.normalized_entropy(r)
    assert np.allclose(s.normalized.values, glob, atol=1e-12)
    assert np.allclose(s.raw.values, entropy.shannon_entropy(entropy.effort_distribution(r)), atol=1e-12)


def test_even_window_rejected():
    with pytest.raises(ValueError, match="odd"):
        entropy.entropy_surface(Raster.from_array(np.ones((4, 4))), 2)


def _grid_points(r, cells):
    rows, cols = np.divmod(np.asarray(cells), r.ncols)
    x, y = r.center_of(rows, cols)
    return np.column_stack([x, y])


def test_presence_weight_ratio():
    effort = Raster.from_array([[4.0, 2.0, 4.0]])
    surf = entropy.entropy_surface(effort, 1)
    ws = entropy.derive_weights(_grid_points(effort, [0, 1]), _grid_points(effort, [2]), effort, surf,
                                epsilon=1e-12, normalize=False)
    # proportions 0.4 and 0.2
    assert ws.presence_weights[1] / ws.presence_weights[0] == pytest.approx(2.0, abs=1e-9)


def test_absence_weight_at_full_entropy_is_epsilon():
    effort = Raster.from_array([[0.0, 1.0], [1.0, 1.0]])
    surf = entropy.entropy_surface(effort, 1)
    ws = entropy.derive_weights(_grid_points(effort, [1]), _grid_points(effort, [0, 3]), effort, surf,
                                epsilon=1e-3, normalize=False)
    assert ws.absence_weights[0] == pytest.approx(1e-3, abs=1e-15)
    assert ws.absence_weights[1] == pytest.approx(1.0 + 1e-3)


def test_weights_mean_one_and_scale_invariant():
    rng = np.random.default_rng(5)
    for _ in range(50):
        arr = rng.exponential(size=(10, 10)) * (rng.random((10, 10)) < 0.7)
        arr[0, 0] += 1
        effort = Raster.from_array(arr)
        surf = entropy.entropy_surface(effort, 3)
        pres = rng.uniform(0, 10, size=(rng.integers(1, 30), 2))
        absn = rng.uniform(0, 10, size=(rng.integers(1, 30), 2))
        ws = entropy.derive_weights(pres, absn, effort, surf)
        assert abs(ws.presence_weights.mean() - 1) <= 1e-9
        assert abs(ws.absence_weights.mean() - 1) <= 1e-9
        assert np.all(ws.presence_weights > 0) and np.all(ws.absence_weights > 0)
        scaled = effort.with_values(arr.ravel() * 37.5)
        ws2 = entropy.derive_weights(pres, absn, scaled, entropy.entropy_surface(scaled, 3))
        assert np.allclose(ws.presence_weights, ws2.presence_weights, rtol=1e-12)
        assert np.allclose(ws.absence_weights, ws2.absence_weights, rtol=1e-12)


def test_weights_reject_outside_points():
    effort = Raster.from_array(np.ones((3, 3)))
    surf = entropy.entropy_surface(effort, 3)
    with pytest.raises(ValueError, match="outside"):
        entropy.derive_weights([[5.0, 5.0]], [[1.0, 1.0]], effort, surf)
    with pytest.raises(ValueError, match="epsilon"):
        entropy.derive_weights([[1.0, 1.0]], [[1.0, 1.0]], effort, surf, epsilon=0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=30).filter(lambda v: sum(v) > 0))
def test_entropy_upper_bound_property(counts):
    d = entropy.effort_distribution(counts)
    assert 0 <= entropy.shannon_entropy(d) <= math.log(d.nunits) + 1e-12
    assert 0 <= entropy.normalized_entropy(d) <= 1 + 1e-12
