import itertools
import math

import numpy as np
import pytest
from scipy.stats import wilcoxon

from surveybias import evaluation as ev
from surveybias import modelkit, sampling


def brute_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return total / (len(pos) * len(neg))


def test_auc_examples():
    assert ev.auc([0.9, 0.4, 0.3, 0.5], [1, 1, 0, 0]) == 0.75
    assert ev.auc([0.8, 0.9, 0.1, 0.2], [1, 1, 0, 0]) == 1.0
    assert ev.auc(np.full(10, 0.3), [1, 0] * 5) == 0.5
    with pytest.raises(ev.SingleClassError):
        ev.auc([0.1, 0.2], [1, 1])


def test_auc_matches_all_pairs():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(2, 51))
        y = rng.integers(0, 2, n)
        y[0], y[1] = 0, 1
        s = rng.integers(0, 8, n) / 8  # plenty of ties
        assert ev.auc(s, y) == brute_auc(s, y)


def test_auc_chance_and_symmetries():
    rng = np.random.default_rng(1)
    s = rng.random(5000)
    y = rng.integers(0, 2, 5000)
    assert abs(ev.auc(s, y) - 0.5) < 0.05
    s = rng.normal(size=300)
    y = (s + rng.normal(size=300) > 0).astype(int)
    assert ev.auc(s, y) == pytest.approx(1 - ev.auc(-s, y), abs=1e-15)
    assert ev.auc(np.exp(3 * s), y) == ev.auc(s, y)


def test_youden_examples():
    thr, j = ev.youden_threshold([0.1, 0.2, 0.3, 0.7, 0.8, 0.9], [0, 0, 0, 1, 1, 1], return_j=True)
    assert thr == 0.5 and j == 1.0
    thr, j = ev.youden_threshold(np.full(6, 0.4), [0, 1] * 3, return_j=True)
    assert thr == 0.0 and j == 0.0


def test_youden_against_dense_grid():
    rng = np.random.default_rng(2)
    for _ in range(50):
        n = int(rng.integers(10, 80))
        y = rng.integers(0, 2, n)
        y[:2] = [0, 1]
        s = np.clip(rng.normal(0.5 + 0.2 * (y - 0.5), 0.2), 0, 1)
        thr, j = ev.youden_threshold(s, y, return_j=True)
        grid = np.linspace(0, 1, 1001)
        best = max(np.mean(s[y == 1] >= t) + np.mean(s[y == 0] < t) - 1 for t in grid)
        assert j >= best - 1e-12
        m = ev.classification_metrics(s, y, thr)
        assert m.tss == pytest.approx(j, abs=1e-12)


def test_classification_metrics_hand_case():
    m = ev.metrics_from_confusion((45, 5, 10, 40))
    assert m.accuracy == pytest.approx(0.85)
    assert m.sensitivity == pytest.approx(0.8182, abs=5e-5)
    assert m.specificity == pytest.approx(0.8889, abs=5e-5)
    assert m.tss == pytest.approx(0.7071, abs=5e-5)
    assert m.kappa == pytest.approx(0.70, abs=1e-12)
    assert abs(m.tss - (m.sensitivity + m.specificity - 1)) <= 1e-12


def test_classification_metrics_degenerate():
    y = np.array([1, 1, 0, 0, 1])
    perfect = ev.classification_metrics(y.astype(float), y, 0.5)
    assert (perfect.accuracy, perfect.sensitivity, perfect.specificity, perfect.kappa) == (1, 1, 1, 1)
    allpos = ev.classification_metrics(np.full(5, 0.9), y, 0.5)
    assert allpos.sensitivity == 1 and allpos.specificity == 0 and allpos.tss == 0
    assert sum(allpos.confusion) == 5
    with pytest.raises(ValueError):
        ev.classification_metrics(y, y, 1.5)


def test_kappa_cases():
    assert ev.cohens_kappa((10, 0, 0, 10)) == 1.0
    assert ev.cohens_kappa((10, 0, 0, 0)) == 0.0  # p_e == 1
    rng = np.random.default_rng(3)
    a = rng.random(100_000) < 0.3
    b = rng.random(100_000) < 0.6
    conf = (np.sum(a & b), np.sum(a & ~b), np.sum(~a & b), np.sum(~a & ~b))
    assert abs(ev.cohens_kappa(conf)) < 0.05
    with pytest.raises(ValueError):
        ev.cohens_kappa((0, 0, 0, 0))


def test_calibration_examples():
    y = np.array([0, 1] * 10)
    c = ev.calibration_curve(y.astype(float), y)
    assert np.flatnonzero(c.count).tolist() == [0, 9] and c.ece == 0.0
    c = ev.calibration_curve(np.full(20, 0.55), y)
    assert c.count[5] == 20 and c.ece == pytest.approx(0.05, abs=1e-12)


def test_calibration_matches_bin_loop():
    rng = np.random.default_rng(4)
    for _ in range(30):
        s = rng.random(200)
        s[:3] = [0.0, 1.0, 0.1]
        y = (rng.random(200) < s).astype(int)
        c = ev.calibration_curve(s, y)
        ece = 0.0
        for b in range(10):
            lo, hi = b / 10, (b + 1) / 10
            inb = [(si, yi) for si, yi in zip(s, y) if lo <= si < hi or (b == 9 and si == 1.0)]
            if inb:
                ece += len(inb) / 200 * abs(np.mean([v for _, v in inb]) - np.mean([v for v, _ in inb]))
        assert c.ece == pytest.approx(ece, abs=1e-12)
        assert c.count.sum() == 200 and 0 <= c.ece <= 1


def test_roc_curve_area():
    rng = np.random.default_rng(5)
    s = rng.integers(0, 10, 100) / 10
    y = rng.integers(0, 2, 100)
    fpr, tpr, _ = ev.roc_curve(s, y)
    assert fpr[0] == 0 and tpr[-1] == 1
    assert np.all(np.diff(fpr) >= 0) and np.all(np.diff(tpr) >= 0)
    area = np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2)
    assert area == pytest.approx(ev.auc(s, y), abs=1e-12)


def test_wilcoxon_all_positive_ten():
    r = ev.wilcoxon_signed_rank(np.arange(1, 11) + 0.5, np.arange(1, 11))
    assert r.p_two_sided == 2 / 1024
    assert f"{r.p_two_sided:.4f}" == "0.0020"
    assert r.method == "exact" and r.W == 55


def test_wilcoxon_errors():
    with pytest.raises(ValueError, match="all differences zero"):
        ev.wilcoxon_signed_rank([1, 2, 3, 4, 5], [1, 2, 3, 4, 5])
    with pytest.raises(ValueError, match="at least 5"):
        ev.wilcoxon_signed_rank([1, 2, 3], [0, 0, 0])


def test_null_distribution_matches_enumeration():
    rng = np.random.default_rng(6)
    for n in range(1, 10):
        ranks = np.sort(rng.choice([1, 1.5, 2, 3, 3.5, 4, 5, 6, 7, 8], n))
        support, counts = ev.signed_rank_null(ranks)
        assert sum(int(c) for c in counts) == 2 ** n
        brute = {}
        for signs in itertools.product([0, 1], repeat=n):
            w = float(np.dot(signs, ranks))
            brute[w] = brute.get(w, 0) + 1
        got = {float(s): int(c) for s, c in zip(support, counts) if c}
        assert got == brute


def _mc_p(d, rng, draws=100_000):
    ranks = np.argsort(np.argsort(np.abs(d))) + 1.0
    w_obs = ranks[d > 0].sum()
    mean = ranks.sum() / 2
    signs = rng.random((draws, len(d))) < 0.5
    w = signs @ ranks
    return np.mean(np.abs(w - mean) >= abs(w_obs - mean) - 1e-9)


def test_exact_matches_monte_carlo():
    rng = np.random.default_rng(7)
    for _ in range(20):
        d = rng.normal(0.3, 1, 8)
        exact = ev.wilcoxon_signed_rank(d, np.zeros(8)).p_two_sided
        mc = _mc_p(d, rng)
        sigma = math.sqrt(max(exact * (1 - exact), 1e-12) / 100_000)
        assert abs(exact - mc) <= 3 * sigma + 1e-12


def test_normal_approximation_large_n():
    rng = np.random.default_rng(8)
    for _ in range(10):
        d = np.round(rng.normal(0.3, 1, 40), 1)  # rounding creates tied ranks
        r = ev.wilcoxon_signed_rank(d, np.zeros(40))
        ref = wilcoxon(d, correction=True, method="approx", zero_method="wilcox")
        assert r.method == "normal"
        assert r.p_two_sided == pytest.approx(ref.pvalue, rel=1e-10)


def _toy_training(seed=0, n=120):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    y = (X[:, 0] + 0.7 * rng.normal(size=n) > 0).astype(int)
    w = rng.exponential(size=n) + 0.2
    return sampling.TrainingSet(np.arange(n), rng.random(n), rng.random(n), y, w, X, ("a", "b"))


def test_run_cv_structure_and_consistency():
    ts = _toy_training()
    folds = sampling.assign_folds(ts, 5, seed=1)
    cfgs = [modelkit.ModelConfig("forest", {"n_trees": 20}, uw, seed=3) for uw in (True, False)]
    cfgs += [modelkit.ModelConfig("gam", {}, uw) for uw in (True, False)]
    rep = ev.run_cv(cfgs, ts, folds, external=_toy_training(9, 200))
    for label in ("forest:weighted", "forest:unweighted", "gam:weighted", "gam:unweighted"):
        assert len(rep.folds[label]) == 5
        for fr in rep.folds[label]:
            assert fr.error is None
            ids, labels, scores = zip(*[(p[0], p[1], p[2]) for p in fr.predictions])
            assert fr.metrics.auc == ev.auc(scores, labels)
            assert abs(fr.metrics.tss - (fr.metrics.sensitivity + fr.metrics.specificity - 1)) <= 1e-12
            assert sum(fr.metrics.confusion) == len(ids)
    assert rep.paired["forest"]["wilcoxon"] is None or rep.paired["forest"]["wilcoxon"]["n"] <= 5
    assert set(rep.external) == set(rep.calibration) == set(rep.roc)
    d = rep.to_dict()
    assert d["k"] == 5 and "roc" in d


def test_threshold_ignores_test_labels():
    # flipping test-fold labels leaves the fold threshold unchanged
    ts = _toy_training(2)
    folds = sampling.assign_folds(ts, 4, seed=0)
    cfg = modelkit.ModelConfig("forest", {"n_trees": 10}, True, seed=1)
    a, _ = ev.evaluate_fold(cfg, ts, folds, 0)
    _, test = folds.train_test(0)
    flipped = np.where(test, 1 - ts.labels, ts.labels)
    ts2 = sampling.TrainingSet(ts.ids, ts.x, ts.y, flipped, ts.weights, ts.covariates, ts.covariate_names)
    b, _ = ev.evaluate_fold(cfg, ts2, folds, 0)
    assert a.metrics.threshold == b.metrics.threshold


def test_failed_folds_are_recorded():
    ts = _toy_training(3)
    folds = sampling.assign_folds(ts, 5, seed=0)
    # maxent without a landscape fails in every fold
    rep = ev.run_cv([modelkit.ModelConfig("maxent"), modelkit.ModelConfig("maxent", use_weights=False)],
                    ts, folds, full_fit=False)
    assert all(fr.error for fr in rep.folds["maxent:weighted"])
    assert rep.summary["maxent:weighted"]["failed_folds"] == [0, 1, 2, 3, 4]
    assert rep.paired["maxent"]["weighted"] == []
