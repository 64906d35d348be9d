"""Weighted random forest: bagged CART trees with weighted Gini splits.

Each tree is grown on a bootstrap sample drawn with probability
proportional to the record weights; inside the tree, node impurity uses
the bootstrap multiplicity times the record weight. Leaves store the
weighted fraction of positives, and the forest averages leaf values.
"""
from __future__ import annotations

import math

import numba
import numpy as np

DEFAULTS = {"n_trees": 500, "mtry": None, "min_node": 1, "max_depth": None, "bootstrap": True}


def gini(weight_pos, weight_total):
    """Weighted Gini impurity 1 - sum_c q_c^2 of a node."""
    if weight_total <= 0:
        return 0.0
    q = weight_pos / weight_total
    return 1.0 - (q * q + (1.0 - q) * (1.0 - q))


@numba.njit(cache=True)
def _gini(wp, wt):
    if wt <= 0.0:
        return 0.0
    q = wp / wt
    return 1.0 - (q * q + (1.0 - q) * (1.0 - q))


@numba.njit(cache=True)
def _grow_tree(X, y, w, counts, keys, mtry, min_node, max_depth):
    """Grow one tree on records with positive ``counts``.

    ``w`` already holds count * weight. ``keys[t]`` ranks the features for
    the t-th node processed; the ``mtry`` smallest keys are tried.
    Returns node arrays (feature, threshold, left, right, value, gain).
    """
    n, p = X.shape
    idx = np.empty(n, dtype=np.int64)
    m = 0
    for i in range(n):
        if counts[i] > 0:
            idx[m] = i
            m += 1
    idx = idx[:m]

    cap = 2 * m + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    gain = np.zeros(cap)

    # stack of (node id, start, stop, depth)
    st_node = np.empty(cap, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_stop = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    top = 0
    st_node[0] = 0
    st_start[0] = 0
    st_stop[0] = m
    st_depth[0] = 0
    top = 1
    nnodes = 1
    processed = 0
    vals = np.empty(m)
    order = np.empty(m, dtype=np.int64)
    tmp = np.empty(m, dtype=np.int64)

    while top > 0:
        top -= 1
        node = st_node[top]
        start = st_start[top]
        stop = st_stop[top]
        depth = st_depth[top]

        wt = 0.0
        wp = 0.0
        cnt = 0
        for a in range(start, stop):
            r = idx[a]
            wt += w[r]
            if y[r] == 1:
                wp += w[r]
            cnt += counts[r]
        value[node] = wp / wt if wt > 0.0 else 0.0
        imp = _gini(wp, wt)

        if imp <= 0.0 or cnt <= min_node or stop - start < 2 or (max_depth >= 0 and depth >= max_depth):
            continue

        feats = np.argsort(keys[processed % keys.shape[0]])[:mtry]
        feats = np.sort(feats)
        processed += 1

        best_score = imp
        best_f = -1
        best_thr = 0.0
        nn = stop - start
        for fi in range(feats.shape[0]):
            f = feats[fi]
            for a in range(nn):
                vals[a] = X[idx[start + a], f]
            o = np.argsort(vals[:nn], kind="mergesort")
            lw = 0.0
            lp = 0.0
            for a in range(nn - 1):
                r = idx[start + o[a]]
                lw += w[r]
                if y[r] == 1:
                    lp += w[r]
                v0 = vals[o[a]]
                v1 = vals[o[a + 1]]
                if v1 <= v0:
                    continue
                rw = wt - lw
                rp = wp - lp
                score = (lw / wt) * _gini(lp, lw) + (rw / wt) * _gini(rp, rw)
                thr = 0.5 * (v0 + v1)
                # strict: ties keep the lower feature index, then lower threshold
                if score < best_score:
                    best_score = score
                    best_f = f
                    best_thr = thr

        if best_f < 0 or imp - best_score <= 1e-12:
            continue

        # partition idx[start:stop] on best split
        nl = 0
        nr = 0
        for a in range(start, stop):
            r = idx[a]
            if X[r, best_f] <= best_thr:
                order[nl] = r
                nl += 1
            else:
                tmp[nr] = r
                nr += 1
        for a in range(nl):
            idx[start + a] = order[a]
        for a in range(nr):
            idx[start + nl + a] = tmp[a]

        feature[node] = best_f
        threshold[node] = best_thr
        gain[node] = wt * (imp - best_score)
        lnode = nnodes
        rnode = nnodes + 1
        nnodes += 2
        left[node] = lnode
        right[node] = rnode
        # push right first so the left subtree is numbered depth-first
        st_node[top] = rnode
        st_start[top] = start + nl
        st_stop[top] = stop
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = lnode
        st_start[top] = start
        st_stop[top] = start + nl
        st_depth[top] = depth + 1
        top += 1

    return (feature[:nnodes], threshold[:nnodes], left[:nnodes], right[:nnodes],
            value[:nnodes], gain[:nnodes])


@numba.njit(cache=True)
def _predict_tree(feature, threshold, left, right, value, X, out):
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]


@numba.njit(cache=True)
def _leaf_values(offsets, feature, threshold, left, right, value, X):
    """(n, B) matrix of the leaf value each point reaches in each tree."""
    n = X.shape[0]
    ntrees = offsets.shape[0] - 1
    out = np.empty((n, ntrees))
    for b in range(ntrees):
        o = offsets[b]
        for i in range(n):
            node = 0
            while feature[o + node] >= 0:
                if X[i, feature[o + node]] <= threshold[o + node]:
                    node = left[o + node]
                else:
                    node = right[o + node]
            out[i, b] = value[o + node]
    return out


def resolve_params(params, p):
    out = dict(DEFAULTS)
    out.update(params or {})
    unknown = set(out) - set(DEFAULTS)
    if unknown:
        raise ValueError(f"unknown forest hyperparameters: {sorted(unknown)}")
    if out["mtry"] is None:
        out["mtry"] = max(1, int(math.floor(math.sqrt(p))))
    if int(out["n_trees"]) < 1:
        raise ValueError("n_trees must be >= 1")
    if not 1 <= int(out["mtry"]) <= p:
        raise ValueError(f"mtry must be in [1, {p}]")
    if int(out["min_node"]) < 1:
        raise ValueError("min_node must be >= 1")
    out["n_trees"] = int(out["n_trees"])
    out["mtry"] = int(out["mtry"])
    out["min_node"] = int(out["min_node"])
    out["bootstrap"] = bool(out["bootstrap"])
    return out


def weighted_bootstrap(rng, weights):
    """Bootstrap multiplicities with selection probability proportional to weight.

    Draws by inverse CDF so that equal weights reproduce the plain
    bootstrap exactly.
    """
    n = len(weights)
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    u = rng.random(n)
    picks = np.minimum(np.searchsorted(cdf, u, side="right"), n - 1)
    return np.bincount(picks, minlength=n)


def fit_forest(X, y, weights, params, seed):
    """Fit the forest on standardized covariates; returns a parameter dict."""
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    w = np.asarray(weights, dtype=float)
    n, p = X.shape
    hp = resolve_params(params, p)
    max_depth = -1 if hp["max_depth"] is None else int(hp["max_depth"])
    trees = []
    importance = np.zeros(p)
    for b in range(hp["n_trees"]):
        rng = np.random.default_rng(seed + b)
        if hp["bootstrap"]:
            counts = weighted_bootstrap(rng, w)
        else:
            counts = np.ones(n, dtype=np.int64)
        keys = rng.random((2 * n + 1, p))
        feat, thr, lft, rgt, val, gain = _grow_tree(
            X, y, counts * w, counts.astype(np.int64), keys, hp["mtry"], hp["min_node"], max_depth)
        trees.append({"feature": feat, "threshold": thr, "left": lft, "right": rgt, "value": val})
        root_w = float(np.sum(counts * w))
        split = feat >= 0
        if root_w > 0 and split.any():
            importance += np.bincount(feat[split], weights=gain[split], minlength=p) / root_w
    total = importance.sum()
    importance = importance / total if total > 0 else np.full(p, 1.0 / p)
    return {"hyperparameters": hp, "trees": trees, "importance": importance}


def _stack(trees):
    sizes = [len(t["feature"]) for t in trees]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    cat = {k: np.concatenate([np.asarray(t[k], dtype=dt) for t in trees]) for k, dt in
           (("feature", np.int64), ("threshold", float), ("left", np.int64), ("right", np.int64),
            ("value", float))}
    return offsets, cat


def predict_forest(params, X):
    """Mean of the per-tree leaf probabilities."""
    X = np.ascontiguousarray(X, dtype=float)
    if "_stacked" not in params:
        params["_stacked"] = _stack(params["trees"])
    offsets, cat = params["_stacked"]
    leaves = _leaf_values(offsets, cat["feature"], cat["threshold"], cat["left"], cat["right"],
                          cat["value"], X)
    # correctly rounded sums make the result independent of tree order
    ntrees = leaves.shape[1]
    return np.array([math.fsum(row) / ntrees for row in leaves])


def predict_tree(tree, X):
    X = np.ascontiguousarray(X, dtype=float)
    out = np.empty(X.shape[0])
    _predict_tree(np.asarray(tree["feature"], np.int64), np.asarray(tree["threshold"], float),
                  np.asarray(tree["left"], np.int64), np.asarray(tree["right"], np.int64),
                  np.asarray(tree["value"], float), X, out)
    return out


def feature_importance(params):
    return np.asarray(params["importance"], dtype=float)


def to_json(params):
    return {
        "hyperparameters": params["hyperparameters"],
        "importance": [float(v) for v in params["importance"]],
        "trees": [{"feature": t["feature"].tolist(), "threshold": t["threshold"].tolist(),
                   "left": t["left"].tolist(), "right": t["right"].tolist(),
                   "value": t["value"].tolist()} for t in params["trees"]],
    }


def from_json(d):
    trees = [{"feature": np.asarray(t["feature"], np.int64),
              "threshold": np.asarray(t["threshold"], float),
              "left": np.asarray(t["left"], np.int64), "right": np.asarray(t["right"], np.int64),
              "value": np.asarray(t["value"], float)} for t in d["trees"]]
    return {"hyperparameters": dict(d["hyperparameters"]), "trees": trees,
            "importance": np.asarray(d["importance"], float)}
