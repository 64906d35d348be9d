"""Logistic GAM with penalized cubic B-spline smooths.

Each standardized covariate gets K cubic B-spline basis functions on
quantile knots, a second-difference penalty, and a sum-to-zero constraint
over the training points. One shared smoothing parameter is picked from a
grid by generalized cross-validation, each candidate fitted by penalized
IRLS.
"""
from __future__ import annotations

import numpy as np
from scipy import linalg
from scipy.interpolate import BSpline

DEFAULT_K = 10
DEFAULT_LAMBDAS = tuple(np.logspace(-3, 3, 13))
MARGIN = 0.05
DEGREE = 3
MAX_ITER = 100
TOL = 1e-8


class GamFitError(RuntimeError):
    """IRLS failed to converge or the penalized system is singular."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


def make_knots(x, K):
    """Knot vector for K cubic basis functions over the padded data range."""
    if K < 4:
        raise ValueError("K must be >= 4")
    lo, hi = float(np.min(x)), float(np.max(x))
    span = hi - lo
    if not span > 0:
        raise ValueError("covariate is constant")
    lo, hi = lo - MARGIN * span, hi + MARGIN * span
    n_inner = K - DEGREE - 1
    inner = np.quantile(x, np.linspace(0, 1, n_inner + 2)[1:-1]) if n_inner > 0 else np.array([])
    return np.concatenate([np.full(DEGREE + 1, lo), inner, np.full(DEGREE + 1, hi)])


def basis(knots, x):
    """Dense B-spline design matrix; ``x`` must lie within the knot range."""
    x = np.asarray(x, dtype=float)
    return BSpline.design_matrix(x, knots, DEGREE, extrapolate=False).toarray()


def clamp(knots, x):
    lo, hi = knots[0], knots[-1]
    x = np.asarray(x, dtype=float)
    return np.clip(x, lo, hi), (x < lo) | (x > hi)


def diff_penalty(K, order=2):
    D = np.diff(np.eye(K), n=order, axis=0)
    return D.T @ D


def constraint_basis(col_means):
    """Orthonormal basis Z (K x K-1) of the null space of ``col_means``."""
    q, _ = np.linalg.qr(col_means.reshape(-1, 1), mode="complete")
    return q[:, 1:]


def _loglik_terms(y, eta):
    return y * eta - np.logaddexp(0.0, eta)


def deviance(y, eta, w):
    return float(-2.0 * np.sum(w * _loglik_terms(y, eta)))


def pirls(X, y, w, S, beta0=None):
    """Penalized IRLS for logistic regression.

    Returns (coefficients, eta, deviance, edf, iterations, trace). The
    working weights are ``w * mu * (1 - mu)``; a step that increases the
    penalized deviance is halved until it does not.
    """
    n, q = X.shape
    beta = np.zeros(q) if beta0 is None else beta0.copy()
    eta = X @ beta

    def pen_dev(b, e):
        return deviance(y, e, w) + float(b @ S @ b)

    pd = pen_dev(beta, eta)
    dev_old = deviance(y, eta, w)
    trace = []
    for it in range(1, MAX_ITER + 1):
        mu = 1.0 / (1.0 + np.exp(-eta))
        v = np.clip(mu * (1.0 - mu), 1e-10, None)
        W = w * v
        z = eta + (y - mu) / v
        A = X.T @ (W[:, None] * X) + S
        try:
            c, low = linalg.cho_factor(A)
        except linalg.LinAlgError:
            raise GamFitError("singular penalized system", trace) from None
        new = linalg.cho_solve((c, low), X.T @ (W * z))
        step = new - beta
        for _ in range(30):
            cand = beta + step
            e = X @ cand
            cand_pd = pen_dev(cand, e)
            if np.isfinite(cand_pd) and cand_pd <= pd * (1 + 1e-12) + 1e-12:
                break
            step *= 0.5
        else:
            raise GamFitError("IRLS step halving failed", trace)
        beta, eta, pd = cand, e, cand_pd
        dev = deviance(y, eta, w)
        trace.append(dev)
        if not np.isfinite(dev):
            raise GamFitError("IRLS diverged (non-finite deviance)", trace)
        if abs(dev - dev_old) / (abs(dev) + 0.1) < TOL:
            break
        dev_old = dev
    mu = 1.0 / (1.0 + np.exp(-eta))
    W = w * np.clip(mu * (1.0 - mu), 1e-10, None)
    XtWX = X.T @ (W[:, None] * X)
    A = XtWX + S
    edf = float(np.trace(linalg.solve(A, XtWX, assume_a="pos")))
    return beta, eta, deviance(y, eta, w), edf, it, trace


def gcv_score(n, dev, edf):
    return n * dev / (n - edf) ** 2


def _design(Z_std, smooths):
    cols = [np.ones((Z_std.shape[0], 1))]
    for j, s in enumerate(smooths):
        B = basis(s["knots"], clamp(s["knots"], Z_std[:, j])[0])
        cols.append(B @ s["Z"])
    return np.hstack(cols)


def fit_gam(Z_std, y, weights, K=DEFAULT_K, lambdas=DEFAULT_LAMBDAS):
    """Fit on standardized covariates. Returns a parameter dict.

    ``gcv`` in the result lists (lambda, deviance, edf, score) for every
    grid value; the selected lambda is the first argmin.
    """
    Z_std = np.asarray(Z_std, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(weights, dtype=float)
    n, p = Z_std.shape
    npos = int(y.sum())
    if npos < 10 or n - npos < 10:
        raise ValueError("GAM needs at least 10 points per class")
    lambdas = [float(v) for v in lambdas]
    if any(not v >= 0 for v in lambdas) or not lambdas:
        raise ValueError("lambda grid must be non-empty and non-negative")

    smooths = []
    for j in range(p):
        knots = make_knots(Z_std[:, j], K)
        B = basis(knots, Z_std[:, j])
        Zc = constraint_basis(B.mean(axis=0))
        smooths.append({"knots": knots, "Z": Zc})
    X = _design(Z_std, smooths)
    Sblocks = [diff_penalty(K) for _ in range(p)]

    results = []
    beta_prev = None
    for lam in lambdas:
        S = linalg.block_diag(np.zeros((1, 1)), *[lam * s["Z"].T @ Sb @ s["Z"]
                                                  for s, Sb in zip(smooths, Sblocks)])
        beta, eta, dev, edf, iters, trace = pirls(X, y, w, S, beta_prev)
        beta_prev = beta
        results.append({"lambda": lam, "deviance": dev, "edf": edf,
                        "gcv": gcv_score(n, dev, edf), "beta": beta, "iterations": iters})
    best = min(range(len(results)), key=lambda i: (results[i]["gcv"], i))
    sel = results[best]
    beta = sel["beta"]
    coefs = []
    pos = 1
    for s in smooths:
        g = beta[pos:pos + K - 1]
        coefs.append(s["Z"] @ g)
        pos += K - 1
    return {
        "K": K,
        "intercept": float(beta[0]),
        "knots": [s["knots"] for s in smooths],
        "coefficients": coefs,
        "lambda": sel["lambda"],
        "edf": sel["edf"],
        "deviance": sel["deviance"],
        "gcv": [{k: r[k] for k in ("lambda", "deviance", "edf", "gcv", "iterations")} for r in results],
    }


def smooth_values(params, j, z):
    """Partial log-odds of smooth ``j`` at standardized values ``z``.

    Returns (values, clamped) where ``clamped`` flags inputs outside the
    basis range that were moved to the boundary.
    """
    if not 0 <= j < len(params["knots"]):
        raise IndexError(f"no smooth with index {j}")
    knots = np.asarray(params["knots"][j], float)
    zc, flag = clamp(knots, np.atleast_1d(z))
    return basis(knots, zc) @ np.asarray(params["coefficients"][j], float), flag


def linear_predictor(params, Z_std):
    Z_std = np.atleast_2d(np.asarray(Z_std, dtype=float))
    eta = np.full(Z_std.shape[0], params["intercept"])
    for j in range(Z_std.shape[1]):
        eta = eta + smooth_values(params, j, Z_std[:, j])[0]
    return eta


def predict_gam(params, Z_std):
    return 1.0 / (1.0 + np.exp(-linear_predictor(params, Z_std)))


def to_json(params):
    out = dict(params)
    out["knots"] = [np.asarray(k).tolist() for k in params["knots"]]
    out["coefficients"] = [np.asarray(c).tolist() for c in params["coefficients"]]
    return out


def from_json(d):
    out = dict(d)
    out["knots"] = [np.asarray(k, float) for k in d["knots"]]
    out["coefficients"] = [np.asarray(c, float) for c in d["coefficients"]]
    return out
