"""Maximum-entropy suitability model over grid cells.

The fitted distribution is the Gibbs form ``p(x) = q(x) exp(lambda . f(x)) / Z``
over every usable cell, where ``q`` is the survey-effort bias grid and
``f`` stacks linear and quadratic features of the standardized covariates.
Coefficients maximize the weighted mean presence log-likelihood minus an L1
penalty, one coordinate at a time.
"""
from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

DEFAULT_RHO0 = 1.0
DEFAULT_BACKGROUND_FLOOR = 0.01
MAX_SWEEPS = 20000
TOL = 1e-7


class MaxentFitError(RuntimeError):
    pass


def feature_names(covariate_names, quadratic=True):
    names = [f"{c}" for c in covariate_names]
    if quadratic:
        names += [f"{c}^2" for c in covariate_names]
    return names


def features(Z_std, quadratic=True):
    Z_std = np.atleast_2d(np.asarray(Z_std, dtype=float))
    if quadratic:
        return np.hstack([Z_std, Z_std ** 2])
    return Z_std


def bias_measure(effort_values, floor=DEFAULT_BACKGROUND_FLOOR):
    """Background measure q proportional to effort, zero cells floored."""
    e = np.asarray(effort_values, dtype=float)
    positive = e[e > 0]
    if positive.size == 0:
        raise ValueError("degenerate effort layer: total effort is zero")
    q = np.where(e > 0, e, floor * positive.min())
    return q / q.sum()


def _log_gibbs(F, log_q, lam):
    s = log_q + F @ lam if F.shape[1] else log_q.copy()
    return s - logsumexp(s)


def soft_threshold(v, t):
    return np.sign(v) * max(abs(v) - t, 0.0)


def objective(logp_presence_cells, w, lam, rho):
    return float(np.sum(w * logp_presence_cells) / np.sum(w) - np.sum(rho * np.abs(lam)))


def fit_maxent(F_cells, log_q, presence_cells, weights, rho0=DEFAULT_RHO0, record=False):
    """Fit coefficients for features ``F_cells`` (ncells x m).

    ``presence_cells`` index rows of ``F_cells``. Each coordinate takes a
    Newton step on the smooth part followed by soft-thresholding, halved
    until the penalized objective does not decrease. Stops when no
    coefficient moves by more than 1e-7 in a sweep.
    """
    F = np.asarray(F_cells, dtype=float)
    ncells, m = F.shape
    cells = np.asarray(presence_cells, dtype=np.int64)
    w = np.asarray(weights, dtype=float)
    if len(cells) < 5:
        raise ValueError("MaxEnt needs at least 5 presence points")
    Fp = F[cells]
    emp = (w @ Fp) / w.sum() if m else np.zeros(0)
    sd = Fp.std(axis=0) if m else np.zeros(0)
    rho = rho0 * sd / np.sqrt(len(cells))
    lam = np.zeros(m)

    logp = _log_gibbs(F, log_q, lam)
    if not np.all(np.isfinite(logp)):
        raise MaxentFitError("non-finite normalizer")
    obj = objective(logp[cells], w, lam, rho)
    history = {"objective": [obj], "norm_error": [abs(np.exp(logp).sum() - 1.0)]}
    sweeps = 0
    for sweeps in range(1, MAX_SWEEPS + 1):
        max_change = 0.0
        for j in range(m):
            p = np.exp(logp)
            mean = p @ F[:, j]
            var = p @ (F[:, j] - mean) ** 2
            g = emp[j] - mean
            h = max(var, 1e-12)
            target = soft_threshold(lam[j] + g / h, rho[j] / h)
            step = target - lam[j]
            old = lam[j]
            for _ in range(60):
                lam[j] = old + step
                new_logp = _log_gibbs(F, log_q, lam)
                new_obj = objective(new_logp[cells], w, lam, rho)
                if np.isfinite(new_obj) and new_obj >= obj:
                    break
                step *= 0.5
            else:
                lam[j] = old
                continue
            logp, obj = new_logp, new_obj
            max_change = max(max_change, abs(lam[j] - old))
            if record:
                history["objective"].append(obj)
                history["norm_error"].append(abs(np.exp(logp).sum() - 1.0))
        if max_change < TOL:
            break
    logZ = float(logsumexp(log_q + (F @ lam if m else 0.0)))
    out = {"lambda": lam, "rho": rho, "logZ": logZ, "sweeps": sweeps,
           "objective": obj}
    if record:
        out["history"] = history
    return out


def gibbs_probabilities(F_cells, log_q, lam):
    return np.exp(_log_gibbs(np.asarray(F_cells, float), np.asarray(log_q, float), np.asarray(lam, float)))


def suitability(F_cells, lam):
    """Bias-free Gibbs distribution exp(lambda . f) / sum over cells."""
    F = np.asarray(F_cells, float)
    return np.exp(_log_gibbs(F, np.zeros(F.shape[0]), np.asarray(lam, float)))


def logistic_offset(F_cells, lam):
    """Offset H - log Z0 of the logistic transform of the bias-free distribution.

    With raw = exp(lambda . f) / Z0 over cells and H its entropy, the
    output exp(H) raw / (1 + exp(H) raw) equals sigmoid(lambda . f + offset).
    """
    F = np.asarray(F_cells, float)
    s = F @ np.asarray(lam, float)
    logz0 = logsumexp(s)
    logp = s - logz0
    H = float(-np.sum(np.exp(logp) * logp))
    return H - float(logz0)


def logistic_output(F_points, lam, offset):
    s = np.asarray(F_points, float) @ np.asarray(lam, float)
    return 1.0 / (1.0 + np.exp(-(s + offset)))
