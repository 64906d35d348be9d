"""Bayesian spatial logistic regression with an intrinsic CAR random effect.

Sampler: Metropolis-within-Gibbs. Each regression coefficient gets a
random-walk Metropolis step against the weighted Bernoulli likelihood.
Spatial effects get single-site Metropolis steps; on a rook grid the two
checkerboard colour classes are conditionally independent, so each class
is updated in one vectorised pass. The ICAR precision has a conjugate
Gamma draw, and the effects are re-centred to sum zero after every sweep
(the intercept absorbs the shift, leaving the likelihood unchanged).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULTS = {
    "burn_in": 5000,
    "samples": 5000,
    "thin": 5,
    "beta_prior_sd": 10.0,
    "tau_shape": 1.0,
    "tau_rate": 0.01,
    "adapt_every": 50,
}
TARGET_ACCEPT = (0.2, 0.5)


class CarFitError(RuntimeError):
    pass


def resolve_config(cfg):
    out = dict(DEFAULTS)
    out.update(cfg or {})
    unknown = set(out) - set(DEFAULTS)
    if unknown:
        raise ValueError(f"unknown MCMC settings: {sorted(unknown)}")
    for key in ("burn_in", "samples", "thin", "adapt_every"):
        out[key] = int(out[key])
    if out["samples"] < 1 or out["thin"] < 1 or out["burn_in"] < 0:
        raise ValueError("samples and thin must be >= 1, burn_in >= 0")
    for key in ("beta_prior_sd", "tau_shape", "tau_rate"):
        out[key] = float(out[key])
        if not out[key] > 0:
            raise ValueError(f"{key} must be positive")
    return out


def icar_sum_sq(phi_grid):
    """Sum over rook edges of (phi_i - phi_j)^2."""
    return float(np.sum(np.diff(phi_grid, axis=0) ** 2) + np.sum(np.diff(phi_grid, axis=1) ** 2))


def icar_log_prior(phi_grid, tau):
    return -0.5 * tau * icar_sum_sq(phi_grid)


def tau_conditional(phi_grid, shape, rate):
    """Shape and rate of the Gamma full conditional of the ICAR precision."""
    ncells = phi_grid.size
    return shape + 0.5 * (ncells - 1), rate + 0.5 * icar_sum_sq(phi_grid)


def _neighbour_sum(phi):
    s = np.zeros_like(phi)
    s[1:, :] += phi[:-1, :]
    s[:-1, :] += phi[1:, :]
    s[:, 1:] += phi[:, :-1]
    s[:, :-1] += phi[:, 1:]
    return s


def _degree(nrows, ncols):
    return _neighbour_sum(np.ones((nrows, ncols)))


def _loglik_terms(y, eta):
    return y * eta - np.logaddexp(0.0, eta)


def _adapt(scale, rate):
    lo, hi = TARGET_ACCEPT
    if rate < lo:
        return scale * 0.7
    if rate > hi:
        return scale * 1.3
    return scale


@dataclass
class PosteriorSummary:
    names: list
    mean: np.ndarray
    var: np.ndarray
    lo95: np.ndarray
    hi95: np.ndarray
    phi_mean: np.ndarray
    phi_var: np.ndarray
    tau_mean: float
    acceptance: dict
    draws: np.ndarray = field(repr=False, default=None)

    def rows(self):
        return [(n, float(m), float(v), float(lo), float(hi))
                for n, m, v, lo, hi in zip(self.names, self.mean, self.var, self.lo95, self.hi95)]


def fit_car_mcmc(Z_std, y, weights, cells, nrows, ncols, cfg=None, seed=0, names=None):
    """Run the sampler; returns (parameter dict, PosteriorSummary).

    ``cells`` gives the flat grid cell of every record. Coefficient draws
    are kept every ``thin`` iterations after burn-in; spatial effects are
    summarised online (mean and n-1 variance) to avoid storing full draws.
    """
    cfg = resolve_config(cfg)
    Z = np.asarray(Z_std, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(weights, dtype=float)
    cells = np.asarray(cells, dtype=np.int64)
    n, p = Z.shape
    ncells = nrows * ncols
    if ncells < 2:
        raise CarFitError("the adjacency grid needs at least two cells")
    if np.any(cells < 0) or np.any(cells >= ncells):
        raise CarFitError("records fall outside the adjacency grid")
    if y.min() == y.max():
        raise CarFitError("both classes must be present")
    rng = np.random.default_rng(seed)

    X = np.hstack([np.ones((n, 1)), Z])
    q = p + 1
    beta = np.zeros(q)
    beta[0] = np.log((y @ w) / ((1 - y) @ w))
    phi = np.zeros((nrows, ncols))
    tau = 1.0
    eta = X @ beta
    ll = w * _loglik_terms(y, eta)
    if not np.all(np.isfinite(ll)):
        raise CarFitError(f"non-finite likelihood at start (max |x| = {np.abs(Z).max():.3g})")

    deg = _degree(nrows, ncols)
    colour = (np.add.outer(np.arange(nrows), np.arange(ncols)) % 2).astype(bool)
    masks = [~colour, colour]
    prior_var = cfg["beta_prior_sd"] ** 2

    beta_scale = np.full(q, 0.1)
    phi_scale = 1.0  # multiplies the conditional prior sd 1/sqrt(tau * degree)
    beta_acc = np.zeros(q)
    phi_acc = 0.0
    window = 0
    total_beta_acc = np.zeros(q)
    total_phi_acc = 0.0
    kept_iters = 0

    burn, nsamp, thin = cfg["burn_in"], cfg["samples"], cfg["thin"]
    nkeep = nsamp // thin
    draws = np.empty((nkeep, q))
    taus = np.empty(nkeep)
    phi_mean = np.zeros(ncells)
    phi_m2 = np.zeros(ncells)
    k = 0

    for it in range(burn + nsamp):
        # coefficients
        for j in range(q):
            delta = beta_scale[j] * rng.standard_normal()
            eta_new = eta + delta * X[:, j]
            ll_new = w * _loglik_terms(y, eta_new)
            log_r = (ll_new.sum() - ll.sum()
                     - ((beta[j] + delta) ** 2 - beta[j] ** 2) / (2 * prior_var))
            if np.log(rng.random()) < log_r:
                beta[j] += delta
                eta, ll = eta_new, ll_new
                beta_acc[j] += 1

        # spatial effects, one colour class at a time
        phi_flat = phi.reshape(-1)
        accepted = 0
        for mask in masks:
            sd = phi_scale / np.sqrt(tau * deg)
            prop = phi + np.where(mask, sd * rng.standard_normal(phi.shape), 0.0)
            m = _neighbour_sum(phi) / deg
            dprior = -0.5 * tau * deg * ((prop - m) ** 2 - (phi - m) ** 2)
            dphi = (prop - phi).reshape(-1)
            eta_new = eta + dphi[cells]
            ll_new = w * _loglik_terms(y, eta_new)
            dll = np.bincount(cells, weights=ll_new - ll, minlength=ncells).reshape(nrows, ncols)
            u = np.log(rng.random(phi.shape))
            acc = mask & (u < dprior + dll)
            phi = np.where(acc, prop, phi)
            acc_pts = acc.reshape(-1)[cells]
            eta = np.where(acc_pts, eta_new, eta)
            ll = np.where(acc_pts, ll_new, ll)
            accepted += int(acc.sum())
        phi_acc += accepted / ncells

        # precision
        shape, rate = tau_conditional(phi, cfg["tau_shape"], cfg["tau_rate"])
        tau = rng.gamma(shape, 1.0 / rate)

        # re-centre; intercept absorbs the shift
        shift = phi.mean()
        phi = phi - shift
        beta[0] += shift

        window += 1
        if it < burn and window == cfg["adapt_every"]:
            beta_scale = np.array([_adapt(s, a / window) for s, a in zip(beta_scale, beta_acc)])
            phi_scale = _adapt(phi_scale, phi_acc / window)
            beta_acc[:] = 0
            phi_acc = 0.0
            window = 0
        elif it == burn - 1:
            beta_acc[:] = 0
            phi_acc = 0.0
            window = 0

        if it >= burn:
            total_beta_acc += beta_acc
            total_phi_acc += phi_acc
            beta_acc[:] = 0
            phi_acc = 0.0
            kept_iters += 1
            if (it - burn + 1) % thin == 0 and k < nkeep:
                draws[k] = beta
                taus[k] = tau
                k += 1
                flat = phi.reshape(-1)
                d = flat - phi_mean
                phi_mean += d / k
                phi_m2 += d * (flat - phi_mean)
            if not np.isfinite(ll.sum()):
                raise CarFitError(f"non-finite likelihood at iteration {it}")

    draws = draws[:k]
    phi_mean = phi_mean - phi_mean.mean()
    phi_var = phi_m2 / (k - 1) if k > 1 else np.zeros(ncells)
    names = ["intercept"] + list(names if names is not None else [f"x{j}" for j in range(p)])
    lo, hi = np.percentile(draws, [2.5, 97.5], axis=0)
    acceptance = {"beta": (total_beta_acc / max(kept_iters, 1)).tolist(),
                  "phi": total_phi_acc / max(kept_iters, 1)}
    summary = PosteriorSummary(names, draws.mean(axis=0), draws.var(axis=0, ddof=1) if k > 1 else np.zeros(q),
                               lo, hi, phi_mean, phi_var, float(taus[:k].mean()), acceptance, draws)
    params = {
        "nrows": nrows,
        "ncols": ncols,
        "beta0": float(summary.mean[0]),
        "beta": summary.mean[1:].copy(),
        "phi": phi_mean,
        "phi_var": phi_var,
        "tau": summary.tau_mean,
        "mcmc": cfg,
        "acceptance": acceptance,
        "coefficients": summary.rows(),
    }
    return params, summary


def predict_spatial_logit(params, Z_std, cells):
    """Plug-in posterior-mean probability; cells < 0 get no spatial effect."""
    Z = np.atleast_2d(np.asarray(Z_std, dtype=float))
    cells = np.asarray(cells, dtype=np.int64)
    phi = np.asarray(params["phi"], float)
    eff = np.where(cells >= 0, phi[np.clip(cells, 0, None)], 0.0)
    eta = params["beta0"] + Z @ np.asarray(params["beta"], float) + eff
    return 1.0 / (1.0 + np.exp(-eta))


def sample_variance(chain, axis=0):
    """Unbiased (n - 1) variance of stored draws."""
    chain = np.asarray(chain, dtype=float)
    if chain.shape[axis] < 2:
        return np.zeros(np.delete(chain.shape, axis))
    return chain.var(axis=axis, ddof=1)


def posterior_variance_report(summary_or_var):
    """Median and quartiles of per-cell spatial-effect posterior variance."""
    v = summary_or_var.phi_var if isinstance(summary_or_var, PosteriorSummary) else summary_or_var
    v = np.asarray(v, dtype=float)
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return {"median": float(med), "q1": float(q1), "q3": float(q3),
            "min": float(v.min()), "max": float(v.max()), "mean": float(v.mean())}


def gelman_rubin(chains):
    """Potential scale reduction for an (m chains, n draws[, k]) array."""
    chains = np.asarray(chains, dtype=float)
    m, n = chains.shape[:2]
    means = chains.mean(axis=1)
    B = n * means.var(axis=0, ddof=1)
    W = chains.var(axis=1, ddof=1).mean(axis=0)
    var_hat = (n - 1) / n * W + B / n
    return np.sqrt(var_hat / W)


def to_json(params):
    out = dict(params)
    for key in ("beta", "phi", "phi_var"):
        out[key] = np.asarray(params[key]).tolist()
    out["coefficients"] = [list(r) for r in params["coefficients"]]
    return out


def from_json(d):
    out = dict(d)
    for key in ("beta", "phi", "phi_var"):
        out[key] = np.asarray(d[key], float)
    return out
