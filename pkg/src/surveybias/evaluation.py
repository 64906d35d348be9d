"""Discrimination, threshold and calibration metrics, the Wilcoxon signed-rank
test, and the cross-validation harness comparing weighted and unweighted fits."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import norm, rankdata

from . import modelkit
from .models.spatial_logit import posterior_variance_report

log = logging.getLogger(__name__)

N_BINS = 10
EXACT_MAX_N = 20


class SingleClassError(ValueError):
    pass


def _check_binary(scores, labels):
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel().astype(np.int64)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    npos = int(np.count_nonzero(y == 1))
    if npos == 0 or npos == len(y):
        raise SingleClassError("both classes must be present")
    return s, y


def auc(scores, labels):
    """Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(tie)."""
    s, y = _check_binary(scores, labels)
    ranks = rankdata(s)  # average ranks for ties
    n1 = int(y.sum())
    n0 = len(y) - n1
    u = ranks[y == 1].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


def threshold_candidates(scores):
    u = np.unique(np.asarray(scores, dtype=float))
    mids = (u[:-1] + u[1:]) / 2.0
    return np.unique(np.concatenate([[0.0], mids, [1.0]]))


def youden_threshold(scores, labels, return_j=False):
    """Cut-off maximizing sensitivity + specificity; lowest threshold on ties.

    Candidates are 0, 1 and the midpoints between consecutive distinct
    scores; a score at or above the cut-off is classed positive.
    """
    s, y = _check_binary(scores, labels)
    cands = threshold_candidates(s)
    order = np.argsort(s, kind="mergesort")
    ss = s[order]
    ys = y[order]
    npos = ys.sum()
    nneg = len(ys) - npos
    # number of records strictly below each candidate
    below = np.searchsorted(ss, cands, side="left")
    cum_pos = np.concatenate([[0], np.cumsum(ys)])
    pos_below = cum_pos[below]
    neg_below = below - pos_below
    sens = (npos - pos_below) / npos
    spec = neg_below / nneg
    j = sens + spec
    best = int(np.argmax(j))  # first max = lowest threshold
    thr = float(cands[best])
    if return_j:
        return thr, float(j[best] - 1.0)
    return thr


@dataclass
class MetricsReport:
    auc: float
    threshold: float
    accuracy: float
    sensitivity: float
    specificity: float
    tss: float
    kappa: float
    confusion: tuple  # (tp, fp, fn, tn)

    def to_dict(self):
        d = asdict(self)
        d["confusion"] = list(self.confusion)
        return d


def cohens_kappa(confusion):
    tp, fp, fn, tn = (float(v) for v in confusion)
    n = tp + fp + fn + tn
    if n <= 0:
        raise ValueError("empty confusion matrix")
    po = (tp + tn) / n
    pe = ((tp + fp) * (tp + fn) + (fn + tn) * (fp + tn)) / (n * n)
    if pe == 1.0:
        return 0.0
    return (po - pe) / (1.0 - pe)


def _rate(num, den):
    return num / den if den else 0.0


def metrics_from_confusion(confusion, auc_value=float("nan"), threshold=float("nan")):
    tp, fp, fn, tn = (int(v) for v in confusion)
    n = tp + fp + fn + tn
    sens = _rate(tp, tp + fn)
    spec = _rate(tn, tn + fp)
    return MetricsReport(auc_value, threshold, _rate(tp + tn, n), sens, spec, sens + spec - 1.0,
                         cohens_kappa((tp, fp, fn, tn)), (tp, fp, fn, tn))


def confusion_counts(scores, labels, threshold):
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(np.int64)
    pred = s >= threshold
    pos = y == 1
    return (int(np.count_nonzero(pred & pos)), int(np.count_nonzero(pred & ~pos)),
            int(np.count_nonzero(~pred & pos)), int(np.count_nonzero(~pred & ~pos)))


def classification_metrics(scores, labels, threshold):
    """Full report at ``threshold``; AUC is NaN when only one class is present."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    try:
        a = auc(scores, labels)
    except SingleClassError:
        a = float("nan")
    return metrics_from_confusion(confusion_counts(scores, labels, threshold), a, float(threshold))


def roc_curve(scores, labels):
    """(fpr, tpr, thresholds) at every distinct score, from the top down."""
    s, y = _check_binary(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    tpr = np.r_[0.0, tp / tp[-1]]
    fpr = np.r_[0.0, fp / fp[-1]]
    return fpr, tpr, np.r_[np.inf, s[last]]


@dataclass
class CalibrationCurve:
    edges: np.ndarray
    mean_predicted: np.ndarray
    observed: np.ndarray
    count: np.ndarray
    ece: float

    def rows(self):
        return [(float(self.edges[i]), float(self.edges[i + 1]), int(self.count[i]),
                 float(self.mean_predicted[i]), float(self.observed[i])) for i in range(len(self.count))]


def calibration_curve(scores, labels, n_bins=N_BINS):
    """Equal-width reliability bins over [0, 1]; empty bins carry NaN and count 0."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=float)
    if len(s) < n_bins:
        raise ValueError(f"need at least {n_bins} scores")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    b = np.clip(np.floor(s * n_bins).astype(np.int64), 0, n_bins - 1)
    count = np.bincount(b, minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        mp = np.bincount(b, weights=s, minlength=n_bins) / count
        obs = np.bincount(b, weights=y, minlength=n_bins) / count
    filled = count > 0
    ece = float(np.sum(count[filled] / len(s) * np.abs(obs[filled] - mp[filled])))
    return CalibrationCurve(edges, mp, obs, count, ece)


@dataclass
class WilcoxonResult:
    n: int
    W: float
    p_two_sided: float
    method: str

    def to_dict(self):
        return asdict(self)


def signed_rank_null(ranks):
    """Exact null distribution of W over all 2^n sign assignments.

    Ranks may be half-integers (average ranks); they are doubled so the
    counting runs on integers. Returns (support of W, counts); counts sum to
    2^n.
    """
    r2 = np.rint(2 * np.asarray(ranks, dtype=float)).astype(np.int64)
    total = int(r2.sum())
    counts = np.zeros(total + 1, dtype=object)
    counts[0] = 1
    for r in r2:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    return np.arange(total + 1) / 2.0, counts


def wilcoxon_signed_rank(a, b):
    """Paired two-sided signed-rank test of ``a - b``.

    Zero differences are dropped. With at most 20 pairs the p-value is
    exact; otherwise a normal approximation with tie and continuity
    corrections is used.
    """
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if d.ndim != 1:
        raise ValueError("expected 1-d samples")
    d = d[d != 0]
    n = len(d)
    if n == 0:
        raise ValueError("all differences zero")
    if n < 5:
        raise ValueError(f"need at least 5 non-zero differences, got {n}")
    ranks = rankdata(np.abs(d))
    W = float(ranks[d > 0].sum())
    if n <= EXACT_MAX_N:
        support, counts = signed_rank_null(ranks)
        total = 2 ** n
        upper = sum(int(c) for c in counts[support >= W])
        lower = sum(int(c) for c in counts[support <= W])
        p = min(1.0, 2.0 * min(upper, lower) / total)
        return WilcoxonResult(n, W, p, "exact")
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts ** 3 - tie_counts) / 48.0
    z = (abs(W - mean) - 0.5) / math.sqrt(var)
    p = min(1.0, 2.0 * norm.sf(max(z, 0.0)))
    return WilcoxonResult(n, W, float(p), "normal")


# --------------------------------------------------------------------------- harness


@dataclass
class FoldResult:
    config: str
    fold: int
    metrics: MetricsReport = None
    external: MetricsReport = None
    predictions: list = field(default_factory=list)  # (id, label, score, weight)
    error: str = None


@dataclass
class ComparisonReport:
    k: int
    seed: int
    configs: list
    folds: dict  # label -> list[FoldResult]
    summary: dict
    paired: dict  # kind -> {"weighted": [...], "unweighted": [...], "folds": [...], "wilcoxon": ...}
    calibration: dict = field(default_factory=dict)
    importance: dict = field(default_factory=dict)
    posterior_variance: dict = field(default_factory=dict)
    external: dict = field(default_factory=dict)
    roc: dict = field(default_factory=dict)

    def to_dict(self):
        folds = {}
        for label, frs in self.folds.items():
            folds[label] = [{"fold": fr.fold, "error": fr.error,
                             "metrics": fr.metrics.to_dict() if fr.metrics else None,
                             "external": fr.external.to_dict() if fr.external else None}
                            for fr in frs]
        return {"k": self.k, "seed": self.seed, "configs": self.configs, "folds": folds,
                "summary": self.summary, "paired": self.paired, "calibration": self.calibration,
                "importance": self.importance, "posterior_variance": self.posterior_variance,
                "external": self.external, "roc": self.roc}


METRIC_KEYS = ("auc", "accuracy", "sensitivity", "specificity", "tss", "kappa")


def _aggregate(reports):
    out = {}
    for key in METRIC_KEYS:
        vals = np.array([getattr(r, key) for r in reports if r is not None], dtype=float)
        vals = vals[np.isfinite(vals)]
        if len(vals):
            out[key] = {"mean": float(vals.mean()),
                        "sd": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0,
                        "median": float(np.median(vals)), "n": int(len(vals))}
    return out


def evaluate_fold(model_cfg, ts, folds, fold, landscape=None, external=None):
    """Train on every fold but ``fold``; threshold from training predictions only."""
    train_mask, test_mask = folds.train_test(fold)
    train_ts = ts.subset(train_mask)
    test_ts = ts.subset(test_mask)
    model = modelkit.train(model_cfg, train_ts, landscape)
    thr = youden_threshold(modelkit.predict(model, train_ts), train_ts.labels)
    # test labels are first touched here, after the threshold is fixed
    scores = modelkit.predict(model, test_ts)
    fr = FoldResult(model_cfg.label, fold, classification_metrics(scores, test_ts.labels, thr))
    fr.predictions = [(int(i), int(l), float(s), float(w))
                      for i, l, s, w in zip(test_ts.ids, test_ts.labels, scores, test_ts.weights)]
    if external is not None:
        ext_scores = modelkit.predict(model, external)
        fr.external = classification_metrics(ext_scores, external.labels, thr)
    return fr, model


def run_cv(configs, ts, folds, landscape=None, external=None, full_fit=True):
    """Cross-validate every config on the same folds and pair weighted/unweighted runs.

    ``external`` is an optional independent test set (for synthetic worlds,
    the uniform-truth sample) scored by each fold model and, when
    ``full_fit`` is set, by a model trained on all of ``ts``.
    """
    results = {}
    full_models = {}
    for cfg in configs:
        frs = []
        for f in range(folds.k):
            try:
                fr, _ = evaluate_fold(cfg, ts, folds, f, landscape, external)
            except Exception as exc:  # recorded per fold; pairing logic decides what survives
                log.warning("%s fold %d failed: %s", cfg.label, f, exc)
                fr = FoldResult(cfg.label, f, error=f"{type(exc).__name__}: {exc}")
            frs.append(fr)
        results[cfg.label] = frs
        if full_fit:
            try:
                full_models[cfg.label] = modelkit.train(cfg, ts, landscape)
            except Exception as exc:
                log.warning("%s full fit failed: %s", cfg.label, exc)

    summary = {label: {"cv": _aggregate([fr.metrics for fr in frs]),
                       "external_cv": _aggregate([fr.external for fr in frs]),
                       "failed_folds": [fr.fold for fr in frs if fr.error]}
               for label, frs in results.items()}

    paired = {}
    kinds = sorted({c.kind for c in configs})
    for kind in kinds:
        wl, ul = f"{kind}:weighted", f"{kind}:unweighted"
        if wl not in results or ul not in results:
            continue
        pairs = [(fw.fold, fw.metrics.auc, fu.metrics.auc)
                 for fw, fu in zip(results[wl], results[ul])
                 if fw.metrics is not None and fu.metrics is not None
                 and np.isfinite(fw.metrics.auc) and np.isfinite(fu.metrics.auc)]
        entry = {"folds": [p[0] for p in pairs], "weighted": [p[1] for p in pairs],
                 "unweighted": [p[2] for p in pairs], "wilcoxon": None}
        try:
            entry["wilcoxon"] = wilcoxon_signed_rank(entry["weighted"], entry["unweighted"]).to_dict()
        except ValueError as exc:
            entry["wilcoxon_error"] = str(exc)
        paired[kind] = entry

    report = ComparisonReport(folds.k, folds.seed, [c.to_dict() for c in configs], results,
                              summary, paired)
    report.full_models = full_models
    if external is not None:
        for label, model in full_models.items():
            scores = modelkit.predict(model, external)
            thr = youden_threshold(modelkit.predict(model, ts), ts.labels)
            m = classification_metrics(scores, external.labels, thr)
            cal = calibration_curve(scores, external.labels)
            report.external[label] = {"metrics": m.to_dict(), "ece": cal.ece}
            report.calibration[label] = {"rows": cal.rows(), "ece": cal.ece}
            fpr, tpr, _ = roc_curve(scores, external.labels)
            report.roc[label] = {"fpr": fpr.tolist(), "tpr": tpr.tolist(), "auc": m.auc}
    for label, model in full_models.items():
        if model.kind == "forest":
            report.importance[label] = dict(zip(model.covariate_names,
                                                map(float, model.parameters["importance"])))
        if model.kind == "spatial_logit":
            report.posterior_variance[label] = posterior_variance_report(model.parameters["phi_var"])
    return report
