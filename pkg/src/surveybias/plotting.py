"""Figure rendering for maps and comparison reports.

Figures are written as SVG with a fixed hash salt and no date metadata so
repeated runs give identical files.
"""
from __future__ import annotations

import io
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import LinearSegmentedColormap  # noqa: E402

from .raster import atomic_write_text  # noqa: E402

# Map colour ramp, low -> high.
RAMP_STOPS = ("#0b0b3b", "#3b1f7a", "#8c2981", "#de4968", "#fe9f6d", "#fcfdbf")
RAMP = LinearSegmentedColormap.from_list("surveybias", RAMP_STOPS)
WEIGHTED_COLOR = "#1b7837"
UNWEIGHTED_COLOR = "#762a83"

plt.rcParams.update({
    "svg.hashsalt": "surveybias",
    "svg.fonttype": "none",
    "font.size": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
})


def save_svg(fig, path):
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None}, bbox_inches="tight")
    plt.close(fig)
    atomic_write_text(path, buf.getvalue())
    return path


def map_figure(raster, title="", vmin=None, vmax=None, points=None, label=""):
    arr = raster.masked().reshape(raster.shape)
    fig, ax = plt.subplots(figsize=(5, 4.5))
    xmin, xmax, ymin, ymax = raster.extent()
    im = ax.imshow(arr, cmap=RAMP, extent=(xmin, xmax, ymin, ymax), origin="upper",
                   vmin=vmin, vmax=vmax, interpolation="nearest")
    if points is not None and len(points):
        pts = np.asarray(points)
        ax.scatter(pts[:, 0], pts[:, 1], s=4, c="#ffffff", edgecolors="#000000", linewidths=0.3)
    ax.set_title(title)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.colorbar(im, ax=ax, shrink=0.8, label=label)
    return fig


def write_map_svg(raster, path, title="", vmin=None, vmax=None, points=None, label=""):
    return save_svg(map_figure(raster, title, vmin, vmax, points, label), path)


def calibration_figure(curves, title="Calibration"):
    """``curves`` maps a label to a CalibrationCurve."""
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.plot([0, 1], [0, 1], ls="--", c="#999999", lw=1, label="perfect")
    for label, cur in curves.items():
        ok = cur.count > 0
        color = WEIGHTED_COLOR if label.endswith(":weighted") else UNWEIGHTED_COLOR
        ax.plot(cur.mean_predicted[ok], cur.observed[ok], marker="o", ms=4, c=color,
                label=f"{label} (ECE {cur.ece:.3f})")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("mean predicted probability")
    ax.set_ylabel("observed frequency")
    ax.set_title(title)
    ax.legend(fontsize=8, frameon=False)
    return fig


def paired_auc_figure(unweighted, weighted, p_value=None, title="Paired fold AUC"):
    fig, ax = plt.subplots(figsize=(4, 4.5))
    u = np.asarray(unweighted)
    w = np.asarray(weighted)
    for a, b in zip(u, w):
        ax.plot([0, 1], [a, b], c="#888888", lw=0.8, marker="o", ms=3)
    for pos, vals, c in ((0, u, UNWEIGHTED_COLOR), (1, w, WEIGHTED_COLOR)):
        if len(vals):
            ax.errorbar([pos + (0.08 if pos else -0.08)], [vals.mean()],
                        yerr=[vals.std(ddof=1) if len(vals) > 1 else 0.0],
                        fmt="D", c=c, capsize=4)
    ax.set_xticks([0, 1], ["unweighted", "weighted"])
    ax.set_xlim(-0.4, 1.4)
    ax.set_ylabel("AUC")
    if p_value is not None:
        title = f"{title}\nWilcoxon p = {p_value:.4f}"
    ax.set_title(title)
    return fig


def roc_figure(curves, title="ROC"):
    """``curves`` maps a label to (fpr, tpr, auc)."""
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.plot([0, 1], [0, 1], ls="--", c="#999999", lw=1)
    for label, (fpr, tpr, a) in curves.items():
        ax.plot(fpr, tpr, label=f"{label} (AUC {a:.3f})")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title(title)
    ax.legend(fontsize=7, frameon=False)
    return fig


def auc_boxplot_figure(fold_aucs, title="Cross-validated AUC"):
    """``fold_aucs`` maps a config label to its per-fold AUC values."""
    labels = list(fold_aucs)
    fig, ax = plt.subplots(figsize=(max(4, 0.9 * len(labels) + 1), 4))
    ax.boxplot([fold_aucs[k] for k in labels], showmeans=False)
    ax.set_xticks(range(1, len(labels) + 1), labels, rotation=35, ha="right", fontsize=8)
    ax.set_ylabel("AUC")
    ax.set_title(title)
    return fig


def variance_violin_figure(variances, title="Posterior variance of spatial effects"):
    labels = list(variances)
    fig, ax = plt.subplots(figsize=(4.5, 4))
    data = [np.asarray(variances[k], float) for k in labels]
    if labels:
        ax.violinplot(data, showmedians=True)
    ax.set_xticks(range(1, len(labels) + 1), labels, fontsize=8)
    ax.set_ylabel("posterior variance")
    ax.set_title(title)
    return fig


def importance_figure(importances, title="Feature importance"):
    """``importances`` maps a config label to {feature: importance}."""
    labels = list(importances)
    feats = sorted({f for d in importances.values() for f in d})
    fig, ax = plt.subplots(figsize=(5, 0.4 * len(feats) + 1.5))
    h = 0.8 / max(len(labels), 1)
    y = np.arange(len(feats))
    for i, lab in enumerate(labels):
        color = WEIGHTED_COLOR if lab.endswith(":weighted") else UNWEIGHTED_COLOR
        ax.barh(y + i * h, [importances[lab].get(f, 0.0) for f in feats], height=h, label=lab, color=color)
    ax.set_yticks(y + h * (len(labels) - 1) / 2, feats)
    ax.set_xlabel("mean decrease in weighted Gini (normalized)")
    ax.set_title(title)
    ax.legend(fontsize=8, frameon=False)
    return fig


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
