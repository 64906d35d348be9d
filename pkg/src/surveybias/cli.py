"""Command-line pipeline: synth, entropy, sample, weights, train, predict, map, compare, run.

Every stage reads and writes plain files in the output directory (ASCII
grids, point CSVs, model JSON), so stages can be chained by hand or run in
one go with ``run``. Exit codes: 0 success, 2 config error, 3 data error,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys

import numpy as np

from . import entropy, evaluation, modelkit, sampling, synth
from .models import gam as gam_mod
from .models.gam import GamFitError
from .models.maxent import MaxentFitError
from .models.spatial_logit import CarFitError
from .pipeline import DEFAULT_CONFIG, landscape_spec, merge, n_absences
from .raster import RasterFormatError, atomic_write_text, read_ascii_grid, write_ascii_grid

log = logging.getLogger("surveybias")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
STAGES = ("synth", "entropy", "sample", "weights", "train", "predict", "map", "compare")
CONFIG_KEYS = {"paths", "synth", "entropy", "sampling", "models", "eval", "outputs"}


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


class NumericalError(RuntimeError):
    pass


# --------------------------------------------------------------------------- config


def apply_seed(cfg, seed):
    """Derive every stage seed from one base seed."""
    cfg = merge(cfg, {"synth": {"landscape": {"seed": seed}, "survey": {"seed": seed + 1},
                                "test_seed": seed + 2},
                      "sampling": {"seed": seed + 3}, "eval": {"seed": seed + 5}})
    cfg["models"] = [dict(m, seed=seed + 4) for m in cfg["models"]]
    return cfg


def load_config(path=None, seed=None, out=None, svg=False):
    user = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                user = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
    unknown = set(user) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = merge(DEFAULT_CONFIG, user)
    cfg.setdefault("paths", {})
    if seed is not None:
        cfg = apply_seed(cfg, int(seed))
    if out is not None:
        cfg["outputs"]["directory"] = out
    if svg:
        cfg["outputs"]["svg"] = True
    validate_config(cfg)
    return cfg


def _int(value, what):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ConfigError(f"{what} must be an explicit integer, got {value!r}")
    return int(value)


def validate_config(cfg):
    w = _int(cfg["entropy"]["window"], "entropy.window")
    if w < 1 or w % 2 == 0:
        raise ConfigError("entropy.window must be a positive odd integer")
    if not float(cfg["entropy"]["epsilon"]) > 0:
        raise ConfigError("entropy.epsilon must be positive")
    sp = cfg["sampling"]
    _int(sp["seed"], "sampling.seed")
    if not float(sp["ratio"]) > 0:
        raise ConfigError("sampling.ratio must be positive")
    if not float(sp["floor"]) > 0:
        raise ConfigError("sampling.floor must be positive")
    if _int(cfg["eval"]["k"], "eval.k") < 2:
        raise ConfigError("eval.k must be at least 2")
    _int(cfg["eval"]["seed"], "eval.seed")
    if not cfg["models"]:
        raise ConfigError("models list is empty")
    for m in cfg["models"]:
        _int(m.get("seed"), "models[].seed")
        try:
            modelkit.ModelConfig.from_dict(m)
        except (modelkit.ModelError, KeyError, TypeError) as exc:
            raise ConfigError(f"bad model config {m}: {exc}") from None
    paths = cfg["paths"]
    if paths:
        for key in ("layers", "effort", "presences"):
            if key not in paths:
                raise ConfigError(f"paths.{key} is required when paths are given")
        if not isinstance(paths["layers"], dict) or not paths["layers"]:
            raise ConfigError("paths.layers must map layer names to grid files")
        files = list(paths["layers"].values()) + [paths["effort"], paths["presences"]]
        if paths.get("test"):
            files.append(paths["test"])
        for f in files:
            if not os.path.isfile(f):
                raise ConfigError(f"referenced file does not exist: {f}")
    else:
        s = cfg["synth"]
        for key in ("landscape", "survey"):
            _int(s[key]["seed"], f"synth.{key}.seed")
        _int(s["test_seed"], "synth.test_seed")
        try:
            landscape_spec(s["landscape"])
            synth.SurveyBiasSpec(**s["survey"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad synth spec: {exc}") from None
    return cfg


def seeds_of(cfg):
    out = {"sampling": cfg["sampling"]["seed"], "eval": cfg["eval"]["seed"],
           "models": {modelkit.ModelConfig.from_dict(m).label: m["seed"] for m in cfg["models"]}}
    if not cfg["paths"]:
        s = cfg["synth"]
        out.update(landscape=s["landscape"]["seed"], survey=s["survey"]["seed"], test=s["test_seed"])
    return out


# --------------------------------------------------------------------------- workspace


class Workspace:
    """File layout of one output directory."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.root = cfg["outputs"]["directory"]
        self.svg = bool(cfg["outputs"]["svg"])
        self.paths = cfg["paths"]

    def path(self, *parts):
        return os.path.join(self.root, *parts)

    def ensure(self, *parts):
        d = self.path(*parts)
        try:
            os.makedirs(d, exist_ok=True)
        except OSError as exc:
            raise DataError(f"cannot create directory {d}: {exc}") from None
        if not os.access(d, os.W_OK):
            raise DataError(f"directory not writable: {d}")
        return d

    # inputs: explicit paths if configured, else synth outputs
    def layer_paths(self):
        if self.paths:
            return dict(self.paths["layers"])
        n = self.cfg["synth"]["landscape"]["n_covariates"]
        return {f"cov{j + 1}": self.path("layers", f"cov{j + 1}.asc") for j in range(n)}

    def effort_path(self):
        return self.paths["effort"] if self.paths else self.path("effort.asc")

    def presences_path(self):
        return self.paths["presences"] if self.paths else self.path("presences.csv")

    def test_path(self):
        if self.paths:
            return self.paths.get("test")
        return self.path("test.csv")

    def layers(self):
        return {name: _read_grid(p) for name, p in self.layer_paths().items()}

    def effort(self):
        return _read_grid(self.effort_path())

    def landscape(self):
        return modelkit.Landscape(self.layers(), self.effort())

    def model_path(self, label):
        return self.path("models", label.replace(":", "_") + ".json")


def _need(path, stage):
    if path is None or not os.path.isfile(path):
        raise DataError(f"{stage}: missing input {path}; run the earlier stages first")
    return path


def _read_grid(path):
    _need(path, "read")
    return read_ascii_grid(path)


def _read_points(path, require=None):
    _need(path, "read")
    return sampling.read_points_csv(path, require=require)


def _sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _json_text(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _write_json(path, obj):
    atomic_write_text(path, _json_text(obj))
    return path


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    atomic_write_text(path, buf.getvalue())
    return path


def record(ws, stage, files):
    """Add a stage's outputs (with hashes) and the seeds to manifest.json."""
    mpath = ws.path("manifest.json")
    manifest = {}
    if os.path.isfile(mpath):
        with open(mpath, encoding="utf-8") as fh:
            manifest = json.load(fh)
    # the output directory is left out so identical runs in different places match
    manifest["config"] = merge(ws.cfg, {"outputs": {"directory": None}})
    manifest["seeds"] = seeds_of(ws.cfg)
    manifest.setdefault("stages", {})[stage] = {
        os.path.relpath(f, ws.root): _sha256(f) for f in sorted(files)}
    _write_json(mpath, manifest)


def _points_of(ts):
    return np.column_stack([ts.x, ts.y])


# --------------------------------------------------------------------------- stages


def cmd_synth(cfg):
    ws = Workspace(cfg)
    if ws.paths:
        raise ConfigError("synth writes a synthetic world; remove 'paths' from the config")
    ws.ensure("layers")
    s = cfg["synth"]
    world = synth.generate_landscape(landscape_spec(s["landscape"]))
    effort, presences = synth.generate_survey(synth.SurveyBiasSpec(**s["survey"]), world)
    files = []
    for name, r in world.covariates.items():
        files.append(write_ascii_grid(r, ws.path("layers", f"{name}.asc")))
    for name, r in (("truth_probability", world.probability), ("truth_sites", world.sites),
                    ("effort", effort)):
        files.append(write_ascii_grid(r, ws.path(f"{name}.asc")))
    pres = sampling.extract_covariates(presences, world.covariates, labels=np.ones(len(presences)))
    sampling.write_points_csv(pres, ws.path("presences.csv"))
    test = synth.uniform_truth_testset(world, int(s["test_n"]), s["test_seed"])
    sampling.write_points_csv(test, ws.path("test.csv"))
    files += [ws.path("presences.csv"), ws.path("test.csv"),
              _write_json(ws.path("truth.json"), {"intercept": world.intercept,
                                                  "landscape": world.spec.to_dict(),
                                                  "n_presences": len(presences)})]
    if ws.svg:
        from . import plotting
        files.append(plotting.write_map_svg(world.probability, ws.path("truth_probability.svg"),
                                            "True site probability", 0.0, 1.0, label="probability"))
        files.append(plotting.write_map_svg(effort, ws.path("effort.svg"), "Survey effort",
                                            points=presences, label="effort"))
    record(ws, "synth", files)
    return files


def cmd_entropy(cfg):
    ws = Workspace(cfg)
    ws.ensure()
    effort = ws.effort()
    window = int(cfg["entropy"]["window"])
    surface = entropy.entropy_surface(effort, window)
    dist = entropy.effort_distribution(effort)
    files = [write_ascii_grid(surface.normalized, ws.path("entropy.asc")),
             write_ascii_grid(surface.raw, ws.path("entropy_raw.asc"))]
    files.append(_write_json(ws.path("entropy.json"), {"window": window, "nunits": dist.nunits,
                           "global_entropy": entropy.shannon_entropy(dist.proportions),
                           "global_normalized_entropy": entropy.normalized_entropy(dist.proportions)}))
    if ws.svg:
        from . import plotting
        files.append(plotting.write_map_svg(surface.normalized, ws.path("entropy.svg"),
                                            f"Normalized effort entropy ({window}x{window})",
                                            0.0, 1.0, label="entropy"))
    record(ws, "entropy", files)
    return files


def cmd_sample(cfg):
    ws = Workspace(cfg)
    ws.ensure()
    layers = ws.layers()
    effort = ws.effort()
    pres = _read_points(ws.presences_path())
    sp = cfg["sampling"]
    pts = sampling.sample_pseudo_absences(n_absences(len(pres), sp["ratio"]), effort,
                                          _points_of(pres), sp["seed"], sp["floor"])
    absn = sampling.extract_covariates(pts, layers, labels=np.zeros(len(pts)))
    sampling.write_points_csv(absn, ws.path("absences.csv"))
    record(ws, "sample", [ws.path("absences.csv")])
    return [ws.path("absences.csv")]


def cmd_weights(cfg):
    ws = Workspace(cfg)
    ws.ensure()
    layers = ws.layers()
    effort = ws.effort()
    normalized = _read_grid(_need(ws.path("entropy.asc"), "weights"))
    surface = entropy.EntropySurface(None, normalized, int(cfg["entropy"]["window"]))
    pres = _points_of(_read_points(ws.presences_path()))
    absn = _points_of(_read_points(_need(ws.path("absences.csv"), "weights")))
    scheme = entropy.derive_weights(pres, absn, effort, surface, float(cfg["entropy"]["epsilon"]))
    ts = sampling.build_training_set(pres, absn, layers, scheme.presence_weights,
                                     scheme.absence_weights)
    sampling.write_points_csv(ts, ws.path("training.csv"))
    _write_csv(ws.path("weights.csv"), ["id", "weight"],
               [(int(i), float(w)) for i, w in zip(ts.ids, ts.weights)])
    files = [ws.path("training.csv"), ws.path("weights.csv")]
    record(ws, "weights", files)
    return files


def _training(ws):
    return _read_points(_need(ws.path("training.csv"), "train"), require=list(ws.layer_paths()))


def _model_configs(cfg):
    return [modelkit.ModelConfig.from_dict(m) for m in cfg["models"]]


def model_artifacts(ws, model, label):
    """Per-kind side files: posterior summary, lambdas, importances, smooth curves."""
    stem = label.replace(":", "_")
    p = model.parameters
    files = []
    if model.kind == "spatial_logit":
        f = _write_csv(ws.path("models", f"{stem}_posterior.csv"),
                       ["parameter", "mean", "var", "lo95", "hi95"], p["coefficients"])
        g = modelkit._grid_from_meta(p["grid"]).with_values(np.asarray(p["phi_var"], float))
        files += [f, write_ascii_grid(g, ws.path("models", f"{stem}_phi_variance.asc"))]
    elif model.kind == "maxent":
        rho = np.broadcast_to(np.asarray(p["rho"], float), np.shape(p["lambda"]))
        files.append(_write_csv(ws.path("models", f"{stem}_lambda.csv"), ["feature", "lambda", "rho"],
                                zip(p["feature_names"], map(float, p["lambda"]), map(float, rho))))
    elif model.kind == "forest":
        files.append(_write_csv(ws.path("models", f"{stem}_importance.csv"), ["feature", "importance"],
                                zip(model.covariate_names, map(float, p["importance"]))))
    else:
        rows = []
        st = model.standardization
        for j, name in enumerate(model.covariate_names):
            knots = np.asarray(p["knots"][j], float)
            z = np.linspace(knots[3], knots[-4], 101)
            f, _ = gam_mod.smooth_values(p, j, z)
            x = st.mean[j] + st.sd[j] * z
            rows += [(name, float(a), float(b)) for a, b in zip(x, f)]
        files.append(_write_csv(ws.path("models", f"{stem}_smooth.csv"), ["covariate", "x", "f"], rows))
    return files


def cmd_train(cfg):
    ws = Workspace(cfg)
    ws.ensure("models")
    ts = _training(ws)
    land = ws.landscape()
    files = []
    for mc in _model_configs(cfg):
        model = modelkit.train(mc, ts, land)
        modelkit.save_model(model, ws.model_path(mc.label))
        files.append(ws.model_path(mc.label))
        files += model_artifacts(ws, model, mc.label)
    record(ws, "train", files)
    return files


def _load_models(ws, cfg):
    out = []
    for mc in _model_configs(cfg):
        path = _need(ws.model_path(mc.label), "predict")
        out.append((mc.label, modelkit.load_model(path)))
    return out


def cmd_predict(cfg):
    ws = Workspace(cfg)
    ws.ensure("predictions")
    tp = ws.test_path()
    if tp is None:
        log.info("predict: no test set configured; nothing to do")
        record(ws, "predict", [])
        return []
    test = _read_points(_need(tp, "predict"))
    files = []
    for label, model in _load_models(ws, cfg):
        scores = modelkit.predict(model, test)
        path = ws.path("predictions", label.replace(":", "_") + ".csv")
        _write_csv(path, ["id", "label", "score"],
                   [(int(i), int(l), float(s)) for i, l, s in zip(test.ids, test.labels, scores)])
        files.append(path)
    record(ws, "predict", files)
    return files


def cmd_map(cfg):
    ws = Workspace(cfg)
    ws.ensure("maps")
    land = ws.landscape()
    files = []
    for label, model in _load_models(ws, cfg):
        stem = label.replace(":", "_")
        r = modelkit.predict(model, land)
        files.append(write_ascii_grid(r, ws.path("maps", f"{stem}.asc")))
        if ws.svg:
            from . import plotting
            files.append(plotting.write_map_svg(r, ws.path("maps", f"{stem}.svg"), label, 0.0, 1.0,
                                                label="predicted probability"))
    record(ws, "map", files)
    return files


# --------------------------------------------------------------------------- compare


def summary_table(report):
    """Fixed-width table of per-config CV medians and uniform-truth results."""
    head = f"{'config':<26}{'folds':>6}{'auc_med':>9}{'auc_mean':>9}{'tss_med':>9}{'kappa_med':>10}" \
           f"{'ext_auc':>9}{'ext_ece':>9}"
    lines = [head, "-" * len(head)]
    for label in report.folds:
        s = report.summary[label]["cv"]
        ext = report.external.get(label)

        def g(key, stat):
            return s[key][stat] if key in s else float("nan")
        lines.append(f"{label:<26}{s.get('auc', {}).get('n', 0):>6d}{g('auc', 'median'):>9.4f}"
                     f"{g('auc', 'mean'):>9.4f}{g('tss', 'median'):>9.4f}{g('kappa', 'median'):>10.4f}"
                     f"{(ext['metrics']['auc'] if ext else float('nan')):>9.4f}"
                     f"{(ext['ece'] if ext else float('nan')):>9.4f}")
    lines.append("")
    lines.append("paired weighted vs unweighted fold AUC (Wilcoxon signed-rank, two-sided)")
    for kind, entry in report.paired.items():
        wx = entry.get("wilcoxon")
        if wx:
            lines.append(f"  {kind:<16} n={wx['n']:<3d} W={wx['W']:<7g} p={wx['p_two_sided']:.4f} ({wx['method']})")
        else:
            lines.append(f"  {kind:<16} not available: {entry.get('wilcoxon_error', 'missing folds')}")
    if report.posterior_variance:
        lines.append("")
        lines.append("spatial-effect posterior variance (median [q1, q3])")
        for label, pv in report.posterior_variance.items():
            lines.append(f"  {label:<26} {pv['median']:.4f} [{pv['q1']:.4f}, {pv['q3']:.4f}]")
    return "\n".join(lines) + "\n"


def write_report(ws, report):
    ws.ensure("compare")
    P = lambda name: ws.path("compare", name)  # noqa: E731
    files = [_write_json(P("comparison.json"), report.to_dict())]
    rows = []
    for label, frs in report.folds.items():
        for fr in frs:
            rows += [(label, fr.fold, i, l, s, w) for i, l, s, w in fr.predictions]
    files.append(_write_csv(P("folds.csv"), ["config", "fold", "id", "label", "score", "weight"], rows))
    files.append(_write_csv(P("calibration.csv"),
                            ["config", "bin_lo", "bin_hi", "count", "mean_predicted", "observed"],
                            [(label,) + r for label, c in report.calibration.items() for r in c["rows"]]))
    files.append(_write_csv(P("roc.csv"), ["config", "fpr", "tpr"],
                            [(label, float(a), float(b)) for label, c in report.roc.items()
                             for a, b in zip(c["fpr"], c["tpr"])]))
    files.append(_write_csv(P("paired_auc.csv"), ["model", "fold", "auc_weighted", "auc_unweighted"],
                            [(kind, f, float(a), float(b)) for kind, e in report.paired.items()
                             for f, a, b in zip(e["folds"], e["weighted"], e["unweighted"])]))
    summary = summary_table(report)
    atomic_write_text(P("summary.txt"), summary)
    files.append(P("summary.txt"))
    if ws.svg:
        files += write_report_svgs(ws, report)
    return files, summary


def write_report_svgs(ws, report):
    from . import plotting
    P = lambda name: ws.path("compare", name)  # noqa: E731
    files = []
    if report.calibration:
        curves = {}
        for label, c in report.calibration.items():
            r = np.array([row[2:] for row in c["rows"]], float)
            curves[label] = evaluation.CalibrationCurve(None, r[:, 1], r[:, 2], r[:, 0].astype(int), c["ece"])
        files.append(plotting.save_svg(plotting.calibration_figure(curves), P("calibration.svg")))
    if report.roc:
        roc = {k: (v["fpr"], v["tpr"], v["auc"]) for k, v in report.roc.items()}
        files.append(plotting.save_svg(plotting.roc_figure(roc, "ROC on uniform-truth test set"), P("roc.svg")))
    for kind, e in report.paired.items():
        wx = e.get("wilcoxon")
        fig = plotting.paired_auc_figure(e["unweighted"], e["weighted"], wx["p_two_sided"] if wx else None,
                                         f"{kind}: paired fold AUC")
        files.append(plotting.save_svg(fig, P(f"paired_auc_{kind}.svg")))
    aucs = {label: [fr.metrics.auc for fr in frs if fr.metrics is not None]
            for label, frs in report.folds.items()}
    files.append(plotting.save_svg(plotting.auc_boxplot_figure(aucs), P("auc_boxplot.svg")))
    if report.importance:
        files.append(plotting.save_svg(plotting.importance_figure(report.importance), P("importance.svg")))
    full = getattr(report, "full_models", {})
    var = {label: np.asarray(m.parameters["phi_var"], float) for label, m in full.items()
           if m.kind == "spatial_logit"}
    if var:
        files.append(plotting.save_svg(plotting.variance_violin_figure(var), P("posterior_variance.svg")))
    return files


def cmd_compare(cfg):
    ws = Workspace(cfg)
    ws.ensure("compare")
    ts = _training(ws)
    land = ws.landscape()
    tp = ws.test_path()
    external = _read_points(tp) if tp and os.path.isfile(tp) else None
    folds = sampling.assign_folds(ts, int(cfg["eval"]["k"]), int(cfg["eval"]["seed"]))
    report = evaluation.run_cv(_model_configs(cfg), ts, folds, land, external)
    files, summary = write_report(ws, report)
    record(ws, "compare", files)
    ok = [fr for frs in report.folds.values() for fr in frs if fr.error is None]
    if not ok:
        raise NumericalError("every config x fold cell failed")
    return files, report, summary


def cmd_run(cfg):
    """Every stage in order; identical to chaining the stage commands."""
    files = []
    if not cfg["paths"]:
        files += cmd_synth(cfg)
    for stage in (cmd_entropy, cmd_sample, cmd_weights, cmd_train, cmd_predict, cmd_map):
        files += stage(cfg)
    cfiles, _, _ = cmd_compare(cfg)
    return files + cfiles


COMMANDS = {"synth": cmd_synth, "entropy": cmd_entropy, "sample": cmd_sample,
            "weights": cmd_weights, "train": cmd_train, "predict": cmd_predict,
            "map": cmd_map, "compare": cmd_compare, "run": cmd_run}


# --------------------------------------------------------------------------- entry point


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON pipeline config (merged over the defaults)")
    common.add_argument("--seed", type=int, help="base seed; every stage seed is derived from it")
    common.add_argument("--out", help="output directory")
    common.add_argument("--svg", action="store_true", help="also write SVG figures")
    common.add_argument("--window", type=int, help="entropy moving-window size (odd)")
    common.add_argument("--epsilon", type=float, help="weight stabilizer epsilon")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="surveybias", description=__doc__.splitlines()[0],
                                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=(COMMANDS[name].__doc__ or name).splitlines()[0])
    return parser


def exit_code_for(exc):
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (NumericalError, GamFitError, MaxentFitError, CarFitError,
                        FloatingPointError, np.linalg.LinAlgError)):
        return EXIT_NUMERIC
    if isinstance(exc, (DataError, RasterFormatError, sampling.PointDataError,
                        modelkit.ModelError, entropy.DegenerateEffortError, ValueError, OSError)):
        return EXIT_DATA
    return None


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed, args.out, args.svg)
        if args.window is not None:
            cfg["entropy"]["window"] = args.window
        if args.epsilon is not None:
            cfg["entropy"]["epsilon"] = args.epsilon
        validate_config(cfg)
        result = COMMANDS[args.command](cfg)
        if args.command == "compare":
            sys.stdout.write(result[2])
    except Exception as exc:
        code = exit_code_for(exc)
        if code is None:
            raise
        print(f"surveybias {args.command}: error: {exc}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
