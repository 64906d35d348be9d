"""End-to-end assembly of a synthetic world into weighted training data."""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from . import entropy, sampling, synth
from .modelkit import Landscape as ModelLandscape
from .modelkit import ModelConfig

DEFAULT_CONFIG = {
    "synth": {
        "landscape": {"nrows": 100, "ncols": 100, "n_covariates": 3,
                      "smoothness": [4.0, 8.0, 2.0], "coefficients": [1.5, -1.0, 0.75],
                      "quadratic_index": None, "quadratic_coef": -1.0, "site_rate": 0.1,
                      "seed": 0},
        "survey": {"kind": "corner-gradient", "intensity": 3.0, "coverage": 0.3,
                   "detection": 0.8, "seed": 1},
        "test_n": 2000,
        "test_seed": 2,
    },
    "entropy": {"window": entropy.DEFAULT_WINDOW, "epsilon": entropy.DEFAULT_EPSILON},
    "sampling": {"ratio": 1.0, "seed": 3, "floor": sampling.DEFAULT_BACKGROUND_FLOOR},
    "models": [
        {"kind": k, "use_weights": w, "seed": 4, "hyperparameters": {}}
        for k in ("spatial_logit", "gam", "maxent", "forest") for w in (True, False)
    ],
    "eval": {"k": 10, "seed": 5},
    "outputs": {"directory": "out", "svg": False},
}


def merge(base, override):
    out = copy.deepcopy(base)
    for key, val in (override or {}).items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def landscape_spec(cfg):
    d = dict(cfg)
    for key in ("smoothness", "coefficients"):
        d[key] = tuple(d[key])
    return synth.LandscapeSpec(**d)


@dataclass
class Prepared:
    world: synth.Landscape
    effort: object
    presences: np.ndarray
    absences: np.ndarray
    surface: entropy.EntropySurface
    weights: entropy.WeightScheme
    training: sampling.TrainingSet
    test: sampling.TrainingSet

    @property
    def landscape(self):
        return ModelLandscape(dict(self.world.covariates), self.effort)


def n_absences(n_presences, ratio):
    return max(1, int(round(ratio * n_presences)))


def prepare_synthetic(config):
    """World, biased survey, entropy weights and training set for one config."""
    cfg = merge(DEFAULT_CONFIG, config)
    s = cfg["synth"]
    world = synth.generate_landscape(landscape_spec(s["landscape"]))
    effort, presences = synth.generate_survey(synth.SurveyBiasSpec(**s["survey"]), world)
    surface = entropy.entropy_surface(effort, int(cfg["entropy"]["window"]))
    sp = cfg["sampling"]
    absences = sampling.sample_pseudo_absences(n_absences(len(presences), sp["ratio"]), effort,
                                               presences, sp["seed"], sp["floor"])
    ws = entropy.derive_weights(presences, absences, effort, surface, cfg["entropy"]["epsilon"])
    ts = sampling.build_training_set(presences, absences, world.covariates,
                                     ws.presence_weights, ws.absence_weights)
    test = synth.uniform_truth_testset(world, int(s["test_n"]), s["test_seed"])
    return Prepared(world, effort, presences, absences, surface, ws, ts, test)


def model_configs(cfg):
    return [ModelConfig.from_dict(m) for m in merge(DEFAULT_CONFIG, cfg)["models"]]
