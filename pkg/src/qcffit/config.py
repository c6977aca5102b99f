"""Run configuration: one human-readable YAML tree, strictly validated.

Unknown keys are rejected with their dotted path; every default can be printed
with the config-init command.  The QCFFIT_OUTPUT_DIR environment variable
overrides output_dir (and nothing else).
"""

import copy
import os

import yaml

from .errors import ConfigError

ENV_OUTPUT_DIR = "QCFFIT_OUTPUT_DIR"

DEFAULTS = {
    "seed": 20240811,
    "output_dir": "runs/demo",
    "workers": 1,
    "data": {
        "template_csv": None,      # path to an experimental-style CSV, or null
        "synthetic_bins": 12,      # used when template_csv is null
        "synthetic_seed": 7,
        "synthetic_phi_points": 24,
        "rel_err_min": 0.03,
        "rel_err_max": 0.25,
    },
    "pseudodata": {
        "generator": "basic",      # basic | realistic
        "noise_scale": 1.0,
        "write_qualifier_manifest": False,
        "qualifier_cff_values": 5,
        "qualifier_noise_scales": [0.0, 0.5, 1.0, 2.0],
        "qualifier_half_width": [1.0, 1.0, 1.0, 0.02],
    },
    "fit": {
        "models": ["cdnn", "fqdnn"],
        "n_replicas": 30,
        "resample_mode": "gaussian",
        "cdnn_epochs": 1200,
        "cdnn_lr": 2e-3,
        "qdnn_epochs": 250,
        "qdnn_lr": 2e-3,
        "qdnn_angle_lr": 2e-2,
        "qdnn_start_depth": 2,
        "early_stop_tol": 0.0,
    },
    "evaluate": {
        "algorithmic_replicas": 0,     # 0 disables the identical-replica study
        "methodological_draws": 0,     # 0 disables the generator-spread study
        "param_spread": 0.05,
    },
    "qualify": {
        "noise_scale": 1.0,
        "decision_margin": 0.0,
    },
    "globalfit": {
        "n_replicas": 40,
        "epochs": 400,
        "lr": 3e-3,
        "dropout": 0.1,
        "batch_norm": True,
        "grid_xB": [0.25, 0.5, 8],
        "grid_t": [-0.5, -0.1, 8],
        "grid_Q2": [1.8, 4.0, 3],
        "reference_csv": None,     # external comparison curves for overlays
    },
    "report": {
        "dpi": 110,
        "max_bins": 6,
    },
}

_MODEL_CHOICES = ("cdnn", "bqdnn", "fqdnn")


def _expect(cond, path, message):
    if not cond:
        raise ConfigError(f"config key {path}: {message}")


def _validate_block(values: dict, defaults: dict, path: str):
    for key in values:
        if key not in defaults:
            raise ConfigError(f"unknown config key {path}{key}")
    for key, default in defaults.items():
        if key not in values:
            values[key] = copy.deepcopy(default)
        elif isinstance(default, dict):
            _expect(isinstance(values[key], dict), path + key, "must be a mapping")
            _validate_block(values[key], default, f"{path}{key}.")


def validate_config(config: dict) -> dict:
    """Fill defaults, reject unknown keys, check value ranges."""
    if not isinstance(config, dict):
        raise ConfigError("config root must be a mapping")
    config = copy.deepcopy(config)
    _validate_block(config, DEFAULTS, "")

    _expect(isinstance(config["seed"], int), "seed", "must be an integer")
    _expect(isinstance(config["workers"], int) and config["workers"] >= 1,
            "workers", "must be a positive integer")

    data = config["data"]
    _expect(data["synthetic_bins"] >= 1, "data.synthetic_bins", "must be >= 1")
    _expect(data["synthetic_phi_points"] >= 4, "data.synthetic_phi_points", "must be >= 4")
    _expect(0 < data["rel_err_min"] <= data["rel_err_max"],
            "data.rel_err_min", "need 0 < rel_err_min <= rel_err_max")

    ps = config["pseudodata"]
    _expect(ps["generator"] in ("basic", "realistic"), "pseudodata.generator",
            "must be 'basic' or 'realistic'")
    _expect(ps["noise_scale"] >= 0, "pseudodata.noise_scale", "must be >= 0")
    _expect(ps["qualifier_cff_values"] >= 2, "pseudodata.qualifier_cff_values",
            "must be >= 2")
    _expect(all(s >= 0 for s in ps["qualifier_noise_scales"]),
            "pseudodata.qualifier_noise_scales", "entries must be >= 0")
    _expect(len(ps["qualifier_half_width"]) == 4,
            "pseudodata.qualifier_half_width", "needs four entries")

    fit = config["fit"]
    _expect(len(fit["models"]) >= 1, "fit.models", "must list at least one model")
    for m in fit["models"]:
        _expect(m in _MODEL_CHOICES, "fit.models", f"unknown model class {m!r}")
    _expect(fit["n_replicas"] >= 2, "fit.n_replicas", "must be >= 2")
    _expect(fit["resample_mode"] in ("gaussian", "identical"), "fit.resample_mode",
            "must be 'gaussian' or 'identical'")
    for key in ("cdnn_epochs", "qdnn_epochs"):
        _expect(fit[key] >= 0, f"fit.{key}", "must be >= 0")
    for key in ("cdnn_lr", "qdnn_lr", "qdnn_angle_lr"):
        _expect(fit[key] > 0, f"fit.{key}", "must be positive")
    _expect(fit["qdnn_start_depth"] >= 1, "fit.qdnn_start_depth", "must be >= 1")

    ev = config["evaluate"]
    _expect(ev["algorithmic_replicas"] == 0 or ev["algorithmic_replicas"] >= 2,
            "evaluate.algorithmic_replicas", "must be 0 (off) or >= 2")
    _expect(ev["methodological_draws"] == 0 or ev["methodological_draws"] >= 2,
            "evaluate.methodological_draws", "must be 0 (off) or >= 2")
    _expect(0 <= ev["param_spread"] < 1, "evaluate.param_spread", "must be in [0, 1)")

    q = config["qualify"]
    _expect(q["noise_scale"] >= 0, "qualify.noise_scale", "must be >= 0")
    _expect(q["decision_margin"] >= 0, "qualify.decision_margin", "must be >= 0")

    g = config["globalfit"]
    _expect(g["n_replicas"] >= 2, "globalfit.n_replicas", "must be >= 2")
    _expect(g["epochs"] >= 1, "globalfit.epochs", "must be >= 1")
    _expect(g["lr"] > 0, "globalfit.lr", "must be positive")
    _expect(g["dropout"] == 0 or 0.1 <= g["dropout"] <= 0.5, "globalfit.dropout",
            "must be 0 or within [0.1, 0.5]")
    for axis in ("grid_xB", "grid_t", "grid_Q2"):
        spec = g[axis]
        _expect(isinstance(spec, list) and len(spec) == 3,
                f"globalfit.{axis}", "must be [min, max, count]")
        _expect(spec[2] >= 1, f"globalfit.{axis}", "count must be >= 1")

    rep = config["report"]
    _expect(rep["dpi"] >= 50, "report.dpi", "must be >= 50")
    _expect(rep["max_bins"] >= 1, "report.max_bins", "must be >= 1")

    if os.environ.get(ENV_OUTPUT_DIR):
        config["output_dir"] = os.environ[ENV_OUTPUT_DIR]
    return config


def default_config() -> dict:
    return validate_config({})


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    return validate_config(raw)


def dump_config_yaml(config: dict) -> str:
    return yaml.safe_dump(config, sort_keys=False, default_flow_style=False)
