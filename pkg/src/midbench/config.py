"""Experiment configuration: a strict, versioned key-value document.

Configs are YAML (JSON is a subset) with a `config_version` field. Unknown
keys are rejected at every level, values are type- and range-checked, and
older versions are upgraded through explicit migrations before validation.
"""

import copy

import yaml

from .mitigation import DEFAULT_L1_GRID, TAG_ACCEPTABLE, TAG_MISLABELS, TAG_RETRAIN

CONFIG_VERSION = 1

TRIAGE_TAGS = (TAG_RETRAIN, TAG_ACCEPTABLE, TAG_MISLABELS)


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "config_version": CONFIG_VERSION,
    "bias_levels": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
    "seeds": [0, 1, 2, 3, 4],
    "data": {
        "n_train": 30000,
        "n_test": 10000,
        "test_seed_offset": 1000000,
        "label_flip_fraction": 0.0,
    },
    "model": {
        # Widths are a calibration choice: small conv trunks keep the
        # positional shortcut dominant at high bias while the fully
        # connected stack retains enough capacity to fit the minority
        # groups, which is the regime the benchmark is about.
        "conv_channels": [4, 8],
        "kernel_size": 5,
        "fc_widths": [256, 128, 64],
        "input_size": 64,
    },
    "train": {
        "learning_rate": 1e-3,
        "optimizer": "adam",
        "batch_size": 1000,
        "epochs": 18,
    },
    "intercept": {"mode": "absolute_zero", "window_fraction": 0.05, "cap": 2000},
    "rsm": {"n_samples": 1000},
    "cluster": {"k_range": [2, 8], "k_final": 4, "seed": 0, "n_init": 5, "max_iter": 1000},
    "oracle": {"name": "ground_truth", "endpoint": None},
    "triage": {"policy": "auto", "decisions": None},
    "retrain": {
        "l1_grid": list(DEFAULT_L1_GRID),
        "n_repeats": 10,
        "majority_mix_fraction": 0.5,
        "rng_seed": 0,
    },
}


def _require_keys(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in {where}")


def _check_number(value, lo, hi, where):
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    if not (lo <= value <= hi):
        raise ConfigError(f"{where}={value} outside [{lo}, {hi}]")


def _check_int(value, lo, where, hi=None):
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(f"{where} must be an integer, got {value!r}")
    if value < lo or (hi is not None and value > hi):
        raise ConfigError(f"{where}={value} out of range")


def _merge_defaults(defaults: dict, given: dict, where: str) -> dict:
    _require_keys(given, set(defaults), where)
    out = {}
    for key, default in defaults.items():
        if key in given:
            value = given[key]
            if isinstance(default, dict) and not isinstance(value, dict) and value is not None:
                raise ConfigError(f"{where}.{key} must be a mapping")
            if isinstance(default, dict) and isinstance(value, dict):
                value = _merge_defaults(default, value, f"{where}.{key}")
            out[key] = copy.deepcopy(value)
        else:
            out[key] = copy.deepcopy(default)
    return out


# -- migrations ----------------------------------------------------------

def _migrate_0_to_1(doc: dict) -> dict:
    # Version 0 predates the RSM section and named its window settings
    # "window"; both are normalized here.
    doc = dict(doc)
    if "window" in doc:
        doc["intercept"] = doc.pop("window")
    doc.setdefault("rsm", copy.deepcopy(DEFAULTS["rsm"]))
    doc["config_version"] = 1
    return doc


MIGRATIONS = {0: _migrate_0_to_1}


def migrate(doc: dict) -> dict:
    version = doc.get("config_version", CONFIG_VERSION)
    if not isinstance(version, int):
        raise ConfigError(f"config_version must be an integer, got {version!r}")
    if version > CONFIG_VERSION:
        raise ConfigError(
            f"config_version {version} is newer than supported {CONFIG_VERSION}"
        )
    while version < CONFIG_VERSION:
        doc = MIGRATIONS[version](doc)
        version = doc["config_version"]
    return doc


# -- validation ---------------------------------------------------------

def validate(doc: dict) -> dict:
    """Merge with defaults, reject unknown keys, and range-check everything.
    Returns the fully resolved config."""
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    doc = migrate(doc)
    cfg = _merge_defaults(DEFAULTS, doc, "config")

    if not cfg["bias_levels"]:
        raise ConfigError("bias_levels must be non-empty")
    for b in cfg["bias_levels"]:
        _check_number(b, 0.0, 1.0, "bias_levels entry")
    if len(set(cfg["bias_levels"])) != len(cfg["bias_levels"]):
        raise ConfigError("bias_levels contains duplicates")

    if not cfg["seeds"]:
        raise ConfigError("seeds must be non-empty")
    for s in cfg["seeds"]:
        _check_int(s, 0, "seeds entry")
    if len(set(cfg["seeds"])) != len(cfg["seeds"]):
        raise ConfigError("seeds contains duplicates")

    data = cfg["data"]
    _check_int(data["n_train"], 1, "data.n_train")
    _check_int(data["n_test"], 1, "data.n_test")
    _check_int(data["test_seed_offset"], 1, "data.test_seed_offset")
    _check_number(data["label_flip_fraction"], 0.0, 1.0, "data.label_flip_fraction")

    model = cfg["model"]
    if len(model["conv_channels"]) != 2:
        raise ConfigError("model.conv_channels must list exactly 2 widths")
    for c in model["conv_channels"]:
        _check_int(c, 1, "model.conv_channels entry")
    if len(model["fc_widths"]) != 3:
        raise ConfigError("model.fc_widths must list exactly 3 widths")
    for w in model["fc_widths"]:
        _check_int(w, 1, "model.fc_widths entry")
    _check_int(model["kernel_size"], 1, "model.kernel_size")
    if model["kernel_size"] % 2 != 1:
        raise ConfigError("model.kernel_size must be odd (same-padding conv)")
    _check_int(model["input_size"], 4, "model.input_size")
    if model["input_size"] not in (32, 64):
        raise ConfigError("model.input_size must be 32 or 64")

    train = cfg["train"]
    _check_number(train["learning_rate"], 1e-12, 1e6, "train.learning_rate")
    if train["optimizer"] not in ("adam", "sgd"):
        raise ConfigError(f"train.optimizer {train['optimizer']!r} unknown")
    _check_int(train["batch_size"], 1, "train.batch_size")
    _check_int(train["epochs"], 1, "train.epochs")

    window = cfg["intercept"]
    if window["mode"] not in ("absolute_zero", "margin_zero"):
        raise ConfigError(f"intercept.mode {window['mode']!r} unknown")
    _check_number(window["window_fraction"], 0.0, 1.0, "intercept.window_fraction")
    _check_int(window["cap"], 1, "intercept.cap")

    _check_int(cfg["rsm"]["n_samples"], 2, "rsm.n_samples")

    cluster = cfg["cluster"]
    if len(cluster["k_range"]) != 2:
        raise ConfigError("cluster.k_range must be [lo, hi]")
    lo, hi = cluster["k_range"]
    _check_int(lo, 1, "cluster.k_range lo")
    _check_int(hi, lo, "cluster.k_range hi")
    _check_int(cluster["k_final"], 1, "cluster.k_final")
    if not (lo <= cluster["k_final"] <= hi):
        raise ConfigError("cluster.k_final must lie inside k_range")
    _check_int(cluster["seed"], 0, "cluster.seed")
    _check_int(cluster["n_init"], 1, "cluster.n_init")
    _check_int(cluster["max_iter"], 1, "cluster.max_iter")

    oracle = cfg["oracle"]
    if oracle["name"] not in ("ground_truth", "always_agree", "external_vqa"):
        raise ConfigError(f"oracle.name {oracle['name']!r} unknown")
    if oracle["name"] == "external_vqa" and not oracle["endpoint"]:
        raise ConfigError("oracle.endpoint required for external_vqa")

    triage = cfg["triage"]
    if triage["policy"] not in ("auto", "headless"):
        raise ConfigError(f"triage.policy {triage['policy']!r} unknown")
    if triage["policy"] == "headless":
        decisions = triage["decisions"]
        if not isinstance(decisions, list) or not decisions:
            raise ConfigError("triage.decisions must be a non-empty list for headless")
        for row in decisions:
            if not isinstance(row, dict) or set(row) != {"cluster", "tag"}:
                raise ConfigError("each triage decision needs exactly {cluster, tag}")
            _check_int(row["cluster"], 0, "triage decision cluster")
            if row["tag"] not in TRIAGE_TAGS:
                raise ConfigError(f"triage tag {row['tag']!r} unknown")

    retrain = cfg["retrain"]
    if not retrain["l1_grid"]:
        raise ConfigError("retrain.l1_grid must be non-empty")
    for lam in retrain["l1_grid"]:
        _check_number(lam, 1e-12, 1e12, "retrain.l1_grid entry")
    _check_int(retrain["n_repeats"], 1, "retrain.n_repeats")
    _check_number(
        retrain["majority_mix_fraction"], 0.0, 1.0, "retrain.majority_mix_fraction"
    )
    _check_int(retrain["rng_seed"], 0, "retrain.rng_seed")

    return cfg


def load_config(path: str) -> dict:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if doc is None:
        doc = {}
    return validate(doc)


def default_config(**overrides) -> dict:
    """Resolved default config; keyword overrides replace whole sections."""
    doc = copy.deepcopy(DEFAULTS)
    for key, value in overrides.items():
        if key not in doc:
            raise ConfigError(f"unknown config section {key!r}")
        if isinstance(doc[key], dict) and isinstance(value, dict):
            doc[key] = {**doc[key], **value}
        else:
            doc[key] = value
    return validate(doc)
