"""Experiment configuration: one JSON object with a section per module.

Unset keys take the defaults below (the synthetic maritime study). Unknown
keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "out": "out",
    "grid": {"s_min": 0.0, "s_max": 10.0, "t_min": 0.0, "t_max": 24.0, "n_s": 200, "n_t": 48},
    "environment": {"sigma": 0.8, "ell_s": 0.5, "ell_t": 1.0, "beta_omega": 1.5, "mean": 0.0},
    "target": {
        # synthetic | csv | ais
        "source": "synthetic",
        "log_mean": -4.6,
        "sigma": 0.5,
        "ell_s": 1.0,
        "ell_t": 3.0,
        "intensity_csv": None,
        "perturb": True,
        "M": 30,
    },
    "ais": {
        "path": None,
        "start": [-80.835, 32.145],
        "end": [-80.811, 32.148],
        "corridor_km": 1.0,
        "length_km": 10.0,
        "fold_daily": True,
        "event_bin_hours": 0.5,
        "window": None,
        "bandwidth_s": 0.5,
        "bandwidth_t": 1.0,
    },
    "sensing": {"theta": 1.2, "beta": 5.0, "xi": 0.2},
    "placement": {
        "K_values": [1, 2, 3, 4, 5, 6, 7, 8],
        # expected | mean | nominal | zero
        "planning_omega": "mean",
        "n_planning_draws": 64,
        "policies": ["nf", "nfilt", "fa_aware", "random"],
        "n_realizations": 30,
    },
    "bounds": {"K_values": [1, 2, 3, 4, 5, 6, 7, 8], "n_realizations": 200},
    "margin": {
        "theta": 1.2,
        "scatter_cells": 4000,
        "histogram_bins": 40,
        "beta_list": [1e-9, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0],
        "sweep_K": 4,
        "sweep_realizations": 100,
    },
    "robustness": {
        "s_min": 0.0,
        "s_max": 10.0,
        "t_min": 0.0,
        "t_max": 0.25,
        "n_s": 96,
        "n_t": 2,
        "m": 10,
        "K": 3,
        "target_mass": 1.0,
        "N_list": [100, 400, 1600, 6400],
        "delta": 0.1,
        "trials": 200,
    },
}


def _merge(base: dict, update: dict, where: str) -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        if key not in base:
            raise ConfigError(f"unknown config key {where}{key}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}{key} must be an object")
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


def parse_override(text: str) -> tuple[list[str], Any]:
    """``section.key=value`` with ``value`` parsed as JSON when possible."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def load_config(path=None, overrides=()) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config root must be a JSON object")
        cfg = _merge(cfg, user, "")
    for text in overrides:
        keys, value = parse_override(text)
        nested: dict = value
        for k in reversed(keys):
            nested = {k: nested}
        cfg = _merge(cfg, nested, "")
    return cfg
