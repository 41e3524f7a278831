"""Declarative pipeline configuration.

One YAML file drives the whole chain; every default mirrors the
collection/training protocol constants (1 h runs sampled every 10 s
with a 30 min clean phase, 70%/30% scaling thresholds on 2-10
instances, batch 64, 100 epochs, 60/20/20 split).
"""

from __future__ import annotations

import copy
from pathlib import Path

import yaml

from .errors import ConfigurationError
from .testbed import (
    AutoScalePolicy,
    ExperimentConfig,
    MalwareProfile,
    TrafficModel,
    profile_variants,
)
from .training import TrainConfig

DEFAULT_CONFIG = {
    "simulate": {
        "experiments": 113,
        "base_seed": 7,
        "profile_seed": 99,
        "families": ["cpu-spinner", "io-flooder", "stealth", "dormant-bursty"],
        "total_duration_s": 3600,
        "clean_phase_s": 1800,
        "sample_interval_s": 10,
        "injection_offset_s": [0.0, 900.0],
        "traffic": {
            "mean_on_ms": 500.0,
            "mean_off_ms": 500.0,
            "pareto_shape": 1.5,
            "peak_rate": 200.0,
        },
        "policy": {
            "scale_out_threshold": 0.70,
            "scale_in_threshold": 0.30,
            "min_instances": 2,
            "max_instances": 10,
        },
    },
    "encode": {
        "ratios": [0.6, 0.2, 0.2],
        "seed": 11,
    },
    "train": {
        "model": "lenet5",
        "batch_size": 64,
        "epochs": 100,
        "learning_rate": 1.0e-4,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1.0e-8,
        "seed": 13,
        "init_seed": 17,
    },
    "evaluate": {
        "batch_size": 64,
    },
    "benchmark": {
        "repetitions": 30,
        "warmup": 10,
    },
}


def _merge(defaults, overrides, path=""):
    if not isinstance(overrides, dict):
        raise ConfigurationError(f"config section {path or '<root>'} must be a mapping")
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        here = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigurationError(f"unknown config key {here!r}")
        if isinstance(defaults[key], dict):
            merged[key] = _merge(defaults[key], value, here)
        else:
            expected = type(defaults[key])
            if expected is float and isinstance(value, int):
                value = float(value)
            if not isinstance(value, expected) or isinstance(value, bool) != isinstance(
                defaults[key], bool
            ):
                raise ConfigurationError(
                    f"config key {here!r} must be {expected.__name__}, got "
                    f"{type(value).__name__}"
                )
            merged[key] = value
    return merged


def load_config(path: str | Path | None = None) -> dict:
    """Parse and validate a YAML config, filling every default."""
    if path is None:
        return copy.deepcopy(DEFAULT_CONFIG)
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file {path} does not exist")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config file {path} is not valid YAML: {exc}") from exc
    if data is None:
        data = {}
    return _merge(DEFAULT_CONFIG, data)


def simulation_plan(config: dict) -> tuple[list[MalwareProfile], ExperimentConfig, int]:
    """(profiles, config template, base seed) from the simulate section."""
    sim = config["simulate"]
    profiles = profile_variants(
        sim["experiments"], seed=sim["profile_seed"], families=tuple(sim["families"])
    )
    window = sim["injection_offset_s"]
    if len(window) != 2:
        raise ConfigurationError("injection_offset_s must be [low, high]")
    template = ExperimentConfig(
        malware=profiles[0],
        total_duration_s=sim["total_duration_s"],
        clean_phase_s=sim["clean_phase_s"],
        sample_interval_s=sim["sample_interval_s"],
        traffic=TrafficModel(**sim["traffic"]),
        policy=AutoScalePolicy(**sim["policy"]),
        injection_window=(float(window[0]), float(window[1])),
    )
    return profiles, template, sim["base_seed"]


def train_config(config: dict) -> TrainConfig:
    t = config["train"]
    return TrainConfig(
        batch_size=t["batch_size"],
        epochs=t["epochs"],
        learning_rate=t["learning_rate"],
        beta1=t["beta1"],
        beta2=t["beta2"],
        eps=t["eps"],
        seed=t["seed"],
    )
