"""Run configuration: nested, validated, hashable, YAML round-trippable.

Two shipped profiles: ``quick`` (small phantoms, short schedules, CI-sized)
and ``paper`` (the full-scale hyperparameters for users with real data).
CLI flags override file values; the fully resolved config is written next to
every command's outputs.
"""

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import yaml

from .errors import InvalidConfig


@dataclass
class DataConfig:
    raw_dir: str = "data/raw"
    cache_dir: str = "data/cache"
    split_ratios: tuple = (0.7, 0.15, 0.15)
    split_seed: int = 0
    clip_percentiles: tuple = (1.0, 99.0)
    crop_top: int = 26
    crop_bottom: int = 80
    height: int = 120
    width: int = 120
    filter_tumor_slices: bool = True  # applied at training; evaluation keeps filtered set too
    phantom_subjects: int = 20
    phantom_shape: tuple = (28, 72, 72)
    phantom_seed: int = 7


@dataclass
class ScheduleConfig:
    timesteps: int = 1000
    kind: str = "linear"
    beta_min: float = 1e-4
    beta_max: float = 0.02


@dataclass
class DiffusionConfig:
    base_width: int = 32
    levels: int = 3
    epochs: int = 100
    batch_size: int = 4
    lr: float = 3e-4
    min_lr: float = 1.5e-4
    plateau_patience: int = 5
    early_stop_patience: int = 15
    recon_weight: float = 0.1  # gamma on the hybrid reconstruction term
    lambda_bce: float = 0.5
    lambda_dice: float = 0.5
    synth_steps: int = 100


@dataclass
class SegConfig:
    base_width: int = 32
    levels: int = 4
    epochs: int = 60
    batch_size: int = 4
    lr: float = 3e-4
    min_lr: float = 1.5e-4
    plateau_patience: int = 5
    early_stop_patience: int = 15
    lambda_bce: float = 0.5
    lambda_dice: float = 0.5
    val_tau: float = 0.3  # operating point used for early stopping


@dataclass
class ResidualConfig:
    source: str = "dynamic"  # dynamic | static | zero
    low_pct: float = 1.0
    high_pct: float = 99.0


@dataclass
class EvalConfig:
    taus: tuple = (0.3, 0.4, 0.5)
    tau: float = 0.3


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    segmentation: SegConfig = field(default_factory=SegConfig)
    residual: ResidualConfig = field(default_factory=ResidualConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    augment_prob: float = 0.4
    seed: int = 0

    def validate(self):
        if not 0.0 <= self.augment_prob <= 1.0:
            raise InvalidConfig(f"augment_prob must be in [0, 1], got {self.augment_prob}")
        if abs(sum(self.data.split_ratios) - 1.0) > 1e-9:
            raise InvalidConfig(f"split ratios must sum to 1, got {self.data.split_ratios}")
        if self.schedule.timesteps < 1:
            raise InvalidConfig("schedule.timesteps must be >= 1")
        if not 0.0 < self.schedule.beta_min <= self.schedule.beta_max < 1.0:
            raise InvalidConfig("need 0 < beta_min <= beta_max < 1")
        if self.residual.source not in ("dynamic", "static", "zero"):
            raise InvalidConfig(f"unknown residual source {self.residual.source!r}")
        if self.segmentation.lambda_bce == 0.0 and self.segmentation.lambda_dice == 0.0:
            raise InvalidConfig("segmentation loss weights are both zero: no learning signal")
        if not 1 <= self.diffusion.synth_steps <= self.schedule.timesteps:
            raise InvalidConfig("diffusion.synth_steps must lie in [1, timesteps]")
        for tau in tuple(self.eval.taus) + (self.eval.tau, self.segmentation.val_tau):
            if not 0.0 < tau < 1.0:
                raise InvalidConfig(f"threshold {tau} outside (0, 1)")
        if self.data.phantom_subjects < 1:
            raise InvalidConfig("data.phantom_subjects must be >= 1")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()


PROFILES = {
    "paper": {},  # dataclass defaults above record the full-scale recipe
    "quick": {
        "data": {
            "crop_top": 4,
            "crop_bottom": 4,
            "height": 64,
            "width": 64,
            "phantom_subjects": 20,
            "phantom_shape": (24, 72, 72),
        },
        "schedule": {"timesteps": 200},
        "diffusion": {"base_width": 32, "epochs": 60, "early_stop_patience": 60, "synth_steps": 100},
        "segmentation": {"base_width": 16, "epochs": 36, "early_stop_patience": 16},
        "augment_prob": 0.3,
    },
}


def _merge(obj, updates, path=""):
    for key, val in updates.items():
        if not hasattr(obj, key):
            raise InvalidConfig(f"unknown config key: {path}{key}")
        cur = getattr(obj, key)
        if dataclasses.is_dataclass(cur):
            if not isinstance(val, dict):
                raise InvalidConfig(f"section {path}{key} must be a mapping")
            _merge(cur, val, path=f"{path}{key}.")
        else:
            if isinstance(cur, tuple) and isinstance(val, list):
                val = tuple(tuple(v) if isinstance(v, list) else v for v in val)
            setattr(obj, key, val)


def load_config(path=None, profile="quick", overrides=None):
    """Build a RunConfig from profile defaults, an optional YAML file, and overrides."""
    if profile not in PROFILES:
        raise InvalidConfig(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    cfg = RunConfig()
    _merge(cfg, PROFILES[profile])
    if path is not None:
        with open(path) as f:
            loaded = yaml.safe_load(f) or {}
        if not isinstance(loaded, dict):
            raise InvalidConfig(f"{path}: top level must be a mapping")
        loaded = {k: v for k, v in loaded.items() if not k.startswith("_")}
        _merge(cfg, loaded)
    if overrides:
        _merge(cfg, overrides)
    return cfg.validate()


def save_config(cfg, path):
    """Write the resolved config plus its hash next to command outputs."""
    doc = cfg.to_dict()
    doc["_hash"] = cfg.hash()
    with open(path, "w") as f:
        yaml.safe_dump(doc, f, sort_keys=True)
