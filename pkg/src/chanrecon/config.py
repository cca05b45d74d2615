"""Run configuration: one YAML file holding every knob the method leaves
open, validated up front so a config that loads can't fail a module
precondition later.

Defaults are the desk-scale choices: 32 x 32 pixels, T=100 linear schedule
from 1e-4 to 0.02, t_star = T/2, green channel, threshold 0.5.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import yaml

from .errors import ConfigError
from .image import Channel

DATA_KINDS = ("toy", "manifest")


@dataclass
class ScheduleConfig:
    T: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.02
    kind: str = "linear"


@dataclass
class DenoiserConfig:
    base_width: int = 32
    time_dim: int = 128
    epochs: int = 30
    batch_size: int = 64
    lr: float = 2e-3


@dataclass
class ClassifierConfig:
    arch: str = "small_cnn"
    base_width: int = 32
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    weight_decay: float = 1e-4
    plateau_factor: float = 0.5
    plateau_patience: int = 2
    early_stop_patience: int = 5
    crop_padding: int = 4
    hflip: bool = True
    mixed_precision: bool = False


@dataclass
class DataConfig:
    kind: str = "toy"
    root: str = ""           # manifest kind: existing tree; toy kind: created under out_dir
    n_real: int = 512
    n_fake: int = 256
    split_fractions: tuple = (0.625, 0.1875, 0.1875)  # train/val/test
    generator_tag: str = "toy-ddpm"


@dataclass
class RobustnessConfig:
    enabled: bool = False
    jpeg_qualities: tuple = (90, 70, 50, 40, 30)
    blur_sigmas: tuple = (0.0, 0.5, 1.0, 2.0, 3.0)
    noise_sigmas: tuple = (0.0, 0.05, 0.10, 0.15, 0.30)
    max_images: int | None = None  # stratified subsample of the test split


@dataclass
class RunConfig:
    out_dir: str = "runs/default"
    resolution: int = 32
    channels: tuple = ("G",)
    t_star: int = 50
    threshold: float = 0.5
    error_reference: str = "original"
    seed: int = 1234
    viz_samples: int = 4
    record_timestamp: bool = False
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    data: DataConfig = field(default_factory=DataConfig)
    robustness: RobustnessConfig = field(default_factory=RobustnessConfig)

    # ---- validation ----

    def validate(self) -> "RunConfig":
        if self.resolution < 16 or self.resolution % 8 != 0:
            raise ConfigError("resolution must be a multiple of 8 and at least 16")
        if not self.channels:
            raise ConfigError("at least one channel must be selected")
        for ch in self.channels:
            Channel.parse(ch)
        if len(set(self.channels)) != len(self.channels):
            raise ConfigError("channels must be distinct")
        s = self.schedule
        if not isinstance(s.T, int) or s.T < 1:
            raise ConfigError("schedule.T must be a positive integer")
        if not 0.0 < s.beta_start <= s.beta_end < 1.0:
            raise ConfigError("need 0 < beta_start <= beta_end < 1")
        if s.kind != "linear":
            raise ConfigError(f"unsupported schedule kind {s.kind!r}")
        if not 1 <= self.t_star <= s.T:
            raise ConfigError(f"t_star must lie in [1, {s.T}]")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("threshold must lie in (0, 1)")
        if self.error_reference not in ("original", "channel_removed"):
            raise ConfigError("error_reference must be 'original' or 'channel_removed'")
        for name, cfg in (("denoiser", self.denoiser), ("classifier", self.classifier)):
            if cfg.epochs < 1 or cfg.batch_size < 1 or cfg.lr <= 0:
                raise ConfigError(f"{name}: epochs/batch_size must be >= 1 and lr > 0")
        if self.denoiser.base_width < 8:
            raise ConfigError("denoiser.base_width must be at least 8")
        c = self.classifier
        if c.arch not in ("small_cnn", "resnet50"):
            raise ConfigError(f"unknown classifier arch {c.arch!r}")
        if c.early_stop_patience < 0 or c.plateau_patience < 0:
            raise ConfigError("patience values must be nonnegative")
        if not 0.0 < c.plateau_factor < 1.0:
            raise ConfigError("plateau_factor must lie in (0, 1)")
        if c.crop_padding < 0:
            raise ConfigError("crop_padding must be nonnegative")
        d = self.data
        if d.kind not in DATA_KINDS:
            raise ConfigError(f"data.kind must be one of {DATA_KINDS}")
        if d.kind == "manifest" and not d.root:
            raise ConfigError("data.root is required for manifest datasets")
        if d.kind == "toy":
            if d.n_real < 8 or d.n_fake < 8:
                raise ConfigError("toy dataset needs at least 8 images per class")
            fr = tuple(float(f) for f in d.split_fractions)
            if len(fr) != 3 or any(f <= 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
                raise ConfigError("split_fractions must be three positive numbers summing to 1")
        r = self.robustness
        for q in r.jpeg_qualities:
            if not 1 <= int(q) <= 100 or int(q) != q:
                raise ConfigError(f"jpeg quality {q!r} outside [1, 100]")
        for sig in tuple(r.blur_sigmas) + tuple(r.noise_sigmas):
            if sig < 0:
                raise ConfigError(f"perturbation sigma {sig!r} must be nonnegative")
        if r.enabled and not (r.jpeg_qualities or r.blur_sigmas or r.noise_sigmas):
            raise ConfigError("robustness enabled but every grid is empty")
        if r.max_images is not None and r.max_images < 4:
            raise ConfigError("robustness.max_images must be at least 4")
        if self.viz_samples < 0:
            raise ConfigError("viz_samples must be nonnegative")
        return self

    # ---- identity ----

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=True)


_SECTION_TYPES = {
    "schedule": ScheduleConfig,
    "denoiser": DenoiserConfig,
    "classifier": ClassifierConfig,
    "data": DataConfig,
    "robustness": RobustnessConfig,
}
_TUPLE_FIELDS = {"channels", "split_fractions", "jpeg_qualities", "blur_sigmas", "noise_sigmas"}


def config_from_dict(payload: dict) -> RunConfig:
    if not isinstance(payload, dict):
        raise ConfigError("config file must hold a mapping at the top level")
    cfg = RunConfig()
    for key, value in payload.items():
        if key in _SECTION_TYPES:
            if not isinstance(value, dict):
                raise ConfigError(f"section {key!r} must be a mapping")
            section = getattr(cfg, key)
            for sub_key, sub_value in value.items():
                if not hasattr(section, sub_key):
                    raise ConfigError(f"unknown config key {key}.{sub_key}")
                if sub_key in _TUPLE_FIELDS:
                    sub_value = tuple(sub_value)
                setattr(section, sub_key, sub_value)
        elif hasattr(cfg, key):
            if key in _TUPLE_FIELDS:
                value = tuple(value)
            setattr(cfg, key, value)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return cfg.validate()


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path!r} not found")
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})")
    return config_from_dict(payload or {})
