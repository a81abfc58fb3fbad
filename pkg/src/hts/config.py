"""Run configuration: defaults, then a config file, then command-line flags.

The file is UTF-8 ``key = value`` text.  Section headers may be used to
group keys but carry no meaning; every key must name a :class:`RunConfig`
field.
"""

from __future__ import annotations

import configparser
import dataclasses
import types
import typing
from dataclasses import dataclass
from pathlib import Path

from .data.transforms import AugmentConfig
from .model.config import TASKS, ModelSpec, preset
from .training.loop import TrainConfig


class RunConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    task: str = "age8"
    preset: str = "toy"
    seed: int = 0
    out: str = "out"
    # data
    manifest: str = ""
    image_root: str = ""
    image_size: int = 0  # 0: the preset's input resolution
    n: int = 64
    classes: int = 0  # 0: follow the task
    detector: str = "manifest"
    threshold: float = 0.9
    crop: bool = True
    # training
    lr: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 100
    smoothing: float | None = None  # None: 0.2 for age, 0 for gender
    plateau_patience: int = 2
    plateau_factor: float = 0.2
    lr_floor: float = 1e-6
    early_stop_patience: int = 5
    min_delta: float = 1e-4
    val_fraction: float = 0.2
    # augmentation
    augment: bool = False
    flip_prob: float = 0.5
    transpose_prob: float = 0.25
    saturation_lo: float = 0.8
    saturation_hi: float = 1.2
    rotation: float = 15.0
    # cross-validation and evaluation
    k: int = 5
    compare_augment: bool = False
    checkpoint: str = ""
    split: str = "all"
    gradcheck_coords: int = 6
    plots: bool = True

    def __post_init__(self):
        if self.task not in TASKS:
            raise RunConfigError(f"task must be one of {sorted(TASKS)}, got {self.task!r}")
        if self.split not in ("all", "train", "val"):
            raise RunConfigError(f"split must be all, train or val, got {self.split!r}")
        if self.max_epochs < 1 or self.batch_size < 1:
            raise RunConfigError("max_epochs and batch_size must be positive")
        if self.lr < 0:
            raise RunConfigError("lr must be non-negative")

    def spec(self) -> ModelSpec:
        try:
            return preset(self.preset, self.task)
        except ValueError as exc:
            raise RunConfigError(str(exc)) from None

    def working_size(self) -> int:
        return self.image_size or self.spec().patch.height

    def augment_config(self) -> AugmentConfig:
        return AugmentConfig(self.flip_prob, self.transpose_prob,
                             (self.saturation_lo, self.saturation_hi), self.rotation, self.seed)

    def train_config(self, augment: bool | None = None) -> TrainConfig:
        augment = self.augment if augment is None else augment
        return TrainConfig(
            lr=self.lr, batch_size=self.batch_size, max_epochs=self.max_epochs,
            smoothing=self.smoothing, plateau_patience=self.plateau_patience,
            plateau_factor=self.plateau_factor, lr_floor=self.lr_floor,
            early_stop_patience=self.early_stop_patience, min_delta=self.min_delta,
            seed=self.seed, augment=self.augment_config() if augment else None,
        )

    def snapshot(self) -> dict:
        return dataclasses.asdict(self)


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def field_types() -> dict[str, typing.Any]:
    return typing.get_type_hints(RunConfig)


def coerce(key: str, text: str):
    """Parse ``text`` as the type of field ``key``."""
    hints = field_types()
    if key not in hints:
        raise RunConfigError(f"unknown config key {key!r}")
    typ = hints[key]
    text = text.strip()
    if typing.get_origin(typ) in (typing.Union, types.UnionType):
        if text.lower() in ("", "none"):
            return None
        typ = next(a for a in typing.get_args(typ) if a is not type(None))
    if typ is bool:
        low = text.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise RunConfigError(f"{key}: expected on/off, got {text!r}")
    try:
        return typ(text)
    except ValueError:
        raise RunConfigError(f"{key}: cannot parse {text!r} as {typ.__name__}") from None


def read_config_file(path) -> dict:
    """Flatten every section of a ``key = value`` file into one mapping."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    parser.optionxform = str
    text = Path(path).read_text(encoding="utf-8")
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise RunConfigError(f"{path}: {exc}") from None
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            key = key.replace("-", "_")
            if key in values:
                raise RunConfigError(f"{path}: key {key!r} set twice")
            values[key] = coerce(key, raw)
    return values


def resolve_config(file_path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults < file < ``overrides``."""
    values = {}
    if file_path:
        values.update(read_config_file(file_path))
    values.update(overrides or {})
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise RunConfigError(str(exc)) from None
