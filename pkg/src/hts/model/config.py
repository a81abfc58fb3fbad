"""Architecture configuration and the two named presets."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

TASKS = {"age8": 8, "gender2": 1}


class ConfigError(ValueError):
    """Inconsistent model configuration."""


@dataclass(frozen=True)
class PatchConfig:
    height: int = 224
    width: int = 224
    channels: int = 3
    patch: int = 32
    dim: int = 768

    def __post_init__(self):
        if self.patch < 1 or self.height % self.patch or self.width % self.patch:
            raise ConfigError(
                f"patch size {self.patch} must divide image {self.height}x{self.width}"
            )

    @property
    def grid(self) -> tuple[int, int]:
        return self.height // self.patch, self.width // self.patch

    @property
    def num_patches(self) -> int:
        return self.height * self.width // (self.patch * self.patch)

    @property
    def patch_len(self) -> int:
        return self.patch * self.patch * self.channels


@dataclass(frozen=True)
class EncoderConfig:
    layers: int = 12
    heads: int = 12
    dim: int = 768
    mlp_dim: int = 3072
    include_class_token: bool = True
    dropout_rate: float = 0.0
    ln_eps: float = 1e-6

    def __post_init__(self):
        if self.layers < 1:
            raise ConfigError("encoder needs at least one layer")
        if self.heads < 1 or self.dim % self.heads:
            raise ConfigError(f"{self.heads} heads do not divide width {self.dim}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must lie in [0, 1)")


@dataclass(frozen=True)
class SequencerConfig:
    units1: int = 128
    units2: int = 64
    epsilon_bn: float = 1e-5
    momentum: float = 0.99

    def __post_init__(self):
        if self.units1 < 1 or self.units2 < 1:
            raise ConfigError("BiLSTM widths must be positive")


@dataclass(frozen=True)
class ModelSpec:
    task: str = "age8"
    patch: PatchConfig = field(default_factory=PatchConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    sequencer: SequencerConfig = field(default_factory=SequencerConfig)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.patch.dim != self.encoder.dim:
            raise ConfigError("patch embedding width must equal encoder width")

    @property
    def head_classes(self) -> int:
        return TASKS[self.task]

    @property
    def num_classes(self) -> int:
        """Label cardinality (2 for the single-logit gender head)."""
        return max(2, self.head_classes)

    @property
    def num_tokens(self) -> int:
        return self.patch.num_patches + int(self.encoder.include_class_token)

    @property
    def feature_dim(self) -> int:
        return self.encoder.dim + 2 * self.sequencer.units1 + 2 * self.sequencer.units2

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return self.patch.height, self.patch.width, self.patch.channels

    def with_task(self, task: str) -> ModelSpec:
        return replace(self, task=task)

    def to_text(self) -> str:
        """Canonical ``section.key=value`` lines, sorted, newline-terminated."""
        lines = [f"task={self.task}"]
        for section in ("patch", "encoder", "sequencer"):
            for k, v in sorted(asdict(getattr(self, section)).items()):
                lines.append(f"{section}.{k}={_fmt(v)}")
        return "\n".join(sorted(lines)) + "\n"

    @classmethod
    def from_text(cls, text: str) -> ModelSpec:
        kv = {}
        for line in text.splitlines():
            if line.strip():
                k, _, v = line.partition("=")
                kv[k.strip()] = v.strip()
        parts = {}
        for section, typ in (("patch", PatchConfig), ("encoder", EncoderConfig),
                             ("sequencer", SequencerConfig)):
            args = {}
            for f in fields(typ):
                key = f"{section}.{f.name}"
                if key in kv:
                    args[f.name] = _parse(kv[key], type(getattr(typ(), f.name)))
            parts[section] = typ(**args)
        return cls(task=kv.get("task", "age8"), **parts)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v)


def _parse(s: str, typ):
    if typ is bool:
        return s.lower() in ("1", "true", "yes", "on")
    return typ(s)


def vitb32(task: str = "age8") -> ModelSpec:
    return ModelSpec(
        task=task,
        patch=PatchConfig(224, 224, 3, 32, 768),
        encoder=EncoderConfig(layers=12, heads=12, dim=768, mlp_dim=3072),
        sequencer=SequencerConfig(),
    )


def toy(task: str = "age8") -> ModelSpec:
    return ModelSpec(
        task=task,
        patch=PatchConfig(32, 32, 3, 8, 16),
        encoder=EncoderConfig(layers=2, heads=2, dim=16, mlp_dim=32),
        sequencer=SequencerConfig(),
    )


PRESETS = {"toy": toy, "vitb32": vitb32}


def preset(name: str, task: str = "age8") -> ModelSpec:
    try:
        return PRESETS[name](task)
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
