from __future__ import annotations

from dataclasses import dataclass, field, fields

from ..activations import ActivationSpec, activation_init
from ..errors import ConfigError

ARCHS = ("resnet18", "se_resnet18")
POLICIES = ("first_last_only", "all_sites")


@dataclass
class ModelConfig:
    """Architecture plan.  Defaults reproduce the full ResNet-18 layer table."""

    arch: str = "se_resnet18"
    activation: ActivationSpec = field(default_factory=lambda: activation_init("arelu"))
    interior_activation_policy: str = "first_last_only"
    share_first_last: bool = True
    use_batchnorm: bool = True
    se_reduction: int = 8
    embedding_dim: int = 256
    n_freq: int = 60
    first_channels: int = 16
    first_kernel: int = 9
    first_stride: tuple = (3, 1)
    stage_channels: tuple = (64, 128, 256, 512)
    stage_strides: tuple = (1, 2, 2, 2)
    blocks_per_stage: int = 2
    final_channels: int = 256
    attention_dim: int = 128
    var_floor: float = 1e-9
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1

    def __post_init__(self):
        if isinstance(self.activation, (dict, str)):
            self.activation = ActivationSpec.from_dict(self.activation)
        self.first_stride = tuple(self.first_stride)
        self.stage_channels = tuple(self.stage_channels)
        self.stage_strides = tuple(self.stage_strides)
        self.validate()

    def validate(self) -> None:
        if self.arch not in ARCHS:
            raise ConfigError(f"must be one of {ARCHS}", "model.arch")
        if self.interior_activation_policy not in POLICIES:
            raise ConfigError(f"must be one of {POLICIES}", "model.interior_activation_policy")
        if len(self.stage_channels) != len(self.stage_strides) or not self.stage_channels:
            raise ConfigError("stage_channels and stage_strides must have equal nonzero length",
                              "model.stage_channels")
        ints = {
            "embedding_dim": self.embedding_dim, "n_freq": self.n_freq,
            "first_channels": self.first_channels, "first_kernel": self.first_kernel,
            "blocks_per_stage": self.blocks_per_stage, "final_channels": self.final_channels,
            "attention_dim": self.attention_dim, "se_reduction": self.se_reduction,
        }
        for name, value in ints.items():
            if int(value) != value or value < 1:
                raise ConfigError("must be a positive integer", f"model.{name}")
        for i, c in enumerate(self.stage_channels):
            if c < 1:
                raise ConfigError("must be positive", f"model.stage_channels[{i}]")
            if self.arch == "se_resnet18" and c % self.se_reduction:
                raise ConfigError(f"se_reduction {self.se_reduction} does not divide {c}",
                                  "model.se_reduction")
        if any(s < 1 for s in self.stage_strides) or len(self.first_stride) != 2:
            raise ConfigError("strides must be positive", "model.stage_strides")
        if self.n_freq < self.first_kernel:
            raise ConfigError("first kernel taller than the feature map", "model.first_kernel")
        if not self.var_floor > 0:
            raise ConfigError("must be positive", "model.var_floor")

    @classmethod
    def desk_scale(cls, **overrides) -> "ModelConfig":
        """Width-reduced variant of the same layer plan, for CPU-sized experiments."""
        base = dict(first_channels=8, stage_channels=(8, 16, 32, 64), final_channels=32,
                    embedding_dim=32, attention_dim=16, se_reduction=4)
        return cls(**{**base, **overrides})

    @property
    def time_reduction(self) -> int:
        r = self.first_stride[1]
        for s in self.stage_strides:
            r *= s
        return r

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, ActivationSpec):
                value = value.to_dict()
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", "model")
        return cls(**d)
