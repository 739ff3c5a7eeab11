"""ReLU-family activations, AReLU and summation ensembles.

An :class:`ActivationSpec` is the serializable description (kind plus fixed
constants and initial values); an :class:`Activation` is a live instance
holding the learnable tensors for one activation site.

Every kind is written as ``pos + slope * neg`` with ``pos = relu(x)`` and
``neg = x - relu(x)``; only the slope (and ELU's exponential) differ.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, ContractError
from .nn import Module
from .numerics import Tensor, ops

KINDS = ("relu", "leaky_relu", "rrelu", "elu", "prelu", "arelu")

AREL_CLAMP = (0.01, 0.99)


class Mode(str, enum.Enum):
    TRAIN = "train"
    EVAL = "eval"


@dataclass(frozen=True)
class ActivationSpec:
    kind: str
    alpha: Optional[float] = None
    beta: Optional[float] = None
    gamma: Optional[float] = None
    r: Optional[float] = None
    xi: Optional[float] = None
    l: Optional[float] = None  # noqa: E741 - lower RReLU bound
    u: Optional[float] = None
    members: tuple = field(default_factory=tuple)

    def __post_init__(self):
        required = {
            "relu": (),
            "leaky_relu": ("gamma",),
            "rrelu": ("l", "u"),
            "elu": ("r",),
            "prelu": ("xi",),
            "arelu": ("alpha", "beta"),
            "ensemble": (),
        }
        if self.kind not in required:
            raise ConfigError(f"unknown activation kind {self.kind!r}", "activation.kind")
        scalars = ("alpha", "beta", "gamma", "r", "xi", "l", "u")
        for name in scalars:
            present = getattr(self, name) is not None
            if present != (name in required[self.kind]):
                state = "missing" if not present else "not allowed"
                raise ConfigError(f"{name} {state} for {self.kind}", f"activation.{name}")
        if self.kind == "rrelu" and not 0 < self.l < self.u:
            raise ConfigError("rrelu needs 0 < l < u", "activation.l")
        if self.kind == "ensemble":
            if not self.members:
                raise ContractError("ensemble needs at least one member")
            if any(m.kind == "ensemble" for m in self.members):
                raise ConfigError("ensembles cannot be nested", "activation.members")
        elif self.members:
            raise ConfigError("members only apply to ensembles", "activation.members")

    @property
    def label(self) -> str:
        if self.kind == "ensemble":
            return "+".join(m.label for m in self.members)
        return self.kind

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if v is not None and k != "members"}
        if self.kind == "ensemble":
            d["members"] = [m.to_dict() for m in self.members]
        return d

    @classmethod
    def from_dict(cls, d) -> "ActivationSpec":
        if isinstance(d, str):
            return parse_activation(d)
        d = dict(d)
        members = tuple(cls.from_dict(m) for m in d.pop("members", ()))
        if d.get("kind") not in (None, "ensemble"):
            # unspecified parameters start at the kind's initial values
            d = {**activation_init(d["kind"]).to_dict(), **d}
        try:
            return cls(members=members, **d)
        except TypeError as exc:
            raise ConfigError(str(exc), "activation") from None


def activation_init(kind: str) -> ActivationSpec:
    """Spec for ``kind`` with its initial parameters.

    AReLU starts at alpha=0.9, beta=2.0 (nearly linear); the other constants
    are xi=0.25, gamma=0.2, r=1.0, l=0.125, u=0.333.
    """
    if kind == "ensemble":
        raise ContractError("use ensemble(...) to build an ensemble spec")
    defaults = {
        "relu": {},
        "leaky_relu": {"gamma": 0.2},
        "rrelu": {"l": 0.125, "u": 0.333},
        "elu": {"r": 1.0},
        "prelu": {"xi": 0.25},
        "arelu": {"alpha": 0.9, "beta": 2.0},
    }
    if kind not in defaults:
        raise ConfigError(f"unknown activation kind {kind!r}", "activation.kind")
    return ActivationSpec(kind, **defaults[kind])


def ensemble(*members) -> ActivationSpec:
    specs = tuple(activation_init(m) if isinstance(m, str) else m for m in members)
    return ActivationSpec("ensemble", members=specs)


def parse_activation(text: str) -> ActivationSpec:
    """``"arelu"`` or ``"relu+arelu+prelu"`` (the latter is an ensemble)."""
    parts = [p.strip() for p in text.split("+") if p.strip()]
    if len(parts) > 1 or text.startswith("ensemble:"):
        parts = [p.replace("ensemble:", "") for p in parts]
        return ensemble(*parts)
    return activation_init(parts[0])


class Activation(Module):
    """A single activation site.

    ``channels`` selects PReLU granularity: one slope per channel of a
    ``(N,) C x H x W`` map, or one shared slope when ``None``.
    """

    def __init__(self, spec: ActivationSpec, channels: Optional[int] = None, dtype=np.float32):
        self.spec = spec
        self.dtype = dtype
        if spec.kind == "ensemble":
            self.members = [Activation(m, channels, dtype) for m in spec.members]
        elif spec.kind == "arelu":
            self.alpha = Tensor(np.array([spec.alpha], dtype=dtype), requires_grad=True, copy=False)
            self.beta = Tensor(np.array([spec.beta], dtype=dtype), requires_grad=True, copy=False)
        elif spec.kind == "prelu":
            shape = (channels, 1, 1) if channels else (1,)
            self.xi = Tensor(np.full(shape, spec.xi, dtype=dtype), requires_grad=True, copy=False)

    def __call__(self, x: Tensor, mode: Mode = Mode.EVAL,
                 rng: Optional[np.random.Generator] = None) -> Tensor:
        return activation_forward(self, x, mode, rng)


def _split(x: Tensor):
    pos = ops.relu(x)
    return pos, x - pos


def activation_forward(act: Activation, x: Tensor, mode: Mode = Mode.EVAL,
                       rng: Optional[np.random.Generator] = None) -> Tensor:
    spec = act.spec
    kind = spec.kind
    if kind == "ensemble":
        return ensemble_forward(act, x, mode, rng)
    if kind == "relu":
        return ops.relu(x)
    pos, neg = _split(x)
    if kind == "leaky_relu":
        return pos + neg * spec.gamma
    if kind == "elu":
        return pos + (ops.exp(neg) - 1.0) * spec.r
    if kind == "prelu":
        return pos + neg * act.xi
    if kind == "rrelu":
        if Mode(mode) is Mode.TRAIN:
            if rng is None:
                raise ContractError("rrelu in train mode needs an rng")
            slopes = rng.uniform(spec.l, spec.u, size=x.shape).astype(x.dtype)
            return pos + neg * slopes
        return pos + neg * ((spec.l + spec.u) / 2.0)
    if kind == "arelu":
        lo, hi = AREL_CLAMP
        return ops.clamp(act.alpha, lo, hi) * neg + (ops.sigmoid(act.beta) + 1.0) * pos
    raise ConfigError(f"unknown activation kind {kind!r}", "activation.kind")


def ensemble_forward(act: Activation, x: Tensor, mode: Mode = Mode.EVAL,
                     rng: Optional[np.random.Generator] = None) -> Tensor:
    """Elementwise sum of every member applied to the same input."""
    members = getattr(act, "members", None)
    if not members:
        raise ContractError("ensemble has no members")
    out = activation_forward(members[0], x, mode, rng)
    for member in members[1:]:
        out = out + activation_forward(member, x, mode, rng)
    return out


def elsa(act: Activation, x: Tensor) -> Tensor:
    """The learnable residue of AReLU: AReLU(x) - ReLU(x)."""
    if act.spec.kind != "arelu":
        raise ContractError("elsa is defined for arelu only")
    lo, hi = AREL_CLAMP
    pos, neg = _split(x)
    return ops.clamp(act.alpha, lo, hi) * neg + ops.sigmoid(act.beta) * pos
