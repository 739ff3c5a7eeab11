"""One-class softmax objective."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from ..errors import ConfigError, ContractError
from ..model.layers import cosine_to
from ..numerics import Tensor, ops


@dataclass
class OcsParams:
    """Scale ``k`` and margins ``m0`` (bona fide) / ``m1`` (spoof).

    ``w0`` is the learnable target direction; when training a
    :class:`~spoofcm.model.SpoofNet` it is the model's own ``w0``.
    """

    k: float = 20.0
    m0: float = 0.9
    m1: float = 0.2
    w0: Optional[Tensor] = None

    def __post_init__(self):
        if not self.m0 > self.m1:
            raise ConfigError(f"m0 ({self.m0}) must exceed m1 ({self.m1})", "ocs.m0")
        if not self.k > 0:
            raise ConfigError("must be positive", "ocs.k")

    def to_dict(self) -> dict:
        return {"k": self.k, "m0": self.m0, "m1": self.m1}

    @classmethod
    def from_dict(cls, d: dict) -> "OcsParams":
        unknown = set(d) - {"k", "m0", "m1"}
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", "ocs")
        return cls(**d)


def ocs_terms(embeddings: Tensor, labels, p: OcsParams) -> Tensor:
    """Per-sample softplus(k (m_y - cos) (-1)^y)."""
    labels = np.asarray(labels)
    if p.w0 is None:
        raise ContractError("OcsParams.w0 is not set")
    if labels.shape != (embeddings.shape[0],) or not np.isin(labels, (0, 1)).all():
        raise ContractError("labels must be a 0/1 vector with one entry per embedding row")
    if p.w0.shape != (embeddings.shape[-1],):
        raise ContractError(f"w0 has shape {p.w0.shape}, embeddings have D={embeddings.shape[-1]}")
    dt = embeddings.dtype
    margin = np.where(labels == 0, p.m0, p.m1).astype(dt)
    sign = np.where(labels == 0, 1.0, -1.0).astype(dt)
    cos = cosine_to(embeddings, p.w0)
    return ops.softplus((Tensor(margin) - cos) * Tensor(p.k * sign))


def ocs_loss(embeddings: Tensor, labels, p: OcsParams) -> Tensor:
    """Mean one-class softmax loss over the batch; label 0 = bona fide."""
    return ops.mean(ocs_terms(embeddings, labels, p))
