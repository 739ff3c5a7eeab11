"""Adam with bias correction, and the step-decay learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..errors import ContractError, TrainingError


@dataclass
class AdamHyper:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState,
              hyper: AdamHyper, t: int, names: Optional[Sequence[str]] = None) -> tuple:
    """One bias-corrected Adam update; returns ``(new_params, new_state)``.

    Inputs are not modified.  A non-finite gradient aborts the whole step
    before anything is updated.
    """
    if t < 1:
        raise ContractError(f"step counter must be >= 1, got {t}")
    if len(params) != len(grads):
        raise ContractError("params and grads differ in length")
    names = names or [f"param[{i}]" for i in range(len(params))]
    for name, p, g in zip(names, params, grads):
        if np.shape(p) != np.shape(g):
            raise ContractError(f"{name}: gradient shape {np.shape(g)} != parameter shape {np.shape(p)}")
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in {name}; step aborted")
    m_prev = state.m or [np.zeros_like(p) for p in params]
    v_prev = state.v or [np.zeros_like(p) for p in params]
    b1, b2 = hyper.beta1, hyper.beta2
    c1, c2 = 1.0 - b1 ** t, 1.0 - b2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, m_prev, v_prev):
        g = np.asarray(g, dtype=p.dtype)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        step = hyper.lr * (m / c1) / (np.sqrt(v / c2) + hyper.eps)
        new_p.append((p - step).astype(p.dtype, copy=False))
        new_m.append(m.astype(p.dtype, copy=False))
        new_v.append(v.astype(p.dtype, copy=False))
    return new_p, AdamState(new_m, new_v, t)


class Adam:
    """Stateful wrapper that updates :class:`Tensor` parameters in place."""

    def __init__(self, named_params: Sequence, hyper: Optional[AdamHyper] = None):
        self.named_params = list(named_params)
        self.hyper = hyper or AdamHyper()
        self.state = AdamState()

    def step(self) -> None:
        names = [n for n, _ in self.named_params]
        tensors = [p for _, p in self.named_params]
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in tensors]
        new_p, self.state = adam_step([p.data for p in tensors], grads, self.state, self.hyper,
                                      self.state.t + 1, names)
        for p, data in zip(tensors, new_p):
            p.data = data


def lr_at(epoch: int, cfg) -> float:
    """``lr0 * decay_rate ** floor(epoch / decay_interval)``."""
    if epoch < 0:
        raise ContractError(f"epoch must be >= 0, got {epoch}")
    return cfg.lr0 * cfg.decay_rate ** math.floor(epoch / cfg.decay_interval)
