"""Building blocks of the embedding network."""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..activations import Activation, Mode, activation_init
from ..errors import ConfigError, ContractError, DomainError
from ..nn import BatchNorm2d, Conv2d, Linear, Module
from ..numerics import Tensor, ops


class SEBlock(Module):
    """Squeeze-and-excitation channel gate."""

    def __init__(self, channels: int, reduction: int, rng=None, dtype=np.float32):
        if reduction < 1 or channels % reduction:
            raise ConfigError(f"reduction {reduction} does not divide {channels} channels",
                              "model.se_reduction")
        hidden = channels // reduction
        self.fc1 = Linear(channels, hidden, rng=rng, dtype=dtype)
        self.fc2 = Linear(hidden, channels, rng=rng, dtype=dtype)

    def gate(self, x: Tensor) -> Tensor:
        squeezed = ops.mean(x, axis=(2, 3))
        return ops.sigmoid(self.fc2(ops.relu(self.fc1(squeezed))))

    def __call__(self, x: Tensor) -> Tensor:
        return se_block(self, x)


def se_block(block: SEBlock, x: Tensor) -> Tensor:
    """Scale each channel of ``x`` (``(N,) C x H x W``) by its learned gate."""
    unbatched = x.ndim == 3
    if unbatched:
        x = ops.reshape(x, (1,) + x.shape)
    g = block.gate(x)
    out = x * ops.reshape(g, g.shape + (1, 1))
    return ops.reshape(out, out.shape[1:]) if unbatched else out


class AttentiveStatsPool(Module):
    """Attention-weighted mean and standard deviation over time.

    Frame scores are ``v . tanh(W h_t + b)``, normalized with a softmax over
    time; the output concatenates the weighted mean and the weighted standard
    deviation (variance floored at ``eps``).
    """

    def __init__(self, channels: int, attention_dim: int = 128, eps: float = 1e-9,
                 rng=None, dtype=np.float32):
        self.eps = eps
        self.proj = Linear(channels, attention_dim, rng=rng, dtype=dtype)
        self.score = Linear(attention_dim, 1, bias=False, rng=rng, dtype=dtype)

    def weights(self, h: Tensor) -> Tensor:
        # h: N x T x C
        e = self.score(ops.tanh(self.proj(h)))
        return ops.softmax(ops.reshape(e, e.shape[:2]), axis=1)

    def __call__(self, frames: Tensor) -> Tensor:
        return attentive_stats_pool(self, frames)


def attentive_stats_pool(pool: AttentiveStatsPool, frames: Tensor,
                         weights: Optional[Tensor] = None) -> Tensor:
    """Pool ``(N,) C x T`` frames into ``(N,) 2C`` statistics.

    ``weights`` (``N x T``) overrides the learned attention, e.g. to force
    uniform weighting.
    """
    unbatched = frames.ndim == 2
    if unbatched:
        frames = ops.reshape(frames, (1,) + frames.shape)
    if frames.ndim != 3 or frames.shape[2] < 1:
        raise ContractError(f"attentive pooling needs C x T frames with T >= 1, got {frames.shape}")
    h = ops.transpose(frames, (0, 2, 1))
    a = pool.weights(h) if weights is None else weights
    a3 = ops.reshape(a, a.shape + (1,))
    mu = ops.sum(h * a3, axis=1)
    second = ops.sum(h * h * a3, axis=1)
    var = ops.maximum(second - mu * mu, pool.eps)
    out = ops.concat([mu, ops.sqrt(var)], axis=1)
    return ops.reshape(out, out.shape[1:]) if unbatched else out


class ConvUnit(Module):
    """conv -> (BN) -> optional activation."""

    def __init__(self, c_in, c_out, kernel, stride, pad, use_bn, rng, dtype, bn_eps=1e-5,
                 bn_momentum=0.1):
        self.conv = Conv2d(c_in, c_out, kernel, stride, pad, bias=not use_bn, rng=rng, dtype=dtype)
        self.bn = BatchNorm2d(c_out, bn_eps, bn_momentum, dtype=dtype) if use_bn else None

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        y = self.conv(x)
        return self.bn(y, train) if self.bn is not None else y


class ResidualBlock(Module):
    """Two 3x3 conv units with an identity or 1x1 projection shortcut.

    ``conv-BN-act-conv-BN [-SE] + shortcut -> act``.
    """

    def __init__(self, c_in: int, c_out: int, stride: int, act1: Activation, act2: Activation,
                 use_bn: bool, se_reduction: Optional[int], rng, dtype, bn_eps=1e-5,
                 bn_momentum=0.1):
        self.unit1 = ConvUnit(c_in, c_out, 3, stride, 1, use_bn, rng, dtype, bn_eps, bn_momentum)
        self.act1 = act1
        self.unit2 = ConvUnit(c_out, c_out, 3, 1, 1, use_bn, rng, dtype, bn_eps, bn_momentum)
        self.se = SEBlock(c_out, se_reduction, rng=rng, dtype=dtype) if se_reduction else None
        self.shortcut = None
        if stride != 1 or c_in != c_out:
            self.shortcut = ConvUnit(c_in, c_out, 1, stride, 0, use_bn, rng, dtype, bn_eps,
                                     bn_momentum)
        self.act2 = act2

    def __call__(self, x: Tensor, mode: Mode, rng=None) -> Tensor:
        train = mode is Mode.TRAIN
        y = self.act1(self.unit1(x, train), mode, rng)
        y = self.unit2(y, train)
        if self.se is not None:
            y = self.se(y)
        skip = x if self.shortcut is None else self.shortcut(x, train)
        return self.act2(y + skip, mode, rng)


def cosine_to(embeddings: Tensor, direction: Tensor) -> Tensor:
    """Cosine between each row of ``embeddings`` (N x D) and ``direction`` (D)."""
    e_norm = np.sqrt(np.sum(embeddings.data.astype(np.float64) ** 2, axis=-1))
    if np.any(e_norm == 0):
        raise DomainError("cannot normalize a zero-norm embedding")
    if not np.any(direction.data):
        raise DomainError("cannot normalize a zero-norm target direction")
    e_hat = embeddings / ops.sqrt(ops.sum(embeddings * embeddings, axis=-1, keepdims=True))
    w_hat = direction / ops.sqrt(ops.sum(direction * direction))
    # rounding can push |cos| a hair past 1
    return ops.clamp(ops.sum(e_hat * w_hat, axis=-1), -1.0, 1.0)


def relu_site(channels: int, dtype) -> Activation:
    return Activation(activation_init("relu"), channels, dtype)
