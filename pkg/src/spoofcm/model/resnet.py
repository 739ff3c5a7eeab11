"""ResNet-18 / SE-ResNet-18 embedding network with a one-class head."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..activations import Activation, Mode
from ..errors import ContractError
from ..nn import Linear, Module
from ..numerics import Tensor, ops
from .config import ModelConfig
from .layers import AttentiveStatsPool, ConvUnit, ResidualBlock, cosine_to, relu_site


@dataclass
class ModelOutput:
    embedding: Tensor       # N x D
    cosine_score: Tensor    # N, cosine to the target direction; higher = more bona fide
    softmax_logits: Tensor  # N x 2, (bona fide, spoof)
    trace: Optional[list] = None


class SpoofNet(Module):
    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        bn = cfg.use_batchnorm
        eps, mom = cfg.bn_eps, cfg.bn_momentum
        k = cfg.first_kernel

        self.first = ConvUnit(1, cfg.first_channels, k, cfg.first_stride, (0, k // 2), bn, rng,
                              dtype, eps, mom)
        # a shared per-channel PReLU slope cannot span different widths; fall back to one slope
        share = cfg.share_first_last
        first_ch = cfg.first_channels
        if share and _per_channel(cfg) and cfg.first_channels != cfg.final_channels:
            first_ch = None
        self.first_act = Activation(cfg.activation, first_ch, dtype)

        interior = cfg.interior_activation_policy == "all_sites"

        def site(channels):
            return Activation(cfg.activation, channels, dtype) if interior else relu_site(channels, dtype)

        se = cfg.se_reduction if cfg.arch == "se_resnet18" else None
        self.blocks = []
        c_in = cfg.first_channels
        for c_out, stride in zip(cfg.stage_channels, cfg.stage_strides):
            for b in range(cfg.blocks_per_stage):
                s = stride if b == 0 else 1
                self.blocks.append(ResidualBlock(c_in, c_out, s, site(c_out), site(c_out), bn, se,
                                                 rng, dtype, eps, mom))
                c_in = c_out

        # final conv collapses the remaining frequency rows
        last_h = self.frequency_rows()[-1]
        self.final = ConvUnit(c_in, cfg.final_channels, (last_h, 3), 1, (0, 1), bn, rng, dtype,
                              eps, mom)
        if share:
            self.last_act = self.first_act
        else:
            self.last_act = Activation(cfg.activation, cfg.final_channels, dtype)

        self.pool = AttentiveStatsPool(cfg.final_channels, cfg.attention_dim, cfg.var_floor,
                                       rng=rng, dtype=dtype)
        self.fc = Linear(2 * cfg.final_channels, cfg.embedding_dim, rng=rng, dtype=dtype)
        self.w0 = Tensor(rng.standard_normal(cfg.embedding_dim).astype(dtype), requires_grad=True,
                         copy=False)

    def frequency_rows(self) -> list:
        cfg = self.cfg
        h = (cfg.n_freq - cfg.first_kernel) // cfg.first_stride[0] + 1
        rows = [h]
        for stride in cfg.stage_strides:
            h = (h + 2 - 3) // stride + 1
            rows.append(h)
        return rows

    def __call__(self, features, mode=Mode.EVAL, rng=None, trace=False) -> ModelOutput:
        return forward(self, features, mode, rng, trace)


def _per_channel(cfg: ModelConfig) -> bool:
    spec = cfg.activation
    kinds = [m.kind for m in spec.members] if spec.kind == "ensemble" else [spec.kind]
    return "prelu" in kinds


def build_model(cfg: ModelConfig, seed: int = 0, dtype=np.float32) -> SpoofNet:
    return SpoofNet(cfg, seed, dtype)


def forward(model: SpoofNet, features, mode=Mode.EVAL, rng: Optional[np.random.Generator] = None,
            trace: bool = False) -> ModelOutput:
    """Run the network on ``60 x L`` or batched ``N x 60 x L`` features."""
    mode = Mode(mode)
    x = features if isinstance(features, Tensor) else Tensor(np.asarray(features, dtype=model.dtype),
                                                             copy=False)
    if x.ndim == 2:
        x = ops.reshape(x, (1, 1) + x.shape)
    elif x.ndim == 3:
        x = ops.reshape(x, (x.shape[0], 1) + x.shape[1:])
    cfg = model.cfg
    if x.ndim != 4 or x.shape[1] != 1 or x.shape[2] != cfg.n_freq:
        raise ContractError(f"expected {cfg.n_freq} x L features, got {features.shape}")
    if x.shape[3] < cfg.time_reduction:
        raise ContractError(f"input too short: L={x.shape[3]} < {cfg.time_reduction}")
    train = mode is Mode.TRAIN
    shapes = [("input", x.shape[1:])] if trace else None

    h = model.first_act(model.first(x, train), mode, rng)
    if trace:
        shapes.append(("conv1", h.shape[1:]))
    for i, block in enumerate(model.blocks):
        h = block(h, mode, rng)
        if trace and (i + 1) % cfg.blocks_per_stage == 0:
            shapes.append((f"stage{(i + 1) // cfg.blocks_per_stage}", h.shape[1:]))
    h = model.last_act(model.final(h, train), mode, rng)
    if trace:
        shapes.append(("conv_final", h.shape[1:]))
    n, c, fh, t = h.shape
    pooled = model.pool(ops.reshape(h, (n, c * fh, t)))
    emb = model.fc(pooled)
    cos = cosine_to(emb, model.w0)
    c2 = ops.reshape(cos, (n, 1))
    logits = ops.concat([c2, -c2], axis=1)
    if trace:
        shapes += [("pool", pooled.shape[1:]), ("fc", emb.shape[1:]), ("softmax", logits.shape[1:])]
    return ModelOutput(emb, cos, logits, shapes)
