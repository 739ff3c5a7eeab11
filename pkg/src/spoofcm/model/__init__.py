"""Embedding network, one-class head and checkpoints."""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ModelConfig
from .layers import AttentiveStatsPool, ResidualBlock, SEBlock, attentive_stats_pool, cosine_to, se_block
from .resnet import ModelOutput, SpoofNet, build_model, forward

__all__ = [
    "AttentiveStatsPool",
    "ModelConfig",
    "ModelOutput",
    "ResidualBlock",
    "SEBlock",
    "SpoofNet",
    "attentive_stats_pool",
    "build_model",
    "cosine_to",
    "forward",
    "load_checkpoint",
    "save_checkpoint",
    "se_block",
]
