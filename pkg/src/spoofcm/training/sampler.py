"""Class-balanced mini-batches with minority oversampling."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..errors import ConfigError, DatasetError


def _cycled(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    # concatenated fresh permutations: every item is used once before any repeats
    reps = math.ceil(count / n)
    return np.concatenate([rng.permutation(n) for _ in range(reps)])[:count]


def balanced_batches(records: Sequence, batch_size: int, seed: int, epoch: int = 0) -> list:
    """One epoch of batches, each holding ``batch_size/2`` records per class.

    The epoch has ``ceil(majority / (batch_size/2))`` batches.  The minority
    class (and the majority's final partial batch) is filled by cycling
    through further shuffled permutations.  Order depends only on
    ``(seed, epoch)``.
    """
    if batch_size < 2 or batch_size % 2:
        raise ConfigError(f"batch size must be even and >= 2, got {batch_size}", "train.batch_size")
    bona = [r for r in records if r.key == "bonafide"]
    spoof = [r for r in records if r.key == "spoof"]
    if not bona or not spoof:
        raise DatasetError(f"both classes are needed, got {len(bona)} bona fide and "
                           f"{len(spoof)} spoof records")
    half = batch_size // 2
    n_batches = math.ceil(max(len(bona), len(spoof)) / half)
    rng = np.random.default_rng([seed, epoch])
    bi = _cycled(len(bona), n_batches * half, rng)
    si = _cycled(len(spoof), n_batches * half, rng)
    batches = []
    for b in range(n_batches):
        sl = slice(b * half, (b + 1) * half)
        batch = [bona[i] for i in bi[sl]] + [spoof[i] for i in si[sl]]
        batches.append([batch[i] for i in rng.permutation(batch_size)])
    return batches
