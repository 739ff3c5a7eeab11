"""Synthetic feature corpus for desk-scale experiments.

Bona fide maps are smooth random spectral envelopes with a slowly varying
frame energy and white noise.  Spoof maps draw from the same distribution
and add an artifact: a periodic ripple along time, confined to a fixed band
of rows, with a random phase per utterance.  ``amplitude`` scales the
artifact; at 0 the classes are identically distributed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError
from .evaluation.protocol import TrialRecord, write_protocol
from .lfcc import feature_path, write_features

N_ROWS = 60
ARTIFACT_BAND = (22, 30)
RIPPLE_PERIOD = 6.0


@dataclass
class SynthDataset:
    protocol: Path
    feature_dir: Path
    records: list

    def partition(self, name: str) -> list:
        return [r for r in self.records if r.partition == name]


def _smooth(x: np.ndarray, width: int) -> np.ndarray:
    kernel = np.hanning(width + 2)[1:-1]
    return np.convolve(x, kernel / kernel.sum(), mode="same")


def bonafide_map(rng: np.random.Generator, n_frames: int = 400, noise: float = 0.5) -> np.ndarray:
    rows = np.arange(N_ROWS)
    orders = np.arange(1, 6)
    coef = rng.standard_normal(orders.size) / orders
    envelope = coef @ np.cos(np.pi * np.outer(orders, rows + 0.5) / N_ROWS)
    energy = _smooth(rng.standard_normal(n_frames + 40), 25)[20:20 + n_frames] * 3.0
    gain = 1.0 / (1.0 + rows / 10.0)
    out = envelope[:, None] + np.outer(gain, energy) + noise * rng.standard_normal((N_ROWS, n_frames))
    return out


def artifact(rng: np.random.Generator, n_frames: int = 400) -> np.ndarray:
    lo, hi = ARTIFACT_BAND
    phase = rng.uniform(0.0, 2.0 * np.pi)
    ripple = np.sin(2.0 * np.pi * np.arange(n_frames) / RIPPLE_PERIOD + phase)
    pattern = np.zeros((N_ROWS, n_frames))
    pattern[lo:hi] = np.hanning(hi - lo + 2)[1:-1, None] * ripple[None, :]
    return pattern


def synth_dataset(n_per_class: int, seed: int, out_dir, amplitude: float = 1.0,
                  n_frames: int = 400) -> SynthDataset:
    """Write ``protocol.txt`` and ``features/<utt>.lfcc`` under ``out_dir``.

    Each class is split 50/25/25 into train/dev/eval; utterance ids carry the
    usual ``_T_``/``_D_``/``_E_`` partition tags.
    """
    if n_per_class < 8:
        raise ContractError(f"n_per_class must be >= 8, got {n_per_class}")
    out_dir = Path(out_dir)
    feat_dir = out_dir / "features"
    feat_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    n_train, n_dev = n_per_class // 2, n_per_class // 4
    records = []
    for key in ("bonafide", "spoof"):
        for i in range(n_per_class):
            part = "T" if i < n_train else "D" if i < n_train + n_dev else "E"
            utt = f"SYN_{part}_{key[0].upper()}{i:05d}"
            x = bonafide_map(rng, n_frames)
            if key == "spoof":
                x = x + amplitude * artifact(rng, n_frames)
                attack = "S01"
            else:
                attack = "-"
            write_features(feature_path(feat_dir, utt), x)
            partition = {"T": "train", "D": "dev", "E": "eval"}[part]
            records.append(TrialRecord(f"SYN{i % 10:02d}", utt, attack, key, partition))
    protocol = out_dir / "protocol.txt"
    write_protocol(protocol, records)
    return SynthDataset(protocol, feat_dir, records)
