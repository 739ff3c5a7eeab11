"""Training loop, feature store and model scoring."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from ..activations import Mode
from ..errors import ConfigError, DatasetError
from ..evaluation.metrics import compute_eer
from ..evaluation.scores import ScoreSet
from ..lfcc import feature_path, read_features
from ..model.checkpoint import save_checkpoint
from ..model.resnet import SpoofNet, forward
from ..numerics import backward, no_grad
from .loss import OcsParams, ocs_loss
from .optim import Adam, AdamHyper, lr_at
from .sampler import balanced_batches

LOG_HEADER = ("step", "epoch", "lr", "loss")


@dataclass
class TrainConfig:
    batch_size: int = 64
    lr0: float = 3e-4
    decay_rate: float = 0.5
    decay_interval: int = 1
    epochs: int = 10
    seed: int = 0
    crop_frames: int = 400
    max_steps: Optional[int] = None
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    score_batch_size: int = 64
    ocs: OcsParams = field(default_factory=OcsParams)

    def __post_init__(self):
        if isinstance(self.ocs, dict):
            self.ocs = OcsParams.from_dict(self.ocs)
        if self.batch_size < 2 or self.batch_size % 2:
            raise ConfigError("must be even and >= 2", "train.batch_size")
        if not self.lr0 > 0:
            raise ConfigError("must be positive", "train.lr0")
        if not 0 < self.decay_rate <= 1:
            raise ConfigError("must lie in (0, 1]", "train.decay_rate")
        if self.decay_interval < 1:
            raise ConfigError("must be >= 1", "train.decay_interval")
        if self.epochs < 1:
            raise ConfigError("must be >= 1", "train.epochs")
        if self.crop_frames < 1:
            raise ConfigError("must be >= 1", "train.crop_frames")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError("must be >= 1", "train.max_steps")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["ocs"] = self.ocs.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", "train")
        return cls(**d)

    def adam(self) -> AdamHyper:
        return AdamHyper(self.lr0, self.beta1, self.beta2, self.adam_eps)


class FeatureStore:
    """Reads ``<utt_id>.lfcc`` files from one directory, caching them in memory."""

    def __init__(self, root, cache: bool = True):
        self.root = Path(root)
        self.cache = {} if cache else None

    def path(self, utt_id: str) -> Path:
        return feature_path(self.root, utt_id)

    def missing(self, utt_ids: Sequence[str]) -> list:
        return [u for u in utt_ids if not self.path(u).is_file()]

    def require(self, utt_ids: Sequence[str]) -> None:
        missing = self.missing(utt_ids)
        if missing:
            shown = ", ".join(missing[:20]) + (" ..." if len(missing) > 20 else "")
            raise DatasetError(f"{len(missing)} feature files missing under {self.root}: {shown}")

    def load(self, utt_id: str) -> np.ndarray:
        if self.cache is not None and utt_id in self.cache:
            return self.cache[utt_id]
        arr = read_features(self.path(utt_id))
        if self.cache is not None:
            self.cache[utt_id] = arr
        return arr


def crop_or_pad(feat: np.ndarray, length: int, rng: np.random.Generator) -> np.ndarray:
    """Random ``length``-frame window; short inputs are tiled along time."""
    n = feat.shape[1]
    if n > length:
        start = int(rng.integers(0, n - length + 1))
        return feat[:, start:start + length]
    if n < length:
        return np.tile(feat, (1, length // n + 1))[:, :length]
    return feat


def score_utterances(model: SpoofNet, store: FeatureStore, utt_ids: Sequence[str],
                     batch_size: int = 64) -> ScoreSet:
    """Cosine-to-``w0`` score for each utterance, in eval mode.

    Utterances of equal length are batched together; order of the result
    follows ``utt_ids``.
    """
    feats = {u: store.load(u) for u in utt_ids}
    by_len = {}
    for u in utt_ids:
        by_len.setdefault(feats[u].shape[1], []).append(u)
    scores = {}
    with no_grad():
        for length, group in by_len.items():
            for i in range(0, len(group), batch_size):
                chunk = group[i:i + batch_size]
                x = np.stack([feats[u] for u in chunk]).astype(model.dtype)
                out = forward(model, x, Mode.EVAL)
                for u, s in zip(chunk, out.cosine_score.data):
                    scores[u] = float(s)
    return ScoreSet({u: scores[u] for u in utt_ids})


@dataclass
class TrainResult:
    step_losses: list
    epoch_mean_losses: list
    dev_eers: list
    best_epoch: Optional[int]
    out_dir: Path

    @property
    def best_checkpoint(self) -> Path:
        return self.out_dir / "checkpoints" / "best"


def train(model: SpoofNet, store: FeatureStore, records: Sequence, cfg: TrainConfig, out_dir,
          dev_records: Optional[Sequence] = None,
          progress: Optional[Callable[[str], None]] = None) -> TrainResult:
    """Train ``model`` in place on ``records`` with OC-softmax and Adam.

    Writes ``loss_log.csv`` (one row per step), ``checkpoints/epoch_NNN`` after
    every epoch and ``checkpoints/best`` at the lowest dev EER (or the last
    epoch when no dev records are given).
    """
    out_dir = Path(out_dir)
    dev_records = list(dev_records or [])
    store.require([r.utt_id for r in records] + [r.utt_id for r in dev_records])
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)

    ocs = OcsParams(cfg.ocs.k, cfg.ocs.m0, cfg.ocs.m1, w0=model.w0)
    opt = Adam(model.named_parameters(), cfg.adam())
    rng = np.random.default_rng(cfg.seed)
    step_losses, epoch_means, dev_eers = [], [], []
    best_eer, best_epoch = np.inf, None
    step = 0

    with open(out_dir / "loss_log.csv", "w", newline="") as log_fh:
        log = csv.writer(log_fh)
        log.writerow(LOG_HEADER)
        for epoch in range(cfg.epochs):
            lr = lr_at(epoch, cfg)
            opt.hyper.lr = lr
            losses = []
            for batch in balanced_batches(records, cfg.batch_size, cfg.seed, epoch):
                x = np.stack([crop_or_pad(store.load(r.utt_id), cfg.crop_frames, rng)
                              for r in batch]).astype(model.dtype)
                labels = np.array([r.label for r in batch])
                model.zero_grad()
                out = forward(model, x, Mode.TRAIN, rng)
                loss = ocs_loss(out.embedding, labels, ocs)
                backward(loss)
                opt.step()
                step += 1
                value = float(loss.data)
                losses.append(value)
                step_losses.append(value)
                log.writerow([step, epoch, repr(lr), repr(value)])
                log_fh.flush()
                if cfg.max_steps is not None and step >= cfg.max_steps:
                    break
            epoch_means.append(float(np.mean(losses)))
            save_checkpoint(model, ckpt_dir / f"epoch_{epoch:03d}", step, {"epoch": epoch})
            if dev_records:
                scores = score_utterances(model, store, [r.utt_id for r in dev_records],
                                          cfg.score_batch_size)
                eer = compute_eer(*scores.split(dev_records)).eer
            else:
                eer = np.nan
            dev_eers.append(eer)
            if not dev_records or eer < best_eer:
                best_eer, best_epoch = eer, epoch
                save_checkpoint(model, ckpt_dir / "best", step,
                                {"epoch": epoch, "dev_eer": None if np.isnan(eer) else eer})
            if progress:
                progress(f"epoch {epoch} lr {lr:.3g} mean loss {epoch_means[-1]:.4f} dev EER {eer:.4f}")
            if cfg.max_steps is not None and step >= cfg.max_steps:
                break

    summary = {"epoch_mean_losses": epoch_means, "dev_eers": [None if np.isnan(e) else e for e in dev_eers],
               "best_epoch": best_epoch, "steps": step}
    (out_dir / "train_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return TrainResult(step_losses, epoch_means, dev_eers, best_epoch, out_dir)
