"""Score files, score fusion and metric reports."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from ..errors import FusionError, MetricError, ParseError
from .metrics import TdcfParams, compute_eer, compute_min_tdcf, det_points


@dataclass
class ScoreSet:
    """Utterance id -> score (insertion order), with optional id -> key labels."""

    scores: dict = field(default_factory=dict)
    keys: Optional[dict] = None

    def __len__(self):
        return len(self.scores)

    def with_keys(self, records: Iterable) -> "ScoreSet":
        return ScoreSet(self.scores, {r.utt_id: r.key for r in records})

    def split(self, records: Optional[Iterable] = None) -> tuple:
        """``(bona, spoof)`` score arrays, keyed by ``records`` or the attached keys."""
        keys = {r.utt_id: r.key for r in records} if records is not None else self.keys
        if keys is None:
            raise MetricError("score set has no keys attached")
        missing = [u for u in self.scores if u not in keys]
        if missing:
            raise MetricError(f"{len(missing)} scored utterances have no key, e.g. {missing[0]}")
        bona = [s for u, s in self.scores.items() if keys[u] == "bonafide"]
        spoof = [s for u, s in self.scores.items() if keys[u] == "spoof"]
        return np.array(bona, dtype=np.float64), np.array(spoof, dtype=np.float64)


def read_scores(path) -> ScoreSet:
    """Read ``utt_id score`` lines."""
    path = Path(path)
    out = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise ParseError(f"expected 'utt_id score', found {len(parts)} fields", line_no, str(path))
            try:
                value = float(parts[1])
            except ValueError:
                raise ParseError(f"score {parts[1]!r} is not a number", line_no, str(path)) from None
            if parts[0] in out:
                raise ParseError(f"duplicate utterance id {parts[0]}", line_no, str(path))
            out[parts[0]] = value
    return ScoreSet(out)


def write_scores(path, scores: ScoreSet) -> None:
    with open(path, "w") as fh:
        for utt, s in scores.scores.items():
            fh.write(f"{utt} {float(s)!r}\n")


def fuse_scores(sets: list) -> ScoreSet:
    """Per-utterance arithmetic mean of several score sets over the same trials."""
    if len(sets) < 2:
        raise FusionError("fusion needs at least two score sets", [])
    ids = set(sets[0].scores)
    missing = set()
    for s in sets[1:]:
        missing |= ids ^ set(s.scores)
    if missing:
        raise FusionError("score sets cover different utterances", missing)
    fused = {}
    for utt in sets[0].scores:
        total = 0.0
        for s in sets:
            total += s.scores[utt]
        fused[utt] = total / len(sets)
    return ScoreSet(fused)


def read_asv_scores(path) -> tuple:
    """Organizer ASV score file; the last two fields are the key and the score.

    Returns ``(target, nontarget, spoof)`` arrays.
    """
    path = Path(path)
    groups = {"target": [], "nontarget": [], "spoof": []}
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 2 or parts[-2] not in groups:
                raise ParseError("expected '... key score' with key target/nontarget/spoof",
                                 line_no, str(path))
            try:
                groups[parts[-2]].append(float(parts[-1]))
            except ValueError:
                raise ParseError(f"score {parts[-1]!r} is not a number", line_no, str(path)) from None
    return tuple(np.array(groups[k], dtype=np.float64) for k in ("target", "nontarget", "spoof"))


def metric_report(bona, spoof, params: Optional[TdcfParams] = None) -> dict:
    eer = compute_eer(bona, spoof)
    tdcf = compute_min_tdcf(bona, spoof, params)
    return {
        "eer": eer.eer,
        "eer_threshold": eer.threshold,
        "min_tdcf": tdcf.min_tdcf,
        "tdcf_threshold": tdcf.threshold,
        "n_bonafide": int(np.size(bona)),
        "n_spoof": int(np.size(spoof)),
    }


def write_report(path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def write_det_csv(path, bona, spoof) -> int:
    points = det_points(bona, spoof)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "far", "frr", "probit_far", "probit_frr"])
        for p in points:
            w.writerow([repr(p.threshold), repr(p.far), repr(p.frr), repr(p.probit_far),
                        repr(p.probit_frr)])
    return len(points)
