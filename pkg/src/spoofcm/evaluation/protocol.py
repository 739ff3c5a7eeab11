"""ASVspoof2019-style CM protocol files.

One trial per line, five whitespace-separated fields::

    SPEAKER UTT_ID - ATTACK_ID KEY
    LA_0079 LA_T_1000137 - A01 spoof
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from ..errors import ParseError

KEYS = ("bonafide", "spoof")
PARTITIONS = ("train", "dev", "eval")
_PARTITION_TAG = re.compile(r"_([TDE])_")
_TAG_TO_PARTITION = {"T": "train", "D": "dev", "E": "eval"}


@dataclass(frozen=True)
class TrialRecord:
    speaker_id: str
    utt_id: str
    attack_id: str
    key: str
    partition: str = "train"

    @property
    def label(self) -> int:
        """0 for bona fide (target class), 1 for spoof."""
        return 0 if self.key == "bonafide" else 1

    def to_line(self) -> str:
        return f"{self.speaker_id} {self.utt_id} - {self.attack_id} {self.key}"


def infer_partition(utt_id: str, default: str = "train") -> str:
    m = _PARTITION_TAG.search(utt_id)
    return _TAG_TO_PARTITION[m.group(1)] if m else default


def parse_protocol_lines(lines: Iterable[str], partition: Optional[str] = None,
                         source: Optional[str] = None) -> list:
    records, seen = [], set()
    for line_no, line in enumerate(lines, start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 5:
            raise ParseError(f"expected 5 fields, found {len(fields)}", line_no, source)
        speaker, utt, _unused, attack, key = fields
        if key not in KEYS:
            raise ParseError(f"key must be bonafide or spoof, found {key!r}", line_no, source)
        if utt in seen:
            raise ParseError(f"duplicate utterance id {utt}", line_no, source)
        seen.add(utt)
        part = partition or infer_partition(utt)
        records.append(TrialRecord(speaker, utt, attack, key, part))
    return records


def parse_protocol(path, partition: Optional[str] = None) -> list:
    """Read a protocol file into :class:`TrialRecord` objects.

    The partition is taken from ``partition`` when given, otherwise from the
    ``_T_``/``_D_``/``_E_`` tag inside each utterance id.
    """
    path = Path(path)
    with open(path) as fh:
        return parse_protocol_lines(fh, partition, str(path))


def write_protocol(path, records: Iterable[TrialRecord]) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(r.to_line() + "\n")


def class_counts(records: Iterable[TrialRecord]) -> dict:
    counts = Counter(r.key for r in records)
    return {k: counts.get(k, 0) for k in KEYS}


def select(records: Iterable[TrialRecord], partition: Optional[str]) -> list:
    return [r for r in records if partition is None or r.partition == partition]
