"""JSON-lines manifests and weighted real/synthetic sampling."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import DataError

ORIGINS = ("real", "synthetic")
_CORE_FIELDS = ("utt_id", "audio_path", "text", "accent", "speaker",
                "phones_ref", "origin")


@dataclass
class ManifestEntry:
    utt_id: str
    audio_path: str
    text: str
    accent: str
    speaker: str
    phones_ref: Optional[str] = None
    origin: str = "real"
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.utt_id:
            raise DataError("utt_id must be non-empty")
        if not self.accent or not self.speaker:
            raise DataError(f"entry {self.utt_id}: accent and speaker must be non-empty")
        if self.origin not in ORIGINS:
            raise DataError(f"entry {self.utt_id}: origin must be one of {ORIGINS}")

    def to_json(self) -> str:
        record = {k: getattr(self, k) for k in _CORE_FIELDS if getattr(self, k) is not None}
        record.update(self.extras)
        return json.dumps(record, sort_keys=True)

    @classmethod
    def from_record(cls, record: dict) -> "ManifestEntry":
        known = {k: record[k] for k in _CORE_FIELDS if k in record}
        extras = {k: v for k, v in record.items() if k not in _CORE_FIELDS}
        missing = [k for k in ("utt_id", "audio_path", "text", "accent", "speaker")
                   if k not in known]
        if missing:
            raise DataError(f"missing manifest fields {missing}")
        return cls(**known, extras=extras)


def load_manifest(path) -> list[ManifestEntry]:
    """Load a JSONL manifest; rejects malformed lines and duplicate ids."""
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON ({exc.msg})")
            if not isinstance(record, dict):
                raise DataError(f"{path}:{lineno}: expected a JSON object")
            try:
                entry = ManifestEntry.from_record(record)
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}")
            if entry.utt_id in seen:
                raise DataError(f"{path}:{lineno}: duplicate utt_id {entry.utt_id!r}")
            seen.add(entry.utt_id)
            entries.append(entry)
    return entries


def save_manifest(path, entries: Sequence[ManifestEntry]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(entry.to_json() + "\n")


@dataclass(frozen=True)
class MixPolicy:
    """Per-draw pool weights; real_weight + synthetic_weight must equal 1."""

    real_weight: float = 0.8
    synthetic_weight: float = 0.2

    def __post_init__(self):
        if not (0.0 <= self.real_weight <= 1.0 and 0.0 <= self.synthetic_weight <= 1.0):
            raise DataError("mix weights must lie in [0, 1]")
        if not math.isclose(self.real_weight + self.synthetic_weight, 1.0,
                            rel_tol=0.0, abs_tol=1e-9):
            raise DataError("mix weights must sum to 1")


def mixed_sampler(real: Sequence[ManifestEntry],
                  synthetic: Sequence[ManifestEntry],
                  policy: MixPolicy,
                  rng: np.random.Generator) -> Iterator[ManifestEntry]:
    """Infinite stream: Bernoulli pool choice per draw, then uniform in pool."""
    if policy.real_weight > 0.0 and not real:
        raise DataError("real pool is empty but real_weight > 0")
    if policy.synthetic_weight > 0.0 and not synthetic:
        raise DataError("synthetic pool is empty but synthetic_weight > 0")
    while True:
        pool = real if rng.random() < policy.real_weight else synthetic
        yield pool[int(rng.integers(0, len(pool)))]
