"""Closed phone inventory, annotation parsing, and CTC target handling.

Phone classes are unique combinations of categorical phonetic features.
The default inventory ships as a 51-row ARPAbet-derived table; any
inventory file with the same schema can be substituted, and downstream
dimensions (CTC output width, toy renderer tables) follow the loaded size.
The blank token used by CTC is always `inventory.size` and never appears
in ground-truth sequences.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional, Sequence

from .errors import DataError

FEATURE_FIELDS = (
    "type", "position", "formant1", "formant2", "duration",
    "phonation", "articulation", "coarticulation", "roundedness",
)

FEATURE_CATEGORIES = {
    "type": {"vowel", "fricative", "stop", "nasal", "approximant", "affricate",
             "silence"},
    "position": {"front", "central", "back", "bilabial", "labiodental", "dental",
                 "alveolar", "postalveolar", "palatal", "velar", "glottal",
                 "labiovelar", "na"},
    "formant1": {"high", "mid", "low", "na"},
    "formant2": {"high", "mid", "low", "na"},
    "duration": {"short", "long", "diphthong", "reduced", "na"},
    "phonation": {"voiced", "unvoiced"},
    "articulation": {"monophthong", "diphthong", "rhotic", "plain", "flap",
                     "sibilant", "lateral", "glide", "na"},
    "coarticulation": {"none", "syllabic"},
    "roundedness": {"rounded", "unrounded", "na"},
}


@dataclass(frozen=True)
class PhoneticFeatures:
    type: str
    position: str
    formant1: str
    formant2: str
    duration: str
    phonation: str
    articulation: str
    coarticulation: str
    roundedness: str

    def __post_init__(self):
        for name in FEATURE_FIELDS:
            value = getattr(self, name)
            if value not in FEATURE_CATEGORIES[name]:
                raise DataError(
                    f"feature {name}={value!r} is not in the registered "
                    f"category set {sorted(FEATURE_CATEGORIES[name])}")


@dataclass(frozen=True)
class PhoneSeq:
    """Phone-class ids, optionally with per-phone (start, end) times."""

    ids: tuple[int, ...]
    times: Optional[tuple[tuple[float, float], ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))
        if self.times is not None:
            times = tuple((float(s), float(e)) for s, e in self.times)
            if len(times) != len(self.ids):
                raise DataError("times must align one-to-one with phone ids")
            object.__setattr__(self, "times", times)

    def __len__(self) -> int:
        return len(self.ids)


class PhoneInventory:
    """Immutable registry mapping labels and feature tuples to class ids."""

    def __init__(self, labels: Sequence[str], features: Sequence[PhoneticFeatures]):
        if len(labels) != len(features):
            raise DataError("labels and feature rows must align")
        if len(set(labels)) != len(labels):
            raise DataError("duplicate phone labels in inventory")
        self._labels = tuple(labels)
        self._features = tuple(features)
        self._id_by_label = {lab: i for i, lab in enumerate(self._labels)}
        self._id_by_features = {}
        for i, feat in enumerate(self._features):
            if feat in self._id_by_features:
                other = self._labels[self._id_by_features[feat]]
                raise DataError(
                    f"feature tuple of {self._labels[i]!r} duplicates {other!r}; "
                    "inventory rows must be unique combinations")
            self._id_by_features[feat] = i

    @property
    def size(self) -> int:
        return len(self._labels)

    @property
    def blank_id(self) -> int:
        """Reserved CTC blank; never a real phone class."""
        return self.size

    @property
    def labels(self) -> tuple[str, ...]:
        return self._labels

    def class_of(self, features: PhoneticFeatures) -> int:
        try:
            return self._id_by_features[features]
        except KeyError:
            raise DataError(f"unknown phone: feature tuple {features} is not registered")

    def features_of(self, class_id: int) -> PhoneticFeatures:
        self._check_id(class_id)
        return self._features[class_id]

    def label_of(self, class_id: int) -> str:
        self._check_id(class_id)
        return self._labels[class_id]

    def id_of(self, label: str) -> int:
        try:
            return self._id_by_label[label]
        except KeyError:
            raise DataError(f"unknown phone label {label!r}")

    def _check_id(self, class_id: int) -> None:
        if not 0 <= class_id < self.size:
            raise DataError(f"phone class id {class_id} outside [0, {self.size - 1}]")

    def parse_annotation(self, text: str) -> PhoneSeq:
        """Parse one annotation line: `label:start:end` tokens or bare labels."""
        tokens = text.split()
        if not tokens:
            return PhoneSeq(())
        ids, times = [], []
        timed = None
        last_boundary = None
        for pos, token in enumerate(tokens):
            parts = token.split(":")
            if len(parts) == 1:
                token_timed = False
            elif len(parts) == 3:
                token_timed = True
            else:
                raise DataError(f"token {pos}: malformed token {token!r}")
            if timed is None:
                timed = token_timed
            elif timed != token_timed:
                raise DataError(f"token {pos}: mixed timed and untimed tokens")
            ids.append(self.id_of(parts[0]))
            if token_timed:
                try:
                    start, end = float(parts[1]), float(parts[2])
                except ValueError:
                    raise DataError(f"token {pos}: non-numeric time in {token!r}")
                if start < 0 or end < start:
                    raise DataError(
                        f"token {pos}: non-monotone interval [{start}, {end}]")
                if last_boundary is not None and start < last_boundary:
                    raise DataError(
                        f"token {pos}: start {start} precedes previous end "
                        f"{last_boundary}")
                last_boundary = end
                times.append((start, end))
        return PhoneSeq(tuple(ids), tuple(times) if timed else None)

    def serialize_annotation(self, seq: PhoneSeq) -> str:
        if seq.times is None:
            return " ".join(self._labels[i] for i in seq.ids)
        return " ".join(f"{self._labels[i]}:{s:.6f}:{e:.6f}"
                        for i, (s, e) in zip(seq.ids, seq.times))


def load_inventory(path=None) -> PhoneInventory:
    """Load an inventory table (TSV with header); default is the shipped 51-row set."""
    if path is None:
        text = (importlib.resources.files("accentlab") / "data" / "phones_51.tsv"
                ).read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = lines[0].split("\t")
    expected = ["label", *FEATURE_FIELDS]
    if header != expected:
        raise DataError(f"inventory header {header} != expected {expected}")
    labels, features = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split("\t")
        if len(cells) != len(expected):
            raise DataError(f"inventory line {lineno}: expected "
                            f"{len(expected)} columns, got {len(cells)}")
        labels.append(cells[0])
        features.append(PhoneticFeatures(*cells[1:]))
    return PhoneInventory(labels, features)


@lru_cache(maxsize=1)
def default_inventory() -> PhoneInventory:
    return load_inventory()


def ctc_collapse(path: Iterable[int], blank_id: int) -> PhoneSeq:
    """Collapse an alignment path: drop repeats, then blanks."""
    ids = []
    prev = None
    for raw in path:
        value = int(raw)
        if not 0 <= value <= blank_id:
            raise DataError(f"path id {value} outside [0, {blank_id}]")
        if value != prev:
            if value != blank_id:
                ids.append(value)
            prev = value
    return PhoneSeq(tuple(ids))


def load_annotations(path, inventory: PhoneInventory) -> dict[str, PhoneSeq]:
    """Read an annotation file: one line per utterance, first token is the key."""
    out: dict[str, PhoneSeq] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            key, _, rest = line.partition("\t")
            if not key or key != key.strip():
                raise DataError(f"{path}:{lineno}: missing or padded utterance key")
            if key in out:
                raise DataError(f"{path}:{lineno}: duplicate annotation key {key!r}")
            try:
                out[key] = inventory.parse_annotation(rest)
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}")
    return out


def save_annotations(path, annotations: dict[str, PhoneSeq],
                     inventory: PhoneInventory) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, seq in annotations.items():
            fh.write(f"{key}\t{inventory.serialize_annotation(seq)}\n")
