"""Corpus ingestion: CSV loading, cleaning, label vocabulary, stratified split.

The cleaned corpus is the single source of truth for every later stage.
Splitting is deterministic for a fixed seed and reconciles per-class
largest-remainder allocation against global largest-remainder totals, so
70/15/15 on N records always lands exactly on round(N * fractions).
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass, field

import numpy as np

REQUIRED_COLUMNS = ("description", "medical_specialty", "sample_name", "transcription", "keywords")
SPLIT_NAMES = ("train", "val", "test")


class CorpusError(ValueError):
    """Raised for unreadable, malformed, or degenerate corpus inputs."""


@dataclass
class Record:
    """One cleaned document; `specialty` indexes the label vocabulary."""

    id: int
    description: str
    specialty: int
    transcription: str
    keywords: str


@dataclass
class LabelVocabulary:
    """Ordered specialty names (first-appearance order) plus optional training counts."""

    names: list[str]
    counts: list[int] | None = None

    @property
    def size(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


@dataclass
class Corpus:
    records: list[Record]
    vocabulary: LabelVocabulary

    def __len__(self) -> int:
        return len(self.records)

    def by_label(self) -> list[list[int]]:
        """Record ids grouped by label id."""
        groups: list[list[int]] = [[] for _ in range(self.vocabulary.size)]
        for rec in self.records:
            groups[rec.specialty].append(rec.id)
        return groups


@dataclass
class SplitAssignment:
    """Split name per record id; disjoint and covering by construction."""

    split: dict[int, str]
    fractions: tuple[float, float, float]
    seed: int

    def ids(self, name: str) -> list[int]:
        return sorted(rid for rid, s in self.split.items() if s == name)

    def totals(self) -> tuple[int, int, int]:
        counts = {s: 0 for s in SPLIT_NAMES}
        for s in self.split.values():
            counts[s] += 1
        return counts["train"], counts["val"], counts["test"]


def load_csv(path) -> list[dict]:
    """Read the transcription CSV into raw row dicts, preserving row order.

    Missing cells become empty strings. Fails with the offending row number
    on malformed quoting.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except FileNotFoundError:
        raise CorpusError(f"input CSV not found: {path}") from None
    with fh:
        reader = csv.DictReader(fh, strict=True)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise CorpusError(f"missing required column(s): {', '.join(missing)}")
        rows = []
        try:
            for row in reader:
                rows.append({c: (row.get(c) or "") for c in REQUIRED_COLUMNS})
        except csv.Error as exc:
            # line_num still points at the last complete record; the
            # malformed record starts on the next physical line
            raise CorpusError(f"malformed CSV at row {reader.line_num + 1}: {exc}") from exc
    return rows


def clean(raw: list[dict]) -> Corpus:
    """Drop records with empty/whitespace-only transcriptions, build the vocabulary.

    Specialty names are trimmed; label ids follow first appearance in file
    order; record ids are reassigned densely over the survivors.
    """
    names: list[str] = []
    name_to_id: dict[str, int] = {}
    records: list[Record] = []
    for row in raw:
        transcription = row["transcription"]
        if not transcription.strip():
            continue
        specialty = row["medical_specialty"].strip()
        if specialty not in name_to_id:
            name_to_id[specialty] = len(names)
            names.append(specialty)
        records.append(
            Record(
                id=len(records),
                description=row["description"].strip(),
                specialty=name_to_id[specialty],
                transcription=transcription,
                keywords=row["keywords"].strip(),
            )
        )
    if not records:
        raise CorpusError("no records survived cleaning")
    return Corpus(records=records, vocabulary=LabelVocabulary(names=names))


def largest_remainder(total: int, fractions: tuple[float, ...]) -> list[int]:
    """Integer allocation of `total` across fractions by largest remainder.

    Residual seats break remainder ties by position (earlier wins), which
    realizes the train -> val -> test priority for split fractions.
    """
    exact = [total * f for f in fractions]
    alloc = [int(np.floor(x)) for x in exact]
    seats = total - sum(alloc)
    order = sorted(range(len(fractions)), key=lambda i: (-(exact[i] - alloc[i]), i))
    for i in order[:seats]:
        alloc[i] += 1
    return alloc


_SEAT_OPTIONS = {
    0: ((),),
    1: ((0,), (1,), (2,)),
    2: ((0, 1), (0, 2), (1, 2)),
}


def _assign_residual_seats(
    labels: list[int],
    remainders: dict[int, list[float]],
    residual: dict[int, int],
    seats: tuple[int, int, int],
):
    """Place each class's residual records (0, 1, or 2) into distinct splits
    so that per-split totals hit `seats` exactly, maximizing the summed
    fractional remainders (the largest-remainder objective). Exact dynamic
    program over (train_used, val_used); test usage is implied. Ties resolve
    toward earlier splits for earlier classes. Returns None when no exact
    assignment exists.
    """
    total = sum(residual[label] for label in labels)
    if total != sum(seats):
        return None
    # state: (used_train, used_val) -> (score, parent_state, option)
    states: dict[tuple[int, int], tuple[float, tuple[int, int] | None, tuple[int, ...]]] = {
        (0, 0): (0.0, None, ())
    }
    processed = 0
    trail: list[dict] = []
    for label in labels:
        nxt: dict[tuple[int, int], tuple[float, tuple[int, int], tuple[int, ...]]] = {}
        processed += residual[label]
        for (ut, uv), (score, _, _) in states.items():
            for option in _SEAT_OPTIONS[residual[label]]:
                t2 = ut + (0 in option)
                v2 = uv + (1 in option)
                if t2 > seats[0] or v2 > seats[1]:
                    continue
                if processed - t2 - v2 > seats[2]:
                    continue
                gain = sum(remainders[label][s] for s in option)
                key = (t2, v2)
                cand = (score + gain, (ut, uv), option)
                if key not in nxt or cand[0] > nxt[key][0]:
                    nxt[key] = cand
        states = nxt
        trail.append(states)
        if not states:
            return None
    final = (seats[0], seats[1])
    if final not in states:
        return None
    choices: dict[int, tuple[int, ...]] = {}
    key = final
    for label, layer in zip(reversed(labels), reversed(trail)):
        _, parent, option = layer[key]
        choices[label] = option
        key = parent
    return choices


def stratified_split(corpus: Corpus, fractions=(0.70, 0.15, 0.15), seed: int = 42) -> SplitAssignment:
    """Deterministic leakage-free stratified split.

    Per class, records are shuffled with the seeded generator and given
    floor(n_k * f_s) seats per split; the residual records are then placed
    by an exact largest-remainder assignment constrained to the global
    largest-remainder totals, so totals equal largest_remainder(N, fractions)
    and every class deviates from its per-split target by at most one
    record. Ties order train -> val -> test. Classes with <3 records place
    their records in train, then val, then test.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise CorpusError(f"split fractions must sum to 1.0, got {sum(fractions)}")
    if len(fractions) != 3:
        raise CorpusError("exactly three split fractions expected")
    groups = corpus.by_label()
    if any(len(g) == 0 for g in groups):
        empty = [corpus.vocabulary.names[k] for k, g in enumerate(groups) if not g]
        raise CorpusError(f"classes with zero records: {empty}")

    rng = np.random.default_rng(seed)
    n_total = len(corpus)
    global_targets = largest_remainder(n_total, tuple(fractions))
    assignment: dict[int, str] = {}

    small_fill = [s for s, f in zip(SPLIT_NAMES, fractions) if f > 0] or ["train"]
    base: dict[int, list[int]] = {}
    remainders: dict[int, list[float]] = {}
    residual: dict[int, int] = {}
    shuffled: dict[int, list[int]] = {}
    consumed = [0, 0, 0]

    for label, group in enumerate(groups):
        ids = list(group)
        perm = rng.permutation(len(ids))
        ids = [ids[i] for i in perm]
        shuffled[label] = ids
        if len(ids) < 3:
            for pos, rid in enumerate(ids):
                name = small_fill[min(pos, len(small_fill) - 1)]
                assignment[rid] = name
                consumed[SPLIT_NAMES.index(name)] += 1
            continue
        exact = [len(ids) * f for f in fractions]
        floors = [int(np.floor(x)) for x in exact]
        base[label] = floors
        remainders[label] = [e - fl for e, fl in zip(exact, floors)]
        residual[label] = len(ids) - sum(floors)
        for s in range(3):
            consumed[s] += floors[s]

    seats = [global_targets[s] - consumed[s] for s in range(3)]
    alloc = {label: list(floors) for label, floors in base.items()}
    choices = None
    if all(s >= 0 for s in seats):
        choices = _assign_residual_seats(sorted(base), remainders, residual, tuple(seats))
    if choices is not None:
        for label, picked in choices.items():
            for s in picked:
                alloc[label][s] += 1
    else:
        # tiny classes overshot a split's global target (impossible on any
        # corpus whose smallest class has >= 3 records); keep the per-class
        # <= 1 deviation guarantee and let global totals drift: each class
        # places its residuals in its own largest-remainder splits
        for label in sorted(base):
            order = sorted(range(3), key=lambda s: (-remainders[label][s], s))
            for s in order[: residual[label]]:
                alloc[label][s] += 1

    for label, counts in alloc.items():
        ids = shuffled[label]
        cursor = 0
        for s, name in enumerate(SPLIT_NAMES):
            for rid in ids[cursor:cursor + counts[s]]:
                assignment[rid] = name
            cursor += counts[s]

    return SplitAssignment(split=assignment, fractions=tuple(fractions), seed=seed)


@dataclass
class CorpusStats:
    per_class_total: list[int]
    per_class_train: list[int]
    largest: tuple[str, int]
    smallest: tuple[str, int]
    imbalance_ratio: float
    classes_under_20_train: int
    median_words: float
    frac_over_window: float
    split_totals: tuple[int, int, int]
    label_names: list[str] = field(default_factory=list)

    def render(self) -> str:
        lines = [
            "corpus statistics",
            f"records: {sum(self.per_class_total)}",
            f"classes: {len(self.per_class_total)}",
            f"split totals (train/val/test): {self.split_totals[0]}/{self.split_totals[1]}/{self.split_totals[2]}",
            f"largest class: {self.largest[0]} ({self.largest[1]})",
            f"smallest class: {self.smallest[0]} ({self.smallest[1]})",
            f"imbalance ratio: {round(self.imbalance_ratio)}:1",
            f"classes with <20 training samples: {self.classes_under_20_train}",
            f"median document length (words): {self.median_words:g}",
            f"fraction of documents exceeding token window: {self.frac_over_window:.3f}",
            "",
            "label,total,train",
        ]
        for k, name in enumerate(self.label_names):
            lines.append(f"{name},{self.per_class_total[k]},{self.per_class_train[k]}")
        return "\n".join(lines) + "\n"


def corpus_stats(corpus: Corpus, split: SplitAssignment, window: int = 512) -> CorpusStats:
    """Summary statistics: class balance, training-tail size, document lengths."""
    from .encoder import tokenize

    k = corpus.vocabulary.size
    total = [0] * k
    train = [0] * k
    word_counts = []
    over = 0
    for rec in corpus.records:
        total[rec.specialty] += 1
        if split.split[rec.id] == "train":
            train[rec.specialty] += 1
        n_words = len(tokenize(rec.transcription).tokens)
        word_counts.append(n_words)
        if n_words > window:
            over += 1
    largest_k = max(range(k), key=lambda i: (total[i], -i))
    smallest_k = min(range(k), key=lambda i: (total[i], i))
    names = corpus.vocabulary.names
    return CorpusStats(
        per_class_total=total,
        per_class_train=train,
        largest=(names[largest_k], total[largest_k]),
        smallest=(names[smallest_k], total[smallest_k]),
        imbalance_ratio=total[largest_k] / total[smallest_k],
        classes_under_20_train=sum(1 for c in train if c < 20),
        median_words=float(statistics.median(word_counts)),
        frac_over_window=over / len(corpus.records),
        split_totals=split.totals(),
        label_names=list(names),
    )


def training_counts(corpus: Corpus, split: SplitAssignment) -> np.ndarray:
    """Per-label record counts restricted to the training split."""
    counts = np.zeros(corpus.vocabulary.size, dtype=np.int64)
    for rec in corpus.records:
        if split.split[rec.id] == "train":
            counts[rec.specialty] += 1
    return counts
