"""Shared synthetic-corpus builders."""

import csv

import numpy as np
import pytest

from labelnet.corpus import clean


def write_csv(path, rows):
    """rows: list of (description, specialty, sample_name, transcription, keywords)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["description", "medical_specialty", "sample_name", "transcription", "keywords"])
        writer.writerows(rows)
    return path


def synthetic_rows(n_classes=8, per_class=50, seed=0, tokens_per_doc=24, exclusive=5, shared=8):
    """Planted corpus: each class has exclusive marker tokens mixed with a
    shared filler vocabulary, so a linear model can separate it."""
    rng = np.random.default_rng(seed)
    rows = []
    filler = [f"common{j}" for j in range(shared)]
    for c in range(n_classes):
        markers = [f"marker{c}x{j}" for j in range(exclusive)]
        for d in range(per_class):
            toks = []
            for _ in range(tokens_per_doc):
                if rng.random() < 0.65:
                    toks.append(markers[rng.integers(len(markers))])
                else:
                    toks.append(filler[rng.integers(len(filler))])
            rows.append((f"doc {c}-{d}", f"Spec{c}", f"s{c}_{d}", " ".join(toks), ""))
    return rows


def synthetic_corpus(**kwargs):
    rows = synthetic_rows(**kwargs)
    raw = [
        {
            "description": r[0], "medical_specialty": r[1], "sample_name": r[2],
            "transcription": r[3], "keywords": r[4],
        }
        for r in rows
    ]
    return clean(raw)


@pytest.fixture
def small_corpus():
    return synthetic_corpus(n_classes=3, per_class=12, seed=7, tokens_per_doc=12)


def paired_chapter_file(path, n_classes=8):
    """Chapter map pairing Spec0/Spec1, Spec2/Spec3, ... (graph-correlated labels)."""
    lines = [f"Spec{c},CH{c // 2}" for c in range(n_classes)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
