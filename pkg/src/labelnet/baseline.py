"""TF-IDF + one-vs-rest logistic regression baseline.

Vocabulary and idf come from the training split only (leak-free by
construction). The K binary regressions are trained by deterministic
full-batch gradient descent with backtracking line search; no external
solver, so the module stays self-contained and reproducible.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ._kernels import csr_matvec, csr_rmatvec
from .encoder import tokenize
from .network import read_container, write_container

MAX_FEATURES = 50_000
L2_LAMBDA = 1e-4
MAX_ITERS = 500
GRAD_TOL = 1e-6
BIGRAM_SEP = " "


@dataclass
class CsrMatrix:
    """Minimal CSR: row pointers, sorted column indices, float64 data."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    n_cols: int

    @property
    def n_rows(self) -> int:
        return self.indptr.size - 1

    def matvec(self, w: np.ndarray, bias: float = 0.0) -> np.ndarray:
        return csr_matvec(self.indptr, self.indices, self.data, w, float(bias))

    def rmatvec(self, r: np.ndarray) -> np.ndarray:
        return csr_rmatvec(self.indptr, self.indices, self.data, r, self.n_cols)


@dataclass
class TfidfModel:
    vocabulary: dict[str, int]
    idf: np.ndarray


@dataclass
class BaselineModel:
    tfidf: TfidfModel
    weights: np.ndarray   # K x V
    biases: np.ndarray    # K
    label_names: list[str]


def _ngrams(text: str) -> list[str]:
    tokens = tokenize(text).tokens
    grams = list(tokens)
    grams.extend(a + BIGRAM_SEP + b for a, b in zip(tokens, tokens[1:]))
    return grams


def fit_tfidf(train_docs: list[str], max_features: int = MAX_FEATURES) -> TfidfModel:
    """Unigram+bigram counts over the training docs; keeps the
    `max_features` most frequent terms (ties lexicographic) with smoothed
    idf_t = ln((1+N)/(1+df_t)) + 1."""
    counts: dict[str, int] = {}
    df: dict[str, int] = {}
    for doc in train_docs:
        grams = _ngrams(doc)
        for g in grams:
            counts[g] = counts.get(g, 0) + 1
        for g in set(grams):
            df[g] = df.get(g, 0) + 1
    kept = sorted(counts, key=lambda g: (-counts[g], g))[:max_features]
    kept.sort()
    vocabulary = {g: i for i, g in enumerate(kept)}
    n = len(train_docs)
    idf = np.array([np.log((1.0 + n) / (1.0 + df[g])) + 1.0 for g in kept])
    return TfidfModel(vocabulary=vocabulary, idf=idf)


def transform(model: TfidfModel, docs: list[str]) -> CsrMatrix:
    """tf*idf rows, L2-normalized; all-OOV documents become zero rows."""
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for doc in docs:
        tf: dict[int, float] = {}
        for g in _ngrams(doc):
            col = model.vocabulary.get(g)
            if col is not None:
                tf[col] = tf.get(col, 0.0) + 1.0
        cols = sorted(tf)
        vals = np.array([tf[c] * model.idf[c] for c in cols])
        norm = float(np.linalg.norm(vals))
        if norm > 0.0:
            vals /= norm
        indices.extend(cols)
        data.extend(vals.tolist())
        indptr.append(len(indices))
    return CsrMatrix(
        indptr=np.array(indptr, dtype=np.int64),
        indices=np.array(indices, dtype=np.int64),
        data=np.array(data, dtype=np.float64),
        n_cols=model.idf.size,
    )


def balanced_weights(binary_targets: np.ndarray) -> np.ndarray:
    """Per-example weights N/(2*n_class) for the example's binary class."""
    y = np.asarray(binary_targets, dtype=np.float64)
    n = y.size
    n_pos = max(float(y.sum()), 1.0)
    n_neg = max(float(n - y.sum()), 1.0)
    return np.where(y > 0.5, n / (2.0 * n_pos), n / (2.0 * n_neg))


def _objective(x: CsrMatrix, y, s, w, b, l2):
    margins = x.matvec(w, b)
    losses = y * np.logaddexp(0.0, -margins) + (1.0 - y) * np.logaddexp(0.0, margins)
    return float((s * losses).mean() + 0.5 * l2 * float(w @ w))


def fit_binary_logreg(
    x: CsrMatrix,
    y: np.ndarray,
    sample_weights: np.ndarray,
    l2: float = L2_LAMBDA,
    max_iters: int = MAX_ITERS,
    tol: float = GRAD_TOL,
) -> tuple[np.ndarray, float]:
    """Weighted L2-regularized logistic regression by full-batch gradient
    descent with Armijo backtracking; returns the best iterate if the
    gradient tolerance is not reached."""
    n = x.n_rows
    w = np.zeros(x.n_cols)
    b = 0.0
    obj = _objective(x, y, sample_weights, w, b, l2)
    eta = 1.0
    converged = False
    # Armijo descent is monotone, so the current iterate is always the best
    for _ in range(max_iters):
        margins = x.matvec(w, b)
        probs = np.exp(-np.logaddexp(0.0, -margins))
        resid = sample_weights * (probs - y) / n
        grad_w = x.rmatvec(resid) + l2 * w
        grad_b = float(resid.sum())
        gsq = float(grad_w @ grad_w + grad_b * grad_b)
        if np.sqrt(gsq) < tol:
            converged = True
            break
        accepted = False
        for _ in range(60):
            w_new = w - eta * grad_w
            b_new = b - eta * grad_b
            obj_new = _objective(x, y, sample_weights, w_new, b_new, l2)
            if obj_new <= obj - 1e-4 * eta * gsq:
                w, b, obj = w_new, b_new, obj_new
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            break
        eta = min(eta * 2.0, 1e4)
    if not converged:
        warnings.warn("logistic regression did not reach gradient tolerance; returning best iterate")
    return w, b


def fit_ovr_logreg(
    x: CsrMatrix,
    labels: np.ndarray,
    n_labels: int,
    l2: float = L2_LAMBDA,
    max_iters: int = MAX_ITERS,
) -> tuple[np.ndarray, np.ndarray]:
    """K independent balanced binary regressions over the same features."""
    labels = np.asarray(labels, dtype=np.int64)
    weights = np.zeros((n_labels, x.n_cols))
    biases = np.zeros(n_labels)
    for k in range(n_labels):
        y = (labels == k).astype(np.float64)
        weights[k], biases[k] = fit_binary_logreg(
            x, y, balanced_weights(y), l2=l2, max_iters=max_iters
        )
    return weights, biases


def fit_baseline(
    train_docs: list[str],
    train_labels: np.ndarray,
    label_names: list[str],
    max_features: int = MAX_FEATURES,
    l2: float = L2_LAMBDA,
    max_iters: int = MAX_ITERS,
) -> BaselineModel:
    tfidf = fit_tfidf(train_docs, max_features)
    x = transform(tfidf, train_docs)
    weights, biases = fit_ovr_logreg(x, train_labels, len(label_names), l2, max_iters)
    return BaselineModel(tfidf=tfidf, weights=weights, biases=biases, label_names=label_names)


def predict_baseline(model: BaselineModel, docs: list[str]) -> np.ndarray:
    """Per-label sigmoid probabilities, one row per document."""
    x = transform(model.tfidf, docs)
    out = np.empty((x.n_rows, model.biases.size))
    for k in range(model.biases.size):
        margins = x.matvec(model.weights[k], model.biases[k])
        out[:, k] = np.exp(-np.logaddexp(0.0, -margins))
    return out


def save_baseline(path, model: BaselineModel, config: dict) -> None:
    vocab_terms = [None] * len(model.tfidf.vocabulary)
    for term, col in model.tfidf.vocabulary.items():
        vocab_terms[col] = term
    meta = {
        "type": "baseline",
        "labels": model.label_names,
        "vocabulary": vocab_terms,
        "config": config,
    }
    tensors = {"idf": model.tfidf.idf, "weights": model.weights, "biases": model.biases}
    write_container(path, meta, tensors)


def load_baseline(path) -> BaselineModel:
    meta, tensors = read_container(path)
    if meta.get("type") != "baseline":
        raise ValueError(f"checkpoint type {meta.get('type')!r} is not a baseline checkpoint")
    vocabulary = {term: i for i, term in enumerate(meta["vocabulary"])}
    return BaselineModel(
        tfidf=TfidfModel(vocabulary=vocabulary, idf=tensors["idf"]),
        weights=tensors["weights"].reshape(len(meta["labels"]), -1),
        biases=tensors["biases"],
        label_names=meta["labels"],
    )
