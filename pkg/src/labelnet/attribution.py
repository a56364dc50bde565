"""Per-label Integrated Gradients with completeness checking.

The path integral from baseline to input is approximated by a midpoint
Riemann sum over the label's pre-sigmoid logit. In reference-encoder mode
the input is the document's hashed feature vector and bucket attributions
are aggregated back onto tokens through their n-grams; in frozen-embedding
mode attributions land on embedding dimensions directly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .encoder import HashedChunk, _hash_feature
from .network import ModelParams, backward_full, forward_batch

DEFAULT_STEPS = 50


class AttributionError(ValueError):
    pass


@dataclass
class AttributionModel:
    """Read-only model context the attribution differentiates through."""

    params: ModelParams
    a_hat: np.ndarray | None = None
    h0: np.ndarray | None = None
    no_gcn: bool = False


@dataclass
class HashedDocument:
    """Reference-encoder view of one document: tokens, window spans, and the
    cached per-window hashed features."""

    tokens: list[str]
    windows: list[tuple[int, int]]
    chunks: list[HashedChunk]
    n_buckets: int


@dataclass
class AttributionResult:
    label: int
    token_scores: list[tuple[str, float]]
    completeness_gap: float
    f_input: float
    f_baseline: float
    attribution_sum: float
    mode: str

    def top(self, n: int) -> list[tuple[str, float]]:
        return self.token_scores[:n]


def _rank(scores: dict[str, float]) -> list[tuple[str, float]]:
    return sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))


def top_tokens(result: AttributionResult, n: int) -> list[str]:
    """Highest signed-score tokens; ties resolve alphabetically."""
    return [tok for tok, _ in result.token_scores[:n]]


def _logit_at(model: AttributionModel, x: np.ndarray, label: int) -> float:
    logits, _ = forward_batch(
        model.a_hat, model.h0, x[None, :], model.params,
        training=False, no_gcn=model.no_gcn,
    )
    return float(logits[0, label])


def _path_mean_gradient(
    model: AttributionModel, x: np.ndarray, x0: np.ndarray, label: int, steps: int
) -> np.ndarray:
    """Mean of dF/d(embedding) over the midpoint path points, one batched
    forward/backward (dropout forced off so the trace is deterministic)."""
    alphas = (np.arange(steps) + 0.5) / steps
    points = x0[None, :] + alphas[:, None] * (x - x0)[None, :]
    params0 = replace(model.params, dropout=0.0)
    logits, trace = forward_batch(
        model.a_hat, model.h0, points, params0, training=True, no_gcn=model.no_gcn,
    )
    d_logits = np.zeros_like(logits)
    d_logits[:, label] = 1.0
    grads = backward_full(trace, params0, d_logits)
    return grads.h_docs.mean(axis=0)


def integrated_gradients(
    model: AttributionModel,
    doc,
    label: int,
    steps: int = DEFAULT_STEPS,
    baseline: np.ndarray | None = None,
) -> AttributionResult:
    """IG_i = (x_i - x0_i) * mean over midpoint path of dF/dx_i, where F is
    the label's logit.

    `doc` is either an embedding vector (frozen mode; attributions per
    dimension, token aggregation unavailable) or a HashedDocument
    (reference mode; bucket attributions summed onto each token's n-grams).
    """
    if steps < 2:
        raise AttributionError("steps must be >= 2")
    if isinstance(doc, HashedDocument):
        return _ig_hashed(model, doc, label, steps)
    x = np.asarray(doc, dtype=np.float64)
    x0 = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=np.float64)
    mean_grad = _path_mean_gradient(model, x, x0, label, steps)
    attr = (x - x0) * mean_grad
    f_x = _logit_at(model, x, label)
    f_0 = _logit_at(model, x0, label)
    total = float(attr.sum())
    width = len(str(max(x.size - 1, 1)))
    scores = {f"dim_{i:0{width}d}": float(attr[i]) for i in range(x.size)}
    return AttributionResult(
        label=label,
        token_scores=_rank(scores),
        completeness_gap=abs(total - (f_x - f_0)),
        f_input=f_x,
        f_baseline=f_0,
        attribution_sum=total,
        mode="embedding",
    )


def _ig_hashed(
    model: AttributionModel, doc: HashedDocument, label: int, steps: int
) -> AttributionResult:
    # The document embedding is linear in the hashed input, so the straight
    # path in feature space maps to the straight path alpha * h_doc in
    # embedding space; bucket gradients pull back through the projection.
    proj = model.params.proj_enc
    if proj is None:
        raise AttributionError("model has no reference-encoder projection")
    n_chunks = len(doc.chunks)
    if n_chunks == 0:
        raise AttributionError("document has no chunks")
    h_doc = np.zeros(proj.shape[0])
    for chunk in doc.chunks:
        if chunk.idx.size:
            h_doc += proj[:, chunk.idx] @ chunk.val
    h_doc /= n_chunks
    x0 = np.zeros_like(h_doc)
    mean_grad = _path_mean_gradient(model, h_doc, x0, label, steps)

    bucket_attr: list[np.ndarray] = []
    total = 0.0
    for chunk in doc.chunks:
        if chunk.idx.size:
            g = (proj[:, chunk.idx].T @ mean_grad) / n_chunks
            attr = chunk.val * g
        else:
            attr = np.empty(0)
        bucket_attr.append(attr)
        total += float(attr.sum())

    f_x = _logit_at(model, h_doc, label)
    f_0 = _logit_at(model, x0, label)

    scores: dict[str, float] = {}

    def add(token: str, chunk_pos: int, ngram: bytes, chunk_idx: np.ndarray, attr: np.ndarray):
        bucket, _ = _hash_feature(ngram, doc.n_buckets)
        j = np.searchsorted(chunk_idx, bucket)
        if j < chunk_idx.size and chunk_idx[j] == bucket:
            scores[token] = scores.get(token, 0.0) + float(attr[j])

    for (start, end), chunk, attr in zip(doc.windows, doc.chunks, bucket_attr):
        if chunk.idx.size == 0:
            continue
        for i in range(start, end):
            tok = doc.tokens[i]
            scores.setdefault(tok, 0.0)
            add(tok, i, tok.encode("utf-8"), chunk.idx, attr)
            if i > start:
                add(tok, i, (doc.tokens[i - 1] + "\x1f" + tok).encode("utf-8"), chunk.idx, attr)
            if i + 1 < end:
                add(tok, i, (tok + "\x1f" + doc.tokens[i + 1]).encode("utf-8"), chunk.idx, attr)

    return AttributionResult(
        label=label,
        token_scores=_rank(scores),
        completeness_gap=abs(total - (f_x - f_0)),
        f_input=f_x,
        f_baseline=f_0,
        attribution_sum=total,
        mode="hashed",
    )
