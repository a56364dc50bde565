"""Label graph construction: node features, similarity+chapter edges,
symmetric normalization.

Nodes are the K output classes. An edge joins classes whose node-feature
cosine similarity, plus a fixed bonus when both map to the same ontology
chapter, clears the threshold. The graph is built once from training data
and frozen.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, SplitAssignment

DEFAULT_TAU = 0.30
DEFAULT_BONUS = 0.20
DEFAULT_PER_LABEL_CAP = 30
NO_CHAPTER = "NONE"


class GraphError(ValueError):
    pass


@dataclass
class ChapterMap:
    """Specialty name -> chapter code; unknown names fall back to NONE,
    which never grants the bonus."""

    chapter: dict[str, str]

    def code(self, name: str) -> str:
        return self.chapter.get(name, NO_CHAPTER)

    @classmethod
    def load(cls, path) -> "ChapterMap":
        mapping = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                name, code = line.rsplit(",", 1)
                mapping[name.strip()] = code.strip() or NO_CHAPTER
        return cls(chapter=mapping)


@dataclass
class LabelGraph:
    node_features: np.ndarray   # K x d_enc
    adjacency: np.ndarray       # K x K binary, zero diagonal
    normalized: np.ndarray      # K x K, D^-1/2 (A+I) D^-1/2
    tau: float
    bonus: float

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.node_features, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.normalized, dtype="<f8").tobytes())
        return h.hexdigest()


def build_node_features(
    corpus: Corpus,
    split: SplitAssignment,
    embeddings: dict[int, np.ndarray],
    per_label_cap: int = DEFAULT_PER_LABEL_CAP,
    seed: int = 42,
) -> np.ndarray:
    """Per label, mean-pool embeddings of up to `per_label_cap` training
    documents taken in seeded-shuffle order of that label's training split."""
    rng = np.random.default_rng(seed)
    k = corpus.vocabulary.size
    rows = []
    for label, group in enumerate(corpus.by_label()):
        train_ids = [rid for rid in group if split.split[rid] == "train" and rid in embeddings]
        if not train_ids:
            raise GraphError(
                f"label {corpus.vocabulary.names[label]!r} has no training document with an embedding"
            )
        perm = rng.permutation(len(train_ids))
        chosen = [train_ids[i] for i in perm[:per_label_cap]]
        acc = np.zeros_like(np.asarray(embeddings[chosen[0]], dtype=np.float64))
        for rid in chosen:
            acc += np.asarray(embeddings[rid], dtype=np.float64)
        rows.append(acc / len(chosen))
    return np.stack(rows)


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """u.v / (|u||v|); defined as 0 when either vector is zero."""
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def build_adjacency(
    features: np.ndarray,
    chapters: list[str],
    tau: float = DEFAULT_TAU,
    bonus: float = DEFAULT_BONUS,
) -> np.ndarray:
    """Edge iff cosine(i,j) + chapter bonus >= tau (inclusive), i != j.

    `chapters` holds the chapter code per label id; the bonus applies only
    when both codes match and neither is NONE. Diagonal stays empty --
    self-loops enter via normalization.
    """
    k = features.shape[0]
    if len(chapters) != k:
        raise GraphError(f"chapter list length {len(chapters)} != {k} labels")
    adj = np.zeros((k, k), dtype=np.float64)
    for i in range(k):
        for j in range(i + 1, k):
            s = cosine_similarity(features[i], features[j])
            b = bonus if (chapters[i] == chapters[j] and chapters[i] != NO_CHAPTER) else 0.0
            if s + b >= tau:
                adj[i, j] = adj[j, i] = 1.0
    return adj


def normalize_adjacency(adjacency: np.ndarray) -> np.ndarray:
    """Symmetric normalization D^-1/2 (A+I) D^-1/2 with D the degree matrix
    of A+I; self-loops keep every degree >= 1."""
    a_hat = adjacency + np.eye(adjacency.shape[0])
    deg = a_hat.sum(axis=1)
    d_inv_sqrt = 1.0 / np.sqrt(deg)
    # elementwise (A+I)_ij * d_i^-1/2 * d_j^-1/2; exactly symmetric because
    # the same product is computed on both triangles
    return a_hat * np.outer(d_inv_sqrt, d_inv_sqrt)


def build_label_graph(
    corpus: Corpus,
    split: SplitAssignment,
    embeddings: dict[int, np.ndarray],
    chapter_map: ChapterMap,
    tau: float = DEFAULT_TAU,
    bonus: float = DEFAULT_BONUS,
    per_label_cap: int = DEFAULT_PER_LABEL_CAP,
    seed: int = 42,
) -> LabelGraph:
    features = build_node_features(corpus, split, embeddings, per_label_cap, seed)
    chapters = [chapter_map.code(name) for name in corpus.vocabulary.names]
    adjacency = build_adjacency(features, chapters, tau, bonus)
    return LabelGraph(
        node_features=features,
        adjacency=adjacency,
        normalized=normalize_adjacency(adjacency),
        tau=tau,
        bonus=bonus,
    )


def spectral_radius(matrix: np.ndarray, iterations: int = 200, seed: int = 0) -> float:
    """Power-iteration estimate of the dominant eigenvalue magnitude."""
    rng = np.random.default_rng(seed)
    v = rng.normal(size=matrix.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iterations):
        w = matrix @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        lam = float(v @ (matrix @ v))
    return abs(lam)


def export_edge_list(graph: LabelGraph, names: list[str], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(graph.n_nodes):
            for j in range(i + 1, graph.n_nodes):
                if graph.adjacency[i, j]:
                    fh.write(f"{i},{j},{names[i]},{names[j]}\n")
