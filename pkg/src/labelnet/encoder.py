"""Document encoding: tokenization, sliding-window chunking, and two encoders.

The trainable reference encoder hashes unigram/bigram features into signed
buckets and applies a learnable linear projection; the alternative is a
loader for precomputed embedding files written by an external adapter.
Both produce one fixed-dimension vector per document via mean pooling
over chunk vectors.
"""

from __future__ import annotations

import hashlib
import struct
import sys
import unicodedata
from dataclasses import dataclass

import numpy as np

from ._kernels import hashed_matvec, hashed_matvec_grad

EMBEDDING_MAGIC = b"LGEMB"
EMBEDDING_VERSION = 1

DEFAULT_WINDOW = 512
DEFAULT_STRIDE = 128
DEFAULT_MAX_CHUNKS = 4
DEFAULT_BUCKETS = 1 << 18
DEFAULT_DIM = 768


class EncoderError(ValueError):
    pass


@dataclass
class TokenSequence:
    tokens: list[str]

    @property
    def length(self) -> int:
        return len(self.tokens)


@dataclass
class ChunkSet:
    """Token spans [start, end) produced by the sliding window."""

    windows: list[tuple[int, int]]

    @property
    def count(self) -> int:
        return len(self.windows)


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> TokenSequence:
    """Lowercase, split on whitespace, strip edge punctuation, drop empties."""
    tokens = []
    for piece in text.lower().split():
        start, end = 0, len(piece)
        while start < end and _is_punct(piece[start]):
            start += 1
        while end > start and _is_punct(piece[end - 1]):
            end -= 1
        if end > start:
            tokens.append(piece[start:end])
    return TokenSequence(tokens=tokens)


def chunk_count(length: int, window: int, stride: int, max_chunks: int) -> int:
    """Closed form for the number of sliding windows over `length` tokens."""
    if length <= window:
        return 1
    return min(max_chunks, 1 + int(np.ceil((length - window) / stride)))


def make_chunks(
    seq: TokenSequence,
    window: int = DEFAULT_WINDOW,
    stride: int = DEFAULT_STRIDE,
    max_chunks: int = DEFAULT_MAX_CHUNKS,
) -> ChunkSet:
    """Windows at offsets 0, stride, 2*stride, ... until the end is covered
    or `max_chunks` is reached; the last window may be shorter than `window`."""
    if window <= 0:
        raise EncoderError("window must be positive")
    if not (0 < stride <= window):
        raise EncoderError("stride must be in (0, window]")
    length = seq.length
    windows: list[tuple[int, int]] = []
    start = 0
    while len(windows) < max_chunks:
        end = min(start + window, length)
        windows.append((start, end))
        if end >= length:
            break
        start += stride
    return ChunkSet(windows=windows)


# ---------------------------------------------------------------------------
# reference encoder: signed feature hashing + linear projection
# ---------------------------------------------------------------------------

def _hash_feature(data: bytes, n_buckets: int) -> tuple[int, float]:
    digest = hashlib.blake2b(data, digest_size=9).digest()
    bucket = int.from_bytes(digest[:8], "little") % n_buckets
    sign = 1.0 if digest[8] & 1 else -1.0
    return bucket, sign


def hash_window(tokens: list[str], n_buckets: int = DEFAULT_BUCKETS) -> tuple[np.ndarray, np.ndarray]:
    """Signed hashed bag of unigrams and bigrams, L2-normalized.

    Returns (bucket indices, values); exact cancellations are dropped, so an
    empty result means the zero feature vector.
    """
    acc: dict[int, float] = {}
    prev = None
    for tok in tokens:
        b, s = _hash_feature(tok.encode("utf-8"), n_buckets)
        acc[b] = acc.get(b, 0.0) + s
        if prev is not None:
            b2, s2 = _hash_feature((prev + "\x1f" + tok).encode("utf-8"), n_buckets)
            acc[b2] = acc.get(b2, 0.0) + s2
        prev = tok
    items = sorted((b, v) for b, v in acc.items() if v != 0.0)
    if not items:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
    idx = np.array([b for b, _ in items], dtype=np.int64)
    val = np.array([v for _, v in items], dtype=np.float64)
    val /= np.linalg.norm(val)
    return idx, val


@dataclass
class HashedChunk:
    """Cached sparse featurization of one window."""

    idx: np.ndarray
    val: np.ndarray


def featurize(
    seq: TokenSequence,
    chunks: ChunkSet,
    n_buckets: int = DEFAULT_BUCKETS,
) -> list[HashedChunk]:
    out = []
    for start, end in chunks.windows:
        idx, val = hash_window(seq.tokens[start:end], n_buckets)
        out.append(HashedChunk(idx=idx, val=val))
    return out


def init_projection(dim: int, n_buckets: int, rng: np.random.Generator) -> np.ndarray:
    """Kaiming-style uniform fan-in init for the projection weights."""
    bound = float(np.sqrt(3.0 / n_buckets))
    return rng.uniform(-bound, bound, size=(dim, n_buckets))


def encode_chunk_reference(chunk: HashedChunk, projection: np.ndarray) -> np.ndarray:
    """Project one hashed window to the embedding dimension."""
    return hashed_matvec(projection, chunk.idx, chunk.val)


def encode_chunk_reference_grad(
    chunk: HashedChunk, d_vector: np.ndarray, d_projection: np.ndarray
) -> None:
    """Accumulate d(loss)/d(projection) for one chunk, in place."""
    if chunk.idx.size:
        hashed_matvec_grad(np.ascontiguousarray(d_vector), chunk.idx, chunk.val, d_projection)


def pool_chunks(chunk_vectors: list[np.ndarray]) -> np.ndarray:
    """Arithmetic mean over chunk vectors."""
    if not chunk_vectors:
        raise EncoderError("cannot pool an empty chunk list")
    out = np.zeros_like(chunk_vectors[0])
    for v in chunk_vectors:
        out += v
    return out / len(chunk_vectors)


def encode_document(
    text: str,
    projection: np.ndarray,
    window: int = DEFAULT_WINDOW,
    stride: int = DEFAULT_STRIDE,
    max_chunks: int = DEFAULT_MAX_CHUNKS,
    n_buckets: int = DEFAULT_BUCKETS,
) -> np.ndarray:
    seq = tokenize(text)
    chunks = make_chunks(seq, window, stride, max_chunks)
    feats = featurize(seq, chunks, n_buckets)
    return pool_chunks([encode_chunk_reference(f, projection) for f in feats])


# ---------------------------------------------------------------------------
# embedding file format (shared contract with the export adapter)
# ---------------------------------------------------------------------------
# header: magic "LGEMB", u16 version, u64 record count, u32 dimension
# payload: repeated (u64 record id, dimension * little-endian f32)

_HEADER = struct.Struct("<5sHQI")
_REC_ID = struct.Struct("<Q")


def write_embeddings(path, vectors: dict[int, np.ndarray]) -> None:
    """Write record-id keyed vectors in the byte-exact embedding format."""
    if not vectors:
        dim = 0
    else:
        dims = {np.asarray(v).shape[0] for v in vectors.values()}
        if len(dims) != 1:
            raise EncoderError(f"inconsistent embedding dimensions: {sorted(dims)}")
        dim = dims.pop()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(EMBEDDING_MAGIC, EMBEDDING_VERSION, len(vectors), dim))
        for rid in sorted(vectors):
            fh.write(_REC_ID.pack(rid))
            fh.write(np.asarray(vectors[rid], dtype="<f4").tobytes())


def load_precomputed(path) -> dict[int, np.ndarray]:
    """Load an embedding file; validates magic, version, payload size,
    duplicate ids, and non-finite entries (errors name the record id)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise EncoderError("embedding file truncated: header incomplete")
    magic, version, count, dim = _HEADER.unpack_from(blob, 0)
    if magic != EMBEDDING_MAGIC:
        raise EncoderError(f"bad magic {magic!r}, expected {EMBEDDING_MAGIC!r}")
    if version != EMBEDDING_VERSION:
        raise EncoderError(f"unsupported embedding format version {version}")
    rec_size = _REC_ID.size + 4 * dim
    expected = _HEADER.size + count * rec_size
    if len(blob) != expected:
        raise EncoderError(f"embedding payload truncated: {len(blob)} bytes, expected {expected}")
    out: dict[int, np.ndarray] = {}
    offset = _HEADER.size
    for _ in range(count):
        (rid,) = _REC_ID.unpack_from(blob, offset)
        offset += _REC_ID.size
        vec = np.frombuffer(blob, dtype="<f4", count=dim, offset=offset).copy()
        offset += 4 * dim
        if rid in out:
            raise EncoderError(f"duplicate record id {rid} in embedding file")
        if not np.all(np.isfinite(vec)):
            raise EncoderError(f"non-finite embedding entry for record id {rid}")
        if sys.byteorder != "little":
            vec = vec.astype(np.float32)
        out[rid] = vec
    return out
