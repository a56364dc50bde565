"""The differentiable core: two graph-convolution layers over the label
graph, document projection, per-label attention gating, per-label linear
heads, and the manually derived backward pass for all of it.

No autodiff: every gradient below is hand-written for exactly this
architecture and checked against central finite differences in the tests.
All math is float64.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

DEFAULT_D1 = 512
DEFAULT_D2 = 256
DEFAULT_DROPOUT = 0.3

CHECKPOINT_MAGIC = b"LNCKPT"
CHECKPOINT_VERSION = 1


class NetworkError(ValueError):
    pass


def sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class ModelParams:
    """All trainable tensors. `proj_enc` (the reference-encoder projection)
    is present only when the trainable encoder is in use."""

    w0: np.ndarray                 # d_enc x d1
    w1: np.ndarray                 # d1 x d2
    wp: np.ndarray                 # d_enc x d2
    gates: np.ndarray              # K x 2*d2
    head_w: np.ndarray             # K x d2
    head_b: np.ndarray             # K
    proj_enc: np.ndarray | None = None   # d_enc x n_buckets
    dropout: float = DEFAULT_DROPOUT

    def blocks(self) -> list[tuple[str, np.ndarray, bool]]:
        """(name, tensor, decay_exempt) for every trainable block."""
        out = [
            ("w0", self.w0, False),
            ("w1", self.w1, False),
            ("wp", self.wp, False),
            ("gates", self.gates, False),
            ("head_w", self.head_w, False),
            ("head_b", self.head_b, True),
        ]
        if self.proj_enc is not None:
            out.append(("proj_enc", self.proj_enc, False))
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(
            w0=self.w0.copy(),
            w1=self.w1.copy(),
            wp=self.wp.copy(),
            gates=self.gates.copy(),
            head_w=self.head_w.copy(),
            head_b=self.head_b.copy(),
            proj_enc=None if self.proj_enc is None else self.proj_enc.copy(),
            dropout=self.dropout,
        )

    @property
    def n_labels(self) -> int:
        return self.gates.shape[0]

    @property
    def d2(self) -> int:
        return self.wp.shape[1]


def init_params(
    d_enc: int,
    d1: int,
    d2: int,
    n_labels: int,
    rng: np.random.Generator,
    dropout: float = DEFAULT_DROPOUT,
    with_encoder: bool = False,
    n_buckets: int = 0,
) -> ModelParams:
    """Kaiming-style uniform fan-in init for the dense weights; gate vectors
    and heads start at zero so both branches begin equally weighted."""

    def kaiming(fan_in, shape):
        bound = float(np.sqrt(6.0 / fan_in))
        return rng.uniform(-bound, bound, size=shape)

    proj = None
    if with_encoder:
        from .encoder import init_projection

        proj = init_projection(d_enc, n_buckets, rng)
    return ModelParams(
        w0=kaiming(d_enc, (d_enc, d1)),
        w1=kaiming(d1, (d1, d2)),
        wp=kaiming(d_enc, (d_enc, d2)),
        gates=np.zeros((n_labels, 2 * d2)),
        head_w=np.zeros((n_labels, d2)),
        head_b=np.zeros(n_labels),
        proj_enc=proj,
        dropout=dropout,
    )


@dataclass
class GcnTrace:
    a_hat: np.ndarray
    ah0: np.ndarray                # a_hat @ h0
    relu1: np.ndarray              # m1 > 0
    relu2: np.ndarray
    ah1: np.ndarray                # a_hat @ h1_dropped
    mask1: np.ndarray | None
    mask2: np.ndarray | None
    keep: float


@dataclass
class ForwardTrace:
    """Intermediates retained by a training-mode forward pass."""

    gcn: GcnTrace | None
    h2: np.ndarray | None          # K x d2 as consumed by gating
    h_docs: np.ndarray             # B x d_enc
    h_proj: np.ndarray             # B x d2
    alphas: np.ndarray | None      # B x K
    fused: np.ndarray              # B x K x d2
    no_gcn: bool


@dataclass
class Gradients:
    w0: np.ndarray
    w1: np.ndarray
    wp: np.ndarray
    gates: np.ndarray
    head_w: np.ndarray
    head_b: np.ndarray
    h_docs: np.ndarray | None = None   # upstream grad into embeddings

    def blocks(self) -> list[tuple[str, np.ndarray]]:
        return [
            ("w0", self.w0),
            ("w1", self.w1),
            ("wp", self.wp),
            ("gates", self.gates),
            ("head_w", self.head_w),
            ("head_b", self.head_b),
        ]


def gcn_forward(
    a_hat: np.ndarray,
    h0: np.ndarray,
    params: ModelParams,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, GcnTrace | None]:
    """h2 = drop(relu(A (drop(relu(A h0 W0))) W1)); inverted dropout keeps
    the eval path a pure function of its inputs."""
    keep = 1.0 - params.dropout
    ah0 = a_hat @ h0
    m1 = ah0 @ params.w0
    r1 = np.maximum(m1, 0.0)
    mask1 = mask2 = None
    if training and params.dropout > 0.0:
        if rng is None:
            raise NetworkError("training-mode dropout needs an rng")
        mask1 = rng.random(r1.shape) >= params.dropout
        h1 = r1 * mask1 / keep
    else:
        h1 = r1
    ah1 = a_hat @ h1
    m2 = ah1 @ params.w1
    r2 = np.maximum(m2, 0.0)
    if training and params.dropout > 0.0:
        mask2 = rng.random(r2.shape) >= params.dropout
        h2 = r2 * mask2 / keep
    else:
        h2 = r2
    trace = None
    if training:
        trace = GcnTrace(
            a_hat=a_hat, ah0=ah0, relu1=m1 > 0.0, relu2=m2 > 0.0,
            ah1=ah1, mask1=mask1, mask2=mask2, keep=keep,
        )
    return h2, trace


def gate_fuse(
    h_docs: np.ndarray, h2: np.ndarray, params: ModelParams
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-label convex combination of the projected document embedding and
    the graph-enriched label row, steered by a learned gate.

    Returns (fused B x K x d2, alphas B x K, h_proj B x d2).
    """
    d2 = params.d2
    h_proj = h_docs @ params.wp                     # B x d2
    pre = h_proj @ params.gates[:, :d2].T + (params.gates[:, d2:] * h2).sum(axis=1)[None, :]
    alphas = sigmoid(pre)                           # B x K
    fused = alphas[:, :, None] * h_proj[:, None, :] + (1.0 - alphas)[:, :, None] * h2[None, :, :]
    return fused, alphas, h_proj


def head_logits(fused: np.ndarray, params: ModelParams) -> np.ndarray:
    """logit_k = w_k . z_k + b_k (probabilities are produced downstream)."""
    return (fused * params.head_w[None, :, :]).sum(axis=2) + params.head_b[None, :]


def forward_batch(
    a_hat: np.ndarray | None,
    h0: np.ndarray | None,
    h_docs: np.ndarray,
    params: ModelParams,
    training: bool = False,
    rng: np.random.Generator | None = None,
    no_gcn: bool = False,
) -> tuple[np.ndarray, ForwardTrace | None]:
    """Full forward pass for a batch of document embeddings.

    With `no_gcn` the graph branch is bypassed and classification uses only
    the projected document embedding.
    """
    if no_gcn:
        h_proj = h_docs @ params.wp
        fused = np.repeat(h_proj[:, None, :], params.n_labels, axis=1)
        logits = head_logits(fused, params)
        trace = None
        if training:
            trace = ForwardTrace(
                gcn=None, h2=None, h_docs=h_docs, h_proj=h_proj,
                alphas=None, fused=fused, no_gcn=True,
            )
        return logits, trace
    h2, gcn_trace = gcn_forward(a_hat, h0, params, training, rng)
    fused, alphas, h_proj = gate_fuse(h_docs, h2, params)
    logits = head_logits(fused, params)
    trace = None
    if training:
        trace = ForwardTrace(
            gcn=gcn_trace, h2=h2, h_docs=h_docs, h_proj=h_proj,
            alphas=alphas, fused=fused, no_gcn=False,
        )
    return logits, trace


def backward_full(trace: ForwardTrace | None, params: ModelParams, d_logits: np.ndarray) -> Gradients:
    """Exact analytic gradients for every parameter block plus the upstream
    gradient into the document embeddings. Dropout masks recorded by the
    forward pass are reused.
    """
    if trace is None:
        raise NetworkError("backward requires a training-mode forward trace")
    b, k = d_logits.shape
    d2 = params.d2

    d_head_w = (d_logits[:, :, None] * trace.fused).sum(axis=0)
    d_head_b = d_logits.sum(axis=0)
    d_fused = d_logits[:, :, None] * params.head_w[None, :, :]   # B x K x d2

    if trace.no_gcn:
        d_hproj = d_fused.sum(axis=1)                            # B x d2
        d_wp = trace.h_docs.T @ d_hproj
        d_hdocs = d_hproj @ params.wp.T
        return Gradients(
            w0=np.zeros_like(params.w0), w1=np.zeros_like(params.w1), wp=d_wp,
            gates=np.zeros_like(params.gates), head_w=d_head_w, head_b=d_head_b,
            h_docs=d_hdocs,
        )

    alphas = trace.alphas
    h_proj = trace.h_proj
    h2 = trace.h2
    diff = h_proj[:, None, :] - h2[None, :, :]                   # B x K x d2
    d_alpha = (d_fused * diff).sum(axis=2)                       # B x K
    d_hproj = (alphas[:, :, None] * d_fused).sum(axis=1)         # B x d2
    d_h2 = ((1.0 - alphas)[:, :, None] * d_fused).sum(axis=0)    # K x d2

    d_pre = d_alpha * alphas * (1.0 - alphas)                    # B x K
    gate_p, gate_q = params.gates[:, :d2], params.gates[:, d2:]
    d_gates = np.concatenate(
        [d_pre.T @ h_proj, d_pre.sum(axis=0)[:, None] * h2], axis=1
    )
    d_hproj += d_pre @ gate_p
    d_h2 += d_pre.sum(axis=0)[:, None] * gate_q

    d_wp = trace.h_docs.T @ d_hproj
    d_hdocs = d_hproj @ params.wp.T

    g = trace.gcn
    if g.mask2 is not None:
        d_r2 = d_h2 * g.mask2 / g.keep
    else:
        d_r2 = d_h2
    d_m2 = d_r2 * g.relu2
    d_w1 = g.ah1.T @ d_m2
    d_h1 = g.a_hat.T @ (d_m2 @ params.w1.T)
    if g.mask1 is not None:
        d_r1 = d_h1 * g.mask1 / g.keep
    else:
        d_r1 = d_h1
    d_m1 = d_r1 * g.relu1
    d_w0 = g.ah0.T @ d_m1

    return Gradients(
        w0=d_w0, w1=d_w1, wp=d_wp, gates=d_gates,
        head_w=d_head_w, head_b=d_head_b, h_docs=d_hdocs,
    )


# ---------------------------------------------------------------------------
# checkpoint container: versioned JSON metadata + float64 tensors
# ---------------------------------------------------------------------------

_CKPT_HEADER = struct.Struct("<6sHI")


def write_container(path, meta: dict, tensors: dict[str, np.ndarray]) -> None:
    meta = dict(meta)
    meta["tensors"] = [
        {"name": name, "shape": list(np.asarray(t).shape)} for name, t in tensors.items()
    ]
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for t in tensors.values():
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


def read_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _CKPT_HEADER.size:
        raise NetworkError("checkpoint truncated: header incomplete")
    magic, version, json_len = _CKPT_HEADER.unpack_from(blob, 0)
    if magic != CHECKPOINT_MAGIC:
        raise NetworkError(f"bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise NetworkError(f"unsupported checkpoint version {version}")
    offset = _CKPT_HEADER.size
    meta = json.loads(blob[offset:offset + json_len].decode("utf-8"))
    offset += json_len
    tensors = {}
    for spec in meta["tensors"]:
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).copy()
        offset += 8 * count
        tensors[spec["name"]] = arr.reshape(spec["shape"]).astype(np.float64)
    if offset != len(blob):
        raise NetworkError("checkpoint has trailing bytes")
    return meta, tensors


def save_checkpoint(
    path,
    params: ModelParams,
    label_names: list[str],
    graph_hash: str,
    config: dict,
) -> None:
    tensors = {name: t for name, t, _ in params.blocks()}
    meta = {
        "type": "network",
        "labels": label_names,
        "graph_hash": graph_hash,
        "config": config,
        "dropout": params.dropout,
    }
    write_container(path, meta, tensors)


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    meta, tensors = read_container(path)
    if meta.get("type") != "network":
        raise NetworkError(f"checkpoint type {meta.get('type')!r} is not a network checkpoint")
    required = ("w0", "w1", "wp", "gates", "head_w", "head_b")
    for name in required:
        if name not in tensors:
            raise NetworkError(f"checkpoint missing tensor {name!r}")
    params = ModelParams(
        w0=tensors["w0"], w1=tensors["w1"], wp=tensors["wp"],
        gates=tensors["gates"], head_w=tensors["head_w"], head_b=tensors["head_b"],
        proj_enc=tensors.get("proj_enc"),
        dropout=float(meta.get("dropout", DEFAULT_DROPOUT)),
    )
    k = params.gates.shape[0]
    d2 = params.wp.shape[1]
    d_enc = params.wp.shape[0]
    checks = [
        params.w0.shape[0] == d_enc,
        params.w0.shape[1] == params.w1.shape[0],
        params.w1.shape[1] == d2,
        params.gates.shape == (k, 2 * d2),
        params.head_w.shape == (k, d2),
        params.head_b.shape == (k,),
        len(meta["labels"]) == k,
    ]
    if not all(checks):
        raise NetworkError("checkpoint tensor dimensions are inconsistent")
    return params, meta
