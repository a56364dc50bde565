"""Training loop: AdamW with two parameter groups, cosine schedule with
linear warmup, global gradient clipping, gradient accumulation, and early
stopping on validation macro-F1.

Deterministic end to end for a fixed seed: one generator drives epoch
shuffles and dropout masks, and gradient reduction runs in fixed document
order.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .metrics import binarize, macro_f1
from .network import ModelParams, backward_full, forward_batch, sigmoid
from .objective import FocalConfig, focal_bce_batch

ABLATION_VARIANTS = ("A1", "A2", "A4", "A5")


class TrainError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr_encoder: float = 2e-5
    lr_head: float = 1e-3
    weight_decay: float = 0.01
    warmup_fraction: float = 0.10
    clip_norm: float = 1.0
    batch_size: int = 16
    accumulation_steps: int = 2
    max_epochs: int = 30
    patience: int = 5
    seed: int = 42
    no_gcn: bool = False              # A1: document branch only
    plain_bce: bool = False           # A2: gamma=0, unit weights
    no_sliding_window: bool = False   # A4: single-chunk encoding (applied upstream)
    fixed_threshold: bool = False     # A5: evaluation-time 0.5 thresholds


def apply_ablation(variant: str, config: TrainConfig) -> TrainConfig:
    """Switchboard mapping a variant id onto config flags."""
    if variant == "A1":
        return replace(config, no_gcn=True)
    if variant == "A2":
        return replace(config, plain_bce=True)
    if variant == "A4":
        return replace(config, no_sliding_window=True)
    if variant == "A5":
        return replace(config, fixed_threshold=True)
    raise TrainError(f"unknown ablation variant {variant!r}")


def run_ablation(variant: str, base: TrainConfig, runner):
    """Run one ablation variant through a pipeline callback.

    A1/A2/A4 retrain with one component disabled; A5 reuses full training
    and only switches evaluation to fixed 0.5 thresholds. `runner` maps a
    flagged TrainConfig to an evaluation report.
    """
    return runner(apply_ablation(variant, base))


def lr_schedule(step: int, total_steps: int, peak: float, warmup_fraction: float) -> float:
    """Linear ramp 0 -> peak over floor(warmup_fraction * total_steps) steps,
    then cosine decay peak -> 0 at step == total_steps."""
    if total_steps <= 0:
        raise TrainError("total_steps must be positive")
    warmup = int(warmup_fraction * total_steps)
    if warmup > 0 and step < warmup:
        return peak * step / warmup
    span = max(total_steps - warmup, 1)
    progress = min(max((step - warmup) / span, 0.0), 1.0)
    return peak * 0.5 * (1.0 + float(np.cos(np.pi * progress)))


@dataclass
class AdamWState:
    """Decoupled-weight-decay Adam moments, one pair per parameter block."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def ensure(self, name: str, shape) -> None:
        if name not in self.m:
            self.m[name] = np.zeros(shape)
            self.v[name] = np.zeros(shape)


def adamw_step(
    blocks: list[tuple[str, np.ndarray, bool]],
    grads: dict[str, np.ndarray],
    state: AdamWState,
    lr_map: dict[str, float],
    weight_decay: float,
) -> None:
    """One update over all blocks, in place. Decay is applied directly to the
    parameters before the moment term and skipped for decay-exempt blocks
    (bias scalars)."""
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, param, exempt in blocks:
        g = grads[name]
        lr = lr_map[name]
        state.ensure(name, param.shape)
        if not exempt and weight_decay > 0.0:
            param -= lr * weight_decay * param
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        param -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients by max_norm/norm when the global L2 norm exceeds
    max_norm; returns the pre-clip norm."""
    if max_norm <= 0:
        raise TrainError("max_norm must be positive")
    total = 0.0
    for g in grads.values():
        total += float((g * g).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


# ---------------------------------------------------------------------------
# embedding sources
# ---------------------------------------------------------------------------

class ReferenceSource:
    """Trainable encoder: cached hashed chunks, projection owned by the model."""

    def __init__(self, chunk_cache: dict[int, list]):
        self.chunks = chunk_cache
        self.trainable = True

    def embed(self, params: ModelParams, ids) -> np.ndarray:
        from .encoder import encode_chunk_reference, pool_chunks

        rows = []
        for rid in ids:
            feats = self.chunks[rid]
            rows.append(pool_chunks([encode_chunk_reference(f, params.proj_enc) for f in feats]))
        return np.stack(rows)

    def backward(self, ids, d_hdocs: np.ndarray, d_proj: np.ndarray) -> None:
        from .encoder import encode_chunk_reference_grad

        for rid, d_h in zip(ids, d_hdocs):
            feats = self.chunks[rid]
            d_chunk = d_h / len(feats)
            for f in feats:
                encode_chunk_reference_grad(f, d_chunk, d_proj)


class PrecomputedSource:
    """Frozen embeddings loaded from file."""

    def __init__(self, embeddings: dict[int, np.ndarray]):
        self.vectors = {rid: np.asarray(v, dtype=np.float64) for rid, v in embeddings.items()}
        self.trainable = False

    def embed(self, params: ModelParams, ids) -> np.ndarray:
        return np.stack([self.vectors[rid] for rid in ids])

    def backward(self, ids, d_hdocs, d_proj) -> None:
        pass


@dataclass
class TrainTask:
    """Everything the loop needs besides hyperparameters."""

    a_hat: np.ndarray | None
    h0: np.ndarray | None
    source: object
    train_ids: list[int]
    val_ids: list[int]
    targets: dict[int, int]
    n_labels: int
    focal: FocalConfig


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_macro_f1: float
    lr_encoder: float
    lr_head: float
    seconds: float


@dataclass
class TrainResult:
    params: ModelParams
    best_val_f1: float
    best_epoch: int
    log: list[EpochLog]
    total_steps: int


def predict_logits(
    params: ModelParams,
    source,
    ids,
    a_hat=None,
    h0=None,
    no_gcn: bool = False,
    batch: int = 256,
) -> np.ndarray:
    """Eval-mode logits for a list of record ids (deterministic, no dropout)."""
    out = []
    for lo in range(0, len(ids), batch):
        chunk = ids[lo:lo + batch]
        h_docs = source.embed(params, chunk)
        logits, _ = forward_batch(a_hat, h0, h_docs, params, training=False, no_gcn=no_gcn)
        out.append(logits)
    return np.concatenate(out, axis=0) if out else np.zeros((0, params.n_labels))


def _zero_grads(params: ModelParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(t) for name, t, _ in params.blocks()}


def train(task: TrainTask, params: ModelParams, config: TrainConfig) -> TrainResult:
    """Run the full loop and return the best-epoch snapshot.

    Per epoch: seeded shuffle of the training ids, micro-batches of
    `batch_size`, an optimizer step every `accumulation_steps` micro-batches
    (a trailing odd micro-batch still steps, scaled by its true document
    count), then validation macro-F1 at threshold 0.5. Stops after
    `patience` epochs without improvement.
    """
    rng = np.random.default_rng(config.seed)
    n_train = len(task.train_ids)
    if n_train == 0:
        raise TrainError("empty training split")
    micro_per_epoch = int(np.ceil(n_train / config.batch_size))
    steps_per_epoch = int(np.ceil(micro_per_epoch / config.accumulation_steps))
    total_steps = config.max_epochs * steps_per_epoch

    state = AdamWState()
    step = 0
    best_f1 = -1.0
    best_epoch = 0
    best_params = params.copy()
    since_improve = 0
    log: list[EpochLog] = []
    val_targets = np.array([task.targets[rid] for rid in task.val_ids], dtype=np.int64)
    half = np.full(task.n_labels, 0.5)

    for epoch in range(1, config.max_epochs + 1):
        tic = time.perf_counter()
        order = [task.train_ids[i] for i in rng.permutation(n_train)]
        epoch_loss = 0.0
        acc_grads = _zero_grads(params)
        acc_count = 0
        acc_micro = 0
        lr_enc = lr_head = 0.0

        def optimizer_step():
            nonlocal step, acc_grads, acc_count, acc_micro, lr_enc, lr_head
            for g in acc_grads.values():
                g /= acc_count
            clip_gradients(acc_grads, config.clip_norm)
            lr_enc = lr_schedule(step, total_steps, config.lr_encoder, config.warmup_fraction)
            lr_head = lr_schedule(step, total_steps, config.lr_head, config.warmup_fraction)
            lr_map = {
                name: (lr_enc if name == "proj_enc" else lr_head)
                for name, _, _ in params.blocks()
            }
            adamw_step(params.blocks(), acc_grads, state, lr_map, config.weight_decay)
            step += 1
            acc_grads = _zero_grads(params)
            acc_count = 0
            acc_micro = 0

        for lo in range(0, n_train, config.batch_size):
            ids = order[lo:lo + config.batch_size]
            h_docs = task.source.embed(params, ids)
            logits, trace = forward_batch(
                task.a_hat, task.h0, h_docs, params,
                training=True, rng=rng, no_gcn=config.no_gcn,
            )
            targets = np.array([task.targets[rid] for rid in ids], dtype=np.int64)
            loss_sum, d_logits = focal_bce_batch(logits, targets, task.focal)
            if not np.isfinite(loss_sum):
                raise TrainError(f"non-finite loss at step {step}")
            epoch_loss += loss_sum
            grads = backward_full(trace, params, d_logits)
            for name, g in grads.blocks():
                acc_grads[name] += g
            if task.source.trainable:
                task.source.backward(ids, grads.h_docs, acc_grads["proj_enc"])
            acc_count += len(ids)
            acc_micro += 1
            if acc_micro == config.accumulation_steps:
                optimizer_step()
        if acc_count > 0:
            optimizer_step()

        val_logits = predict_logits(
            params, task.source, task.val_ids,
            a_hat=task.a_hat, h0=task.h0, no_gcn=config.no_gcn,
        )
        decisions = binarize(sigmoid(val_logits), half)
        val_f1 = macro_f1(decisions, val_targets, task.n_labels)
        log.append(EpochLog(
            epoch=epoch,
            train_loss=epoch_loss / n_train,
            val_macro_f1=val_f1,
            lr_encoder=lr_enc,
            lr_head=lr_head,
            seconds=time.perf_counter() - tic,
        ))
        if val_f1 > best_f1:
            best_f1 = val_f1
            best_epoch = epoch
            best_params = params.copy()
            since_improve = 0
        else:
            since_improve += 1
            if since_improve >= config.patience:
                break

    return TrainResult(
        params=best_params, best_val_f1=best_f1, best_epoch=best_epoch,
        log=log, total_steps=total_steps,
    )
