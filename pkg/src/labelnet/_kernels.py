"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

Backend selection: set LABELNET_BACKEND to "numba" or "numpy" to force one;
the default ("auto") uses numba when it imports cleanly. Every kernel has
both implementations with identical semantics; `tests/test_kernels.py`
asserts parity and `benchmarks/bench_kernels.py` compares speed.
"""

from __future__ import annotations

import math
import os

import numpy as np

_CHOICE = os.environ.get("LABELNET_BACKEND", "auto").strip().lower()
if _CHOICE not in ("auto", "numba", "numpy"):
    raise ValueError(f"LABELNET_BACKEND must be auto|numba|numpy, got {_CHOICE!r}")

_HAVE_NUMBA = False
if _CHOICE in ("auto", "numba"):
    try:
        from numba import njit

        _HAVE_NUMBA = True
    except ImportError:
        if _CHOICE == "numba":
            raise


# ---------------------------------------------------------------------------
# pure-numpy implementations (reference semantics)
# ---------------------------------------------------------------------------

def _hashed_matvec_np(weights, idx, val):
    # y = W[:, idx] @ val for a sparse signed bucket vector
    if idx.size == 0:
        return np.zeros(weights.shape[0], dtype=np.float64)
    return weights[:, idx] @ val


def _hashed_matvec_grad_np(d_out, idx, val, d_weights):
    # dW[:, idx[j]] += d_out * val[j], accumulated in place
    for j in range(idx.size):
        d_weights[:, idx[j]] += d_out * val[j]


def _focal_terms_np(logits, targets, weights, gamma):
    """Fused focal BCE over a batch: returns (sum of per-doc losses, dL/dlogits).

    Per doc the loss is the mean over K one-vs-rest terms
    w_k * (1-p_t)^gamma * (-log p_t) evaluated through log-sigmoid
    identities so extreme logits never produce log(0).
    """
    n, k = logits.shape
    onehot_sign = np.full((n, k), -1.0)
    onehot_sign[np.arange(n), targets] = 1.0
    z = onehot_sign * logits          # p_t = sigmoid(z)
    # stable pieces: log p_t = -softplus(-z), log(1-p_t) = -softplus(z)
    softplus_nz = np.logaddexp(0.0, -z)      # -log p_t
    softplus_pz = np.logaddexp(0.0, z)       # -log (1 - p_t)
    u = np.exp(-softplus_nz)                 # p_t
    one_minus = np.exp(-softplus_pz)         # 1 - p_t
    mod = one_minus ** gamma
    terms = weights[None, :] * mod * softplus_nz
    loss_sum = float(terms.sum() / k)
    # d term/d logit = w * s * [gamma * u * (1-u)^gamma * log(u) - (1-u)^(gamma+1)]
    log_u = -softplus_nz
    dterm_dz = weights[None, :] * (gamma * u * mod * log_u - one_minus * mod)
    dlogits = onehot_sign * dterm_dz / k
    return loss_sum, dlogits


def _csr_matvec_np(indptr, indices, data, w, bias):
    n = indptr.size - 1
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        lo, hi = indptr[i], indptr[i + 1]
        out[i] = data[lo:hi] @ w[indices[lo:hi]] + bias
    return out


def _csr_rmatvec_np(indptr, indices, data, r, n_features):
    out = np.zeros(n_features, dtype=np.float64)
    n = indptr.size - 1
    for i in range(n):
        lo, hi = indptr[i], indptr[i + 1]
        out[indices[lo:hi]] += r[i] * data[lo:hi]
    return out


def _f1_grid_np(probs, positives, taus):
    """Binary F1 of (probs >= tau) against 0/1 targets, for every tau."""
    t = taus.size
    out = np.zeros(t, dtype=np.float64)
    n_pos = float(positives.sum())
    for j in range(t):
        pred = probs >= taus[j]
        tp = float(np.logical_and(pred, positives == 1).sum())
        fp = float(pred.sum()) - tp
        fn = n_pos - tp
        denom = 2.0 * tp + fp + fn
        out[j] = (2.0 * tp / denom) if denom > 0 else 0.0
    return out


# ---------------------------------------------------------------------------
# numba fast path
# ---------------------------------------------------------------------------

if _HAVE_NUMBA:

    @njit(cache=True)
    def _hashed_matvec_nb(weights, idx, val):
        d = weights.shape[0]
        out = np.zeros(d, dtype=np.float64)
        for j in range(idx.size):
            c = idx[j]
            v = val[j]
            for i in range(d):
                out[i] += weights[i, c] * v
        return out

    @njit(cache=True)
    def _hashed_matvec_grad_nb(d_out, idx, val, d_weights):
        d = d_weights.shape[0]
        for j in range(idx.size):
            c = idx[j]
            v = val[j]
            for i in range(d):
                d_weights[i, c] += d_out[i] * v

    @njit(cache=True)
    def _focal_terms_nb(logits, targets, weights, gamma):
        n, k = logits.shape
        dlogits = np.zeros((n, k), dtype=np.float64)
        loss_sum = 0.0
        for i in range(n):
            for j in range(k):
                s = 1.0 if j == targets[i] else -1.0
                z = s * logits[i, j]
                if z > 0.0:
                    softplus_nz = math.log1p(math.exp(-z))
                    softplus_pz = z + softplus_nz
                else:
                    softplus_pz = math.log1p(math.exp(z))
                    softplus_nz = -z + softplus_pz
                u = math.exp(-softplus_nz)
                one_minus = math.exp(-softplus_pz)
                mod = one_minus ** gamma
                loss_sum += weights[j] * mod * softplus_nz / k
                log_u = -softplus_nz
                dterm = weights[j] * (gamma * u * mod * log_u - one_minus * mod)
                dlogits[i, j] = s * dterm / k
        return loss_sum, dlogits

    @njit(cache=True)
    def _csr_matvec_nb(indptr, indices, data, w, bias):
        n = indptr.size - 1
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            acc = bias
            for p in range(indptr[i], indptr[i + 1]):
                acc += data[p] * w[indices[p]]
            out[i] = acc
        return out

    @njit(cache=True)
    def _csr_rmatvec_nb(indptr, indices, data, r, n_features):
        out = np.zeros(n_features, dtype=np.float64)
        n = indptr.size - 1
        for i in range(n):
            ri = r[i]
            for p in range(indptr[i], indptr[i + 1]):
                out[indices[p]] += ri * data[p]
        return out

    @njit(cache=True)
    def _f1_grid_nb(probs, positives, taus):
        t = taus.size
        out = np.zeros(t, dtype=np.float64)
        n_pos = 0.0
        for i in range(positives.size):
            n_pos += positives[i]
        for j in range(t):
            tp = 0.0
            npred = 0.0
            for i in range(probs.size):
                if probs[i] >= taus[j]:
                    npred += 1.0
                    if positives[i] == 1:
                        tp += 1.0
            denom = 2.0 * tp + (npred - tp) + (n_pos - tp)
            out[j] = (2.0 * tp / denom) if denom > 0 else 0.0
        return out


USE_NUMBA = _HAVE_NUMBA and _CHOICE in ("auto", "numba")
BACKEND = "numba" if USE_NUMBA else "numpy"

if USE_NUMBA:
    hashed_matvec = _hashed_matvec_nb
    hashed_matvec_grad = _hashed_matvec_grad_nb
    focal_terms = _focal_terms_nb
    csr_matvec = _csr_matvec_nb
    csr_rmatvec = _csr_rmatvec_nb
    # measured slower under numba (vectorized numpy wins; see benchmarks/),
    # so "auto" keeps the numpy path and only a forced backend overrides it
    f1_grid = _f1_grid_nb if _CHOICE == "numba" else _f1_grid_np
else:
    hashed_matvec = _hashed_matvec_np
    hashed_matvec_grad = _hashed_matvec_grad_np
    focal_terms = _focal_terms_np
    csr_matvec = _csr_matvec_np
    csr_rmatvec = _csr_rmatvec_np
    f1_grid = _f1_grid_np

NUMPY_IMPLS = {
    "hashed_matvec": _hashed_matvec_np,
    "hashed_matvec_grad": _hashed_matvec_grad_np,
    "focal_terms": _focal_terms_np,
    "csr_matvec": _csr_matvec_np,
    "csr_rmatvec": _csr_rmatvec_np,
    "f1_grid": _f1_grid_np,
}

NUMBA_IMPLS = (
    {
        "hashed_matvec": _hashed_matvec_nb,
        "hashed_matvec_grad": _hashed_matvec_grad_nb,
        "focal_terms": _focal_terms_nb,
        "csr_matvec": _csr_matvec_nb,
        "csr_rmatvec": _csr_rmatvec_nb,
        "f1_grid": _f1_grid_nb,
    }
    if _HAVE_NUMBA
    else None
)
