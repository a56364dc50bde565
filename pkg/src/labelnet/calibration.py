"""Post-hoc calibration: per-label Platt scaling fitted on validation
logits, plus per-label decision-threshold grid search on validation F1.

The Platt fit minimizes the calibration negative log-likelihood of
P(y=1|f) = 1 / (1 + exp(A*f + B)) with the classic smoothed targets, via
damped Newton iteration on the two parameters (the objective is convex).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import f1_grid

GRID = np.round(np.arange(1, 100) / 100.0, 2)   # 0.01 .. 0.99
IDENTITY = (-1.0, 0.0)
MAX_ITERS = 100
GRAD_TOL = 1e-8
PROB_CLAMP = 1e-12


class CalibrationError(ValueError):
    pass


@dataclass
class PlattParams:
    a: np.ndarray   # K
    b: np.ndarray   # K

    @property
    def n_labels(self) -> int:
        return self.a.size


@dataclass
class Thresholds:
    tau: np.ndarray   # K, grid-aligned to 0.01

    @property
    def n_labels(self) -> int:
        return self.tau.size


def _platt_nll(a: float, b: float, logits: np.ndarray, targets: np.ndarray) -> float:
    u = a * logits + b
    # p = sigmoid(-u); NLL written with softplus for stability
    softplus_u = np.logaddexp(0.0, u)      # -log p
    softplus_nu = np.logaddexp(0.0, -u)    # -log (1-p)
    return float((targets * softplus_u + (1.0 - targets) * softplus_nu).sum())


def fit_platt(logits: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """Fit (A, B) for one label on validation examples.

    Uses Platt's smoothed targets t+ = (N+ + 1)/(N+ + 2), t- = 1/(N- + 2).
    Degenerate labels (no positives or no negatives) fall back to the
    identity mapping (A, B) = (-1, 0). Starting the iteration at the
    identity plus a monotone line search guarantees the fitted NLL never
    exceeds the identity NLL.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise CalibrationError("non-finite logits passed to Platt fit")
    n_pos = float(labels.sum())
    n_neg = float(labels.size - n_pos)
    if n_pos == 0.0 or n_neg == 0.0:
        return IDENTITY
    t_pos = (n_pos + 1.0) / (n_pos + 2.0)
    t_neg = 1.0 / (n_neg + 2.0)
    targets = np.where(labels > 0.5, t_pos, t_neg)

    a, b = IDENTITY
    nll = _platt_nll(a, b, logits, targets)
    for _ in range(MAX_ITERS):
        u = a * logits + b
        p = np.exp(-np.logaddexp(0.0, u))          # sigmoid(-u)
        resid = targets - p                        # dNLL/du
        grad_a = float((resid * logits).sum())
        grad_b = float(resid.sum())
        if max(abs(grad_a), abs(grad_b)) < GRAD_TOL:
            break
        w = p * (1.0 - p)
        h_aa = float((w * logits * logits).sum())
        h_ab = float((w * logits).sum())
        h_bb = float(w.sum())
        det = h_aa * h_bb - h_ab * h_ab
        if det <= 1e-300:
            h_aa += 1e-10
            h_bb += 1e-10
            det = h_aa * h_bb - h_ab * h_ab
        da = -(h_bb * grad_a - h_ab * grad_b) / det
        db = -(h_aa * grad_b - h_ab * grad_a) / det
        # backtracking keeps the iteration monotone in NLL
        scale = 1.0
        for _ in range(50):
            cand = _platt_nll(a + scale * da, b + scale * db, logits, targets)
            if cand <= nll:
                a, b, nll = a + scale * da, b + scale * db, cand
                break
            scale *= 0.5
        else:
            break
    return a, b


def fit_platt_all(logits: np.ndarray, labels: np.ndarray, n_labels: int) -> PlattParams:
    """Independent per-label fits; `labels` are single-label ids turned into
    one-vs-rest binaries per column."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    a = np.zeros(n_labels)
    b = np.zeros(n_labels)
    for k in range(n_labels):
        a[k], b[k] = fit_platt(logits[:, k], (labels == k).astype(np.float64))
    return PlattParams(a=a, b=b)


def apply_platt(logits: np.ndarray, params: PlattParams) -> np.ndarray:
    """P(y=1|f) = 1/(1+exp(A f + B)), clamped away from exact 0 and 1."""
    logits = np.asarray(logits, dtype=np.float64)
    u = logits * params.a[None, :] + params.b[None, :]
    probs = np.exp(-np.logaddexp(0.0, u))
    return np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)


def apply_platt_single(logit: float, a: float, b: float) -> float:
    u = a * logit + b
    p = float(np.exp(-np.logaddexp(0.0, u)))
    return min(max(p, PROB_CLAMP), 1.0 - PROB_CLAMP)


def optimize_thresholds(probabilities: np.ndarray, labels: np.ndarray, n_labels: int) -> Thresholds:
    """Per label, pick the grid threshold maximizing binary F1 of
    (prob >= tau); ties break toward 0.5, then toward the smaller tau."""
    probabilities = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    taus = np.zeros(n_labels)
    for k in range(n_labels):
        positives = (labels == k).astype(np.float64)
        f1s = f1_grid(np.ascontiguousarray(probabilities[:, k]), positives, GRID)
        best = f1s.max()
        tied = [i for i, v in enumerate(f1s) if v == best]
        tied.sort(key=lambda i: (abs(GRID[i] - 0.5), GRID[i]))
        taus[k] = GRID[tied[0]]
    return Thresholds(tau=taus)


def save_calibration(path, platt: PlattParams, thresholds: Thresholds) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for k in range(platt.n_labels):
            fh.write(
                f"{k},{float(platt.a[k])!r},{float(platt.b[k])!r},{float(thresholds.tau[k])!r}\n"
            )


def load_calibration(path) -> tuple[PlattParams, Thresholds]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            k, a, b, tau = line.split(",")
            rows.append((int(k), float(a), float(b), float(tau)))
    rows.sort()
    if [k for k, *_ in rows] != list(range(len(rows))):
        raise CalibrationError("calibration file has missing or duplicate label ids")
    return (
        PlattParams(a=np.array([a for _, a, _, _ in rows]), b=np.array([b for _, _, b, _ in rows])),
        Thresholds(tau=np.array([t for _, _, _, t in rows])),
    )
