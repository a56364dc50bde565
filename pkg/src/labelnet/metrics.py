"""Evaluation: macro/micro-F1, accuracy, Hamming loss, ECE, McNemar with
Bonferroni correction, confusion pairs, and stratified failure bins.

Two decision conventions coexist deliberately: accuracy and micro-F1 use
the argmax prediction (they coincide for single-label data), while
macro-F1 and Hamming use per-label thresholded decisions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

CLASS_SIZE_EDGES = (0, 20, 50, 100, 500)
WORD_COUNT_EDGES = (0, 200, 400, 600, 1000)
DEFAULT_ECE_BINS = 10


class MetricsError(ValueError):
    pass


def one_hot(labels: np.ndarray, n_labels: int) -> np.ndarray:
    out = np.zeros((labels.size, n_labels), dtype=np.int64)
    out[np.arange(labels.size), labels] = 1
    return out


def binarize(probabilities: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """decision = (prob >= threshold), per label; rows may end up with zero
    or several positives."""
    probabilities = np.asarray(probabilities, dtype=np.float64)
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if probabilities.shape[1] != thresholds.size:
        raise MetricsError("threshold count does not match label count")
    return probabilities >= thresholds[None, :]


def _binary_f1(tp: float, fp: float, fn: float) -> float:
    denom = 2.0 * tp + fp + fn
    return 2.0 * tp / denom if denom > 0 else 0.0


def per_label_f1(decisions: np.ndarray, labels: np.ndarray, n_labels: int) -> np.ndarray:
    truth = one_hot(np.asarray(labels, dtype=np.int64), n_labels)
    pred = np.asarray(decisions, dtype=bool)
    out = np.zeros(n_labels)
    for k in range(n_labels):
        tp = float(np.logical_and(pred[:, k], truth[:, k] == 1).sum())
        fp = float(pred[:, k].sum()) - tp
        fn = float(truth[:, k].sum()) - tp
        out[k] = _binary_f1(tp, fp, fn)
    return out


def macro_f1(decisions: np.ndarray, labels: np.ndarray, n_labels: int) -> float:
    """Unweighted mean of per-label binary F1 over all K labels, including
    labels absent from the evaluation set (their F1 counts as 0 unless the
    column is also silent)."""
    return float(per_label_f1(decisions, labels, n_labels).mean())


def argmax_predictions(probabilities: np.ndarray) -> np.ndarray:
    """Ties resolve to the smallest label id (np.argmax convention)."""
    return np.argmax(np.asarray(probabilities, dtype=np.float64), axis=1)


def micro_accuracy_block(probabilities: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """(micro_f1, accuracy) under argmax prediction; equal by construction
    for single-label evaluation, asserted here."""
    labels = np.asarray(labels, dtype=np.int64)
    pred = argmax_predictions(probabilities)
    correct = float((pred == labels).sum())
    n = labels.size
    accuracy = correct / n if n else 0.0
    # pooled tp/fp/fn over argmax-induced one-hot decisions
    tp = correct
    fp = n - correct
    fn = n - correct
    micro = _binary_f1(tp, fp, fn)
    return micro, accuracy


def hamming_loss(decisions: np.ndarray, labels: np.ndarray, n_labels: int) -> float:
    truth = one_hot(np.asarray(labels, dtype=np.int64), n_labels)
    pred = np.asarray(decisions, dtype=np.int64)
    return float((pred != truth).mean())


def ece(probabilities: np.ndarray, labels: np.ndarray, bins: int = DEFAULT_ECE_BINS) -> float:
    """Expected calibration error over all pooled (document, label) pairs
    with equal-width probability bins."""
    if bins < 2:
        raise MetricsError("ece needs at least 2 bins")
    probs = np.asarray(probabilities, dtype=np.float64)
    truth = one_hot(np.asarray(labels, dtype=np.int64), probs.shape[1])
    p = probs.ravel()
    y = truth.ravel().astype(np.float64)
    idx = np.minimum((p * bins).astype(np.int64), bins - 1)
    total = p.size
    out = 0.0
    for b in range(bins):
        mask = idx == b
        count = int(mask.sum())
        if count == 0:
            continue
        confidence = float(p[mask].mean())
        accuracy = float(y[mask].mean())
        out += (count / total) * abs(accuracy - confidence)
    return out


# ---------------------------------------------------------------------------
# significance testing
# ---------------------------------------------------------------------------

@dataclass
class ContingencyTable:
    """Paired correctness counts: n01 correct only in the baseline, n10
    correct only in the candidate."""

    n00: int
    n01: int
    n10: int
    n11: int

    @classmethod
    def from_flags(cls, baseline_correct, candidate_correct) -> "ContingencyTable":
        b = np.asarray(baseline_correct, dtype=bool)
        c = np.asarray(candidate_correct, dtype=bool)
        if b.shape != c.shape:
            raise MetricsError("correctness vectors differ in length")
        return cls(
            n00=int((~b & ~c).sum()),
            n01=int((b & ~c).sum()),
            n10=int((~b & c).sum()),
            n11=int((b & c).sum()),
        )


def mcnemar(table: ContingencyTable) -> tuple[float, float]:
    """Continuity-corrected McNemar statistic and its chi-square(1) p-value.

    chi2 = (max(|n01 - n10| - 1, 0))^2 / (n01 + n10); p = erfc(sqrt(chi2/2)).
    Defined as (0, 1) when there are no discordant pairs.
    """
    if min(table.n00, table.n01, table.n10, table.n11) < 0:
        raise MetricsError("negative contingency counts")
    discordant = table.n01 + table.n10
    if discordant < 1:
        return 0.0, 1.0
    corrected = max(abs(table.n01 - table.n10) - 1.0, 0.0)
    chi2 = corrected * corrected / discordant
    p = math.erfc(math.sqrt(chi2 / 2.0))
    return chi2, p


def bonferroni(p_values: list[float], family_alpha: float = 0.05) -> list[bool]:
    """Per-comparison significance at the corrected level family_alpha / m
    (strict inequality)."""
    if not p_values:
        raise MetricsError("empty p-value list")
    if not (0.0 < family_alpha < 1.0):
        raise MetricsError("family_alpha must be in (0, 1)")
    threshold = family_alpha / len(p_values)
    return [p < threshold for p in p_values]


def format_p(p: float) -> str:
    return "<0.001" if p < 0.001 else f"{p:.3f}"


# ---------------------------------------------------------------------------
# failure analysis
# ---------------------------------------------------------------------------

def confusion_pairs(
    predictions: np.ndarray, labels: np.ndarray, names: list[str]
) -> list[tuple[str, str, int, float]]:
    """(true, predicted, count, % of true class) for misclassified pairs,
    sorted by count descending, ties by pair name."""
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    class_totals = np.bincount(labels, minlength=len(names))
    counts: dict[tuple[int, int], int] = {}
    for t, p in zip(labels, predictions):
        if t != p:
            counts[(int(t), int(p))] = counts.get((int(t), int(p)), 0) + 1
    rows = [
        (names[t], names[p], c, 100.0 * c / class_totals[t])
        for (t, p), c in counts.items()
    ]
    rows.sort(key=lambda r: (-r[2], r[0], r[1]))
    return rows


def stratified_bins(
    values: np.ndarray, keys: np.ndarray, edges: tuple[float, ...]
) -> list[tuple[float, float, float, int]]:
    """Mean of `values` grouped by which [lo, hi) bin each key falls in; the
    last bin is open above. Returns (lo, hi, mean, count) per bin, with NaN
    means for empty bins."""
    values = np.asarray(values, dtype=np.float64)
    keys = np.asarray(keys, dtype=np.float64)
    bounds = list(edges) + [np.inf]
    out = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        mask = (keys >= lo) & (keys < hi)
        count = int(mask.sum())
        mean = float(values[mask].mean()) if count else float("nan")
        out.append((float(lo), float(hi), mean, count))
    return out


# ---------------------------------------------------------------------------
# report bundle
# ---------------------------------------------------------------------------

@dataclass
class SignificanceRow:
    baseline: str
    n01: int
    n10: int
    chi2: float
    p: float
    significant: bool


@dataclass
class EvalReport:
    macro_f1: float
    micro_f1: float
    accuracy: float
    hamming: float
    ece: float
    per_label_f1: np.ndarray
    confusion: list[tuple[str, str, int, float]]
    class_size_bins: list[tuple[float, float, float, int]]
    length_bins: list[tuple[float, float, float, int]]
    mode: str = ""
    thresholds_note: str = ""
    absent_labels: int = 0
    significance: list[SignificanceRow] = field(default_factory=list)

    def render(self) -> str:
        lines = [
            f"evaluation report (mode {self.mode or 'n/a'})",
            f"thresholds: {self.thresholds_note or 'n/a'}",
            "ece convention: pooled (document,label) pairs, 10 equal-width bins",
            f"labels absent from eval set: {self.absent_labels}",
            "",
            f"macro_f1  {self.macro_f1:.4f}",
            f"micro_f1  {self.micro_f1:.4f}",
            f"accuracy  {self.accuracy:.4f}",
            f"hamming   {self.hamming:.4f}",
            f"ece       {self.ece:.4f}",
        ]
        if self.significance:
            lines += ["", "significance (McNemar, Bonferroni-corrected):"]
            for row in self.significance:
                flag = "significant" if row.significant else "ns"
                lines.append(
                    f"  vs {row.baseline}: n01={row.n01} n10={row.n10} "
                    f"chi2={row.chi2:.2f} p={format_p(row.p)} {flag}"
                )
        return "\n".join(lines) + "\n"


def evaluate(
    probabilities: np.ndarray,
    labels: np.ndarray,
    thresholds: np.ndarray,
    names: list[str],
    train_counts: np.ndarray,
    word_counts: np.ndarray,
    mode: str = "",
    thresholds_note: str = "",
    ece_bins: int = DEFAULT_ECE_BINS,
) -> EvalReport:
    """Assemble the full metric bundle for one system's probabilities."""
    labels = np.asarray(labels, dtype=np.int64)
    n_labels = len(names)
    decisions = binarize(probabilities, thresholds)
    f1s = per_label_f1(decisions, labels, n_labels)
    micro, accuracy = micro_accuracy_block(probabilities, labels)
    preds = argmax_predictions(probabilities)
    correct = (preds == labels).astype(np.float64)
    present = np.bincount(labels, minlength=n_labels) > 0
    return EvalReport(
        macro_f1=float(f1s.mean()),
        micro_f1=micro,
        accuracy=accuracy,
        hamming=hamming_loss(decisions, labels, n_labels),
        ece=ece(probabilities, labels, ece_bins),
        per_label_f1=f1s,
        confusion=confusion_pairs(preds, labels, names),
        class_size_bins=stratified_bins(f1s, np.asarray(train_counts), CLASS_SIZE_EDGES),
        length_bins=stratified_bins(correct, np.asarray(word_counts), WORD_COUNT_EDGES),
        mode=mode,
        thresholds_note=thresholds_note,
        absent_labels=int((~present).sum()),
    )
