"""Imbalance-aware evaluation: confusion matrix, ACC, BAC, F1 variants, and
EER from continuous scores.

Class convention: 0 = english (majority), 1 = mandarin (minority). Mandarin
is the positive class for EER and the minority F1; ties at a threshold
count as positive (score >= threshold).
"""

import json
from dataclasses import dataclass

import numpy as np

CLASS_NAMES = ("english", "mandarin")


@dataclass
class ConfusionMatrix:
    """counts[true][pred] over (english, mandarin)."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (2, 2) or np.any(self.counts < 0):
            raise ValueError("confusion matrix must be 2x2 with nonnegative counts")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def support(self, c: int) -> int:
        return int(self.counts[c].sum())


@dataclass
class EvalReport:
    acc: float
    bac: float
    f1_macro: float
    f1_minority: float
    eer: float
    eer_threshold: float
    n: int

    @property
    def headline(self) -> str:
        """ACC% / BAC% / minority F1 / EER, matching the usual table format."""
        return (
            f"{100 * self.acc:.2f} / {100 * self.bac:.2f} / "
            f"{self.f1_minority:.3f} / {self.eer:.3f}"
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "acc": self.acc,
                "bac": self.bac,
                "f1_macro": self.f1_macro,
                "f1_minority": self.f1_minority,
                "eer": self.eer,
                "eer_threshold": self.eer_threshold,
                "n": self.n,
            },
            sort_keys=True,
        )

    def to_csv_row(self, layer, model) -> str:
        return (
            f"{layer},{model},{self.acc:.6f},{self.bac:.6f},{self.f1_macro:.6f},"
            f"{self.f1_minority:.6f},{self.eer:.6f},{self.n}"
        )


CSV_HEADER = "layer,model,acc,bac,f1_macro,f1_minority,eer,n"


def confusion(pred_set) -> ConfusionMatrix:
    """Tally (true, predicted) pairs from a prediction set."""
    y_true = np.asarray(pred_set.y_true, dtype=np.int64)
    y_pred = np.asarray(pred_set.y_pred, dtype=np.int64)
    if y_true.size == 0:
        raise ValueError("cannot build a confusion matrix from an empty set")
    counts = np.zeros((2, 2), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        counts[t, p] += 1
    return ConfusionMatrix(counts)


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    return float(np.trace(cm.counts) / cm.total)


def balanced_accuracy(cm: ConfusionMatrix) -> float:
    """Unweighted mean of per-class recalls; requires both classes present."""
    recalls = []
    for c in range(2):
        support = cm.support(c)
        if support == 0:
            raise ValueError(
                f"balanced accuracy undefined: class {CLASS_NAMES[c]!r} has no support"
            )
        recalls.append(cm.counts[c, c] / support)
    return float(np.mean(recalls))


def f1_scores(cm: ConfusionMatrix):
    """Per-class F1, macro average, and minority (mandarin) F1.

    F1 is 0 whenever precision + recall is 0.
    """
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    per_class = []
    for c in range(2):
        tp = cm.counts[c, c]
        pred_c = cm.counts[:, c].sum()
        support = cm.support(c)
        precision = tp / pred_c if pred_c > 0 else 0.0
        recall = tp / support if support > 0 else 0.0
        if precision + recall == 0:
            per_class.append(0.0)
        else:
            per_class.append(2 * precision * recall / (precision + recall))
    macro = float(np.mean(per_class))
    return per_class, macro, per_class[1]


def eer(scores, labels) -> tuple[float, float]:
    """Equal error rate for mandarin-positive scores.

    FPR(t) = fraction of english scored >= t; FNR(t) = fraction of mandarin
    scored < t. Sweeps all distinct scores and linearly interpolates between
    the bracketing thresholds where FPR crosses FNR.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    en = np.sort(scores[labels == 0])
    zh = np.sort(scores[labels == 1])
    if en.size == 0 or zh.size == 0:
        raise ValueError("EER needs both classes present")

    uniq = np.unique(scores)
    # fpr: english with score >= t; fnr: mandarin with score < t
    fpr = (en.size - np.searchsorted(en, uniq, side="left")) / en.size
    fnr = np.searchsorted(zh, uniq, side="left") / zh.size
    # Sentinels: below every score (FPR 1, FNR 0) and above (FPR 0, FNR 1).
    thr = np.concatenate([[uniq[0] - 1.0], uniq, [uniq[-1] + 1.0]])
    fpr = np.concatenate([[1.0], fpr, [0.0]])
    fnr = np.concatenate([[0.0], fnr, [1.0]])

    diff = fpr - fnr  # non-increasing from +1 to -1
    j = int(np.argmax(diff <= 0))
    if diff[j] == 0:
        return float(fpr[j]), float(thr[j])
    s = diff[j - 1] / (diff[j - 1] - diff[j])
    value = fpr[j - 1] + s * (fpr[j] - fpr[j - 1])
    threshold = thr[j - 1] + s * (thr[j] - thr[j - 1])
    return float(value), float(threshold)


def evaluate(pred_set) -> EvalReport:
    """Full report: argmax predictions feed ACC/BAC/F1, scores feed EER."""
    cm = confusion(pred_set)
    eer_value, eer_thr = eer(pred_set.scores, pred_set.y_true)
    _, macro, minority = f1_scores(cm)
    return EvalReport(
        acc=accuracy(cm),
        bac=balanced_accuracy(cm),
        f1_macro=macro,
        f1_minority=minority,
        eer=eer_value,
        eer_threshold=eer_thr,
        n=cm.total,
    )
