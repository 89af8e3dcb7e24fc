"""Classification metrics (accuracy, macro F1, one-vs-rest AUC) and equal error rate."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import EmptyList, EmptyPool, LengthMismatch, ValidationError


@dataclass
class EvalReport:
    accuracy: float
    macro_f1: float
    macro_auc: float
    confusion: list[list[int]]
    per_class_f1: list[float]

    def to_json(self, **extra) -> str:
        return json.dumps({**asdict(self), **extra}, indent=2, sort_keys=True)


@dataclass
class ScoreSet:
    genuine: np.ndarray
    impostor: np.ndarray

    def __post_init__(self):
        self.genuine = np.asarray(self.genuine, dtype=np.float64).ravel()
        self.impostor = np.asarray(self.impostor, dtype=np.float64).ravel()


def confusion_matrix(truth, pred, num_classes):
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (truth, pred), 1)
    return cm


def binary_auc(pos_scores, neg_scores) -> float:
    """Area under the ROC with tied scores grouped (trapezoid over tie blocks)."""
    pos = np.sort(np.asarray(pos_scores, dtype=np.float64))
    neg = np.sort(np.asarray(neg_scores, dtype=np.float64))
    # sweep thresholds from high to low; each distinct score is one ROC step
    thr = np.unique(np.concatenate([pos, neg]))[::-1]
    tpr = (pos.size - np.searchsorted(pos, thr, side="left")) / pos.size
    fpr = (neg.size - np.searchsorted(neg, thr, side="left")) / neg.size
    tpr = np.concatenate([[0.0], tpr])
    fpr = np.concatenate([[0.0], fpr])
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def classification_metrics(truth, pred, scores, num_classes: int | None = None) -> EvalReport:
    """Accuracy, macro F1 and macro one-vs-rest AUC.

    A class missing from ``truth`` contributes F1 = 0 and is left out of the
    macro AUC (its ROC is undefined).
    """
    truth = np.asarray(truth, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if truth.shape != pred.shape or scores.ndim != 2 or scores.shape[0] != truth.size:
        raise LengthMismatch("truth, pred and scores must describe the same samples")
    if truth.size == 0:
        raise EmptyList("no samples to evaluate")
    c = num_classes or scores.shape[1]
    if scores.shape[1] != c or truth.max() >= c or pred.max() >= c or min(truth.min(), pred.min()) < 0:
        raise ValidationError("labels outside the score columns")
    cm = confusion_matrix(truth, pred, c)
    tp = np.diag(cm).astype(np.float64)
    denom = cm.sum(axis=0) + cm.sum(axis=1)
    f1 = np.where(denom > 0, 2.0 * tp / np.maximum(denom, 1), 0.0)
    f1[cm.sum(axis=1) == 0] = 0.0
    aucs = []
    for k in range(c):
        pos = truth == k
        if pos.any() and (~pos).any():
            aucs.append(binary_auc(scores[pos, k], scores[~pos, k]))
    return EvalReport(
        accuracy=float(tp.sum() / truth.size),
        macro_f1=float(f1.mean()),
        macro_auc=float(np.mean(aucs)) if aucs else float("nan"),
        confusion=cm.tolist(),
        per_class_f1=f1.tolist(),
    )


def uia_serialized(per_gesture_reports) -> float:
    """Unweighted mean of per-gesture identification accuracies."""
    accs = [r.accuracy if isinstance(r, EvalReport) else float(r) for r in per_gesture_reports]
    if not accs:
        raise EmptyList("no per-gesture reports")
    return float(np.mean(accs))


def error_rates(s: ScoreSet, thresholds):
    """FPR(t) = P(impostor >= t), FNR(t) = P(genuine < t)."""
    gen = np.sort(s.genuine)
    imp = np.sort(s.impostor)
    fpr = (imp.size - np.searchsorted(imp, thresholds, side="left")) / imp.size
    fnr = np.searchsorted(gen, thresholds, side="left") / gen.size
    return fpr, fnr


def eer(s: ScoreSet):
    """Equal error rate and its threshold.

    Thresholds sweep every distinct score plus one just above the maximum.
    Where FNR - FPR changes sign between two thresholds, both rates are
    interpolated linearly.
    """
    if s.genuine.size == 0 or s.impostor.size == 0:
        raise EmptyPool("genuine and impostor pools must be non-empty")
    thr = np.unique(np.concatenate([s.genuine, s.impostor]))
    thr = np.append(thr, np.nextafter(thr[-1], np.inf))
    fpr, fnr = error_rates(s, thr)
    diff = fnr - fpr
    # diff is non-decreasing, starts at <= 0 (FNR = 0) and ends at >= 0 (FPR = 0)
    k = int(np.argmax(diff >= 0))
    if diff[k] == 0 or k == 0:
        return float(fpr[k]), float(thr[k])
    a = -diff[k - 1] / (diff[k] - diff[k - 1])
    rate = fpr[k - 1] + a * (fpr[k] - fpr[k - 1])
    return float(rate), float(thr[k - 1] + a * (thr[k] - thr[k - 1]))


def user_score_sets(truth, scores):
    """Per-user genuine/impostor pools from probability rows (column = user)."""
    truth = np.asarray(truth, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    out = {}
    for u in range(scores.shape[1]):
        own = truth == u
        if own.any() and (~own).any():
            out[u] = ScoreSet(scores[own, u], scores[~own, u])
    return out


def system_eer(truth, scores) -> float:
    """Unweighted mean of per-user EERs."""
    sets = user_score_sets(truth, scores)
    if not sets:
        raise EmptyPool("no user has both genuine and impostor scores")
    return float(np.mean([eer(s)[0] for s in sets.values()]))


def roc_csv(s: ScoreSet) -> str:
    thr = np.unique(np.concatenate([s.genuine, s.impostor]))
    fpr, fnr = error_rates(s, thr)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["threshold", "fpr", "tpr", "fnr"])
    for t, a, b in zip(thr, fpr, fnr):
        w.writerow([repr(float(t)), repr(float(a)), repr(float(1.0 - b)), repr(float(b))])
    return buf.getvalue()
