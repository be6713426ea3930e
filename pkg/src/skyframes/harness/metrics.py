"""ROC curves, AUC and operating-point rates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # detection fires when attack-ness >= threshold
    auc: float


def compute_roc(scores: Sequence[float], labels: Sequence[bool], low_is_attack: bool = True) -> RocCurve:
    """Threshold sweep over every distinct score with a trapezoidal AUC.

    With ``low_is_attack`` (SSIM frame scores) a point at threshold ``t``
    counts frames with score <= t as detections. Otherwise (suspicious
    counts) values >= t are detections. Points run from (0, 0) to (1, 1).
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs at least one positive and one negative label")
    attack = -s if low_is_attack else s
    order = np.argsort(-attack, kind="stable")
    a, yy = attack[order], y[order]
    # last index of each run of equal values
    ends = np.r_[np.nonzero(np.diff(a))[0], a.size - 1]
    tp = np.cumsum(yy)[ends]
    fp = np.cumsum(~yy)[ends]
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    thr = np.r_[np.inf, a[ends]]
    if low_is_attack:
        thr = -thr
    return RocCurve(fpr, tpr, thr, float(np.trapezoid(tpr, fpr)))


def tpr_at_fpr(roc: RocCurve, max_fpr: float) -> float:
    """Best TPR among sweep points whose FPR does not exceed ``max_fpr``."""
    ok = roc.fpr <= max_fpr + 1e-12
    return float(roc.tpr[ok].max())


def rates(predicted: Sequence[bool], labels: Sequence[bool]) -> tuple[float, float]:
    """(TPR, FPR); a rate with an empty denominator is NaN."""
    p = np.asarray(predicted, dtype=bool)
    y = np.asarray(labels, dtype=bool)
    tpr = float(p[y].mean()) if y.any() else float("nan")
    fpr = float(p[~y].mean()) if (~y).any() else float("nan")
    return tpr, fpr


def write_roc(path, rows: Sequence[tuple[float, RocCurve]]) -> None:
    """CSV with one block per slice length: dt_s, threshold, fpr, tpr."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("dt_s,threshold,fpr,tpr\n")
        for dt, roc in rows:
            for t, f, p in zip(roc.thresholds, roc.fpr, roc.tpr):
                fh.write(f"{dt!r},{float(t)!r},{float(f)!r},{float(p)!r}\n")
