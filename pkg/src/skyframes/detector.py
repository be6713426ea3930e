"""SSIM frame scoring, threshold calibration and the windowed alarm rule."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np


@dataclass(frozen=True)
class SsimParams:
    window: int = 8
    dynamic_range: float = 1.0
    k1: float = 0.01
    k2: float = 0.03

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2


def _box_mean(a: np.ndarray, k: int) -> np.ndarray:
    """Mean over every k x k window (valid positions) of the last two axes."""
    s = np.cumsum(np.cumsum(a, axis=-2), axis=-1)
    s = np.pad(s, [(0, 0)] * (a.ndim - 2) + [(1, 0), (1, 0)])
    total = s[..., k:, k:] - s[..., :-k, k:] - s[..., k:, :-k] + s[..., :-k, :-k]
    return total / (k * k)


def ssim_map(a: np.ndarray, b: np.ndarray, params: SsimParams = SsimParams()) -> np.ndarray:
    """Per-window SSIM over the last two axes, uniform window, population moments."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    k = params.window
    if k > a.shape[-1] or k > a.shape[-2]:
        raise ValueError(f"SSIM window {k} larger than image {a.shape[-2:]}")
    mu_a, mu_b = _box_mean(a, k), _box_mean(b, k)
    var_a = _box_mean(a * a, k) - mu_a * mu_a
    var_b = _box_mean(b * b, k) - mu_b * mu_b
    cov = _box_mean(a * b, k) - mu_a * mu_b
    c1, c2 = params.c1, params.c2
    return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))


def ssim_batch(a: np.ndarray, b: np.ndarray, params: SsimParams = SsimParams()) -> np.ndarray:
    """SSIM of image stacks ``(..., C, H, W)``: one value per image, channels averaged."""
    return ssim_map(a, b, params).mean(axis=(-1, -2, -3))


def ssim(a: np.ndarray, b: np.ndarray, params: SsimParams = SsimParams()) -> float:
    """SSIM of two images, (H, W) or (C, H, W)."""
    a = np.asarray(a)
    if a.ndim == 2:
        a, b = a[None], np.asarray(b)[None]
    return float(ssim_batch(a, b, params))


@dataclass
class FrameScore:
    sequence_index: int
    score: float
    suspicious: bool
    pair_scores: np.ndarray = field(default_factory=lambda: np.zeros(0))


def frame_score(input_seq: np.ndarray, output_seq: np.ndarray, t1: float = -np.inf,
                params: SsimParams = SsimParams(), sequence_index: int = 0) -> FrameScore:
    """Mean SSIM over the s (input, reconstruction) image pairs of one frame."""
    if len(input_seq) != len(output_seq):
        raise ValueError(f"sequence lengths differ: {len(input_seq)} vs {len(output_seq)}")
    pairs = ssim_batch(np.asarray(input_seq), np.asarray(output_seq), params)
    score = float(pairs.mean())
    return FrameScore(sequence_index, score, score < t1, pairs)


def calibrate_t1(validation_scores: Iterable[float], percentile: float = 5.0) -> float:
    """Fifth percentile (by default) with linear interpolation between order statistics."""
    v = np.sort(np.asarray(list(validation_scores), dtype=np.float64))
    if v.size == 0:
        raise ValueError("cannot calibrate a threshold from no scores")
    return float(np.percentile(v, percentile, method="linear"))


@dataclass
class WindowVerdict:
    window_end_index: int
    scores: list[float]
    suspicious_count: int
    anomalous: bool


class WindowDetector:
    """Streaming t1/t2 rule: a window of ``w`` frames is anomalous when more than ``t2`` are suspicious."""

    def __init__(self, w: int = 10, t2: int = 5, t1: float | None = None):
        if w < t2:
            raise ValueError(f"window w={w} must be at least t2={t2}")
        if w < 1:
            raise ValueError("window must hold at least one frame")
        self.w, self.t2, self.t1 = w, t2, t1
        self._buf: deque[tuple[float, bool]] = deque(maxlen=w)
        self._seen = 0

    def push(self, score: FrameScore | float) -> WindowVerdict | None:
        if isinstance(score, FrameScore):
            value, flag = score.score, score.suspicious
            if self.t1 is not None:
                flag = value < self.t1
        else:
            if self.t1 is None:
                raise ValueError("raw scores need a t1 threshold")
            value, flag = float(score), float(score) < self.t1
        self._buf.append((value, flag))
        self._seen += 1
        if len(self._buf) < self.w:
            return None
        count = sum(f for _, f in self._buf)
        return WindowVerdict(self._seen - 1, [v for v, _ in self._buf], count, count > self.t2)


def detect(scores: Iterable[FrameScore | float], w: int = 10, t2: int = 5,
           t1: float | None = None) -> Iterator[WindowVerdict]:
    """Sliding windows (stride 1) over frame scores, one verdict per full window."""
    det = WindowDetector(w, t2, t1)
    for s in scores:
        v = det.push(s)
        if v is not None:
            yield v


def write_verdicts(path, verdicts: Sequence[WindowVerdict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("window_end_index,score_list,suspicious_count,anomalous\n")
        for v in verdicts:
            fh.write(f"{v.window_end_index},{';'.join(repr(float(s)) for s in v.scores)},"
                     f"{v.suspicious_count},{int(v.anomalous)}\n")
