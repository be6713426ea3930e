"""Grid-SSIM explanations for anomalous windows.

The worst-reconstructed image of a window is cut into an n x n grid; each
tile pair is scored with SSIM and tinted so the lowest-scoring tiles stand
out on both the input and the reconstruction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .detector import SsimParams, ssim

# two-ended colormap stops (position, RGB): low SSIM is purple, high is yellow
COLORMAP_STOPS = (
    (0.00, (0.267, 0.005, 0.329)),
    (0.25, (0.231, 0.322, 0.545)),
    (0.50, (0.129, 0.569, 0.549)),
    (0.75, (0.369, 0.788, 0.384)),
    (1.00, (0.993, 0.906, 0.144)),
)


@dataclass
class TileHeatmap:
    n: int
    scores: np.ndarray  # (n, n)
    worst_tile: tuple[int, int]
    image_index: int = 0

    def tile_box(self, row: int, col: int, height: int, width: int) -> tuple[int, int, int, int]:
        """Pixel box (x0, y0, x1, y1), inclusive, of a tile."""
        th, tw = height // self.n, width // self.n
        return col * tw, row * th, (col + 1) * tw - 1, (row + 1) * th - 1


def worst_image(pair_scores: Sequence[float], anomalous: bool = True) -> int:
    """Index of the lowest per-image SSIM; the earliest one on ties."""
    if not anomalous:
        raise ValueError("explanations are only produced for anomalous windows")
    scores = np.asarray(pair_scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("window has no scored images")
    return int(np.argmin(scores))


def tile_scores(in_i: np.ndarray, out_i: np.ndarray, n: int = 4, params: SsimParams = SsimParams(),
                image_index: int = 0) -> TileHeatmap:
    """SSIM of each of the n*n corresponding tiles of two (C, H, W) or (H, W) images."""
    a = np.asarray(in_i)
    b = np.asarray(out_i)
    if a.ndim == 2:
        a, b = a[None], b[None]
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    _, h, w = a.shape
    if n < 1 or h % n or w % n:
        raise ValueError(f"a {h}x{w} image cannot be split into {n}x{n} equal tiles")
    th, tw = h // n, w // n
    tile_params = SsimParams(min(params.window, th, tw), params.dynamic_range, params.k1, params.k2)
    scores = np.empty((n, n))
    for r in range(n):
        for c in range(n):
            sl = (slice(None), slice(r * th, (r + 1) * th), slice(c * tw, (c + 1) * tw))
            scores[r, c] = ssim(a[sl], b[sl], tile_params)
    flat = int(np.argmin(scores))  # row-major: ties go to the smallest row, then column
    return TileHeatmap(n, scores, (flat // n, flat % n), image_index)


def colormap(values: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """Map SSIM values to RGB; ``floor`` and below get the alert end, 1 the calm end."""
    t = np.clip((np.asarray(values, dtype=np.float64) - floor) / (1.0 - floor), 0.0, 1.0)
    pos = np.array([p for p, _ in COLORMAP_STOPS])
    rgb = np.array([c for _, c in COLORMAP_STOPS])
    return np.stack([np.interp(t, pos, rgb[:, k]) for k in range(3)], axis=-1)


def tint(image: np.ndarray, heatmap: TileHeatmap, alpha: float = 0.45, floor: float = 0.0) -> np.ndarray:
    """RGB copy of a (C, H, W) or (H, W) image with each tile blended toward its color."""
    img = np.asarray(image, dtype=np.float64)
    gray = img[0] if img.ndim == 3 else img
    h, w = gray.shape
    colors = colormap(heatmap.scores, floor)
    th, tw = h // heatmap.n, w // heatmap.n
    tile_rgb = np.repeat(np.repeat(colors, th, axis=0), tw, axis=1)
    base = np.repeat(gray[..., None], 3, axis=-1)
    return (1.0 - alpha) * base + alpha * tile_rgb


def render_heatmap(in_i: np.ndarray, out_i: np.ndarray, heatmap: TileHeatmap, alpha: float = 0.45,
                   floor: float = 0.0, upscale: int = 4) -> np.ndarray:
    """Side-by-side uint8 RGB: tinted input, 1-px white separator, tinted reconstruction."""
    left = tint(in_i, heatmap, alpha, floor)
    right = tint(out_i, heatmap, alpha, floor)
    if upscale > 1:
        left = np.kron(left, np.ones((upscale, upscale, 1)))
        right = np.kron(right, np.ones((upscale, upscale, 1)))
    sep = np.ones((left.shape[0], 1, 3))
    both = np.concatenate([left, sep, right], axis=1)
    return np.round(np.clip(both, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_overlay(path, rgb: np.ndarray) -> None:
    from PIL import Image

    Image.fromarray(rgb, mode="RGB").save(path)


def box_intersects(a: tuple[int, int, int, int] | None, b: tuple[int, int, int, int] | None) -> bool:
    if a is None or b is None:
        return False
    return a[0] <= b[2] and b[0] <= a[2] and a[1] <= b[3] and b[1] <= a[3]
