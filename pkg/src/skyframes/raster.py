"""Arrow-glyph rasterization of time slices into frame images.

Each aircraft in a slice becomes one arrow: the shaft runs from the first to
the last reported position (so its length is the distance flown in the
slice), a V-shaped head at the last position points along the last heading,
and stroke width and head length grow logarithmically with altitude.
Glyphs are drawn anti-aliased and composited with ``max``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .ingest import MAX_ALTITUDE_FT, AdsbMessage, TimeSlice
from .projection import LccParams, Viewport, convergence_deg, project, to_pixel

MIN_GLYPH_SCALE = 0.1


@dataclass(frozen=True)
class GlyphStyle:
    head_length_px: float = 4.0
    stroke_width_px: float = 2.0
    head_half_angle_deg: float = 35.0
    altitude_ceiling_ft: float = MAX_ALTITUDE_FT
    min_scale: float = MIN_GLYPH_SCALE


@dataclass(frozen=True)
class ArrowGlyph:
    start_px: tuple[float, float]  # (row, col)
    end_px: tuple[float, float]
    heading_deg: float  # grid heading, clockwise from image up
    size: float
    intensity: float = 1.0

    def __post_init__(self):
        if not self.size > 0:
            raise ValueError("glyph size must be positive")
        if not 0.0 <= self.intensity <= 1.0:
            raise ValueError("glyph intensity must lie in [0, 1]")


@dataclass
class FrameImage:
    pixels: np.ndarray  # (channels, height, width) float32 in [0, 1]
    start_ms: int = 0

    @property
    def channels(self) -> int:
        return self.pixels.shape[0]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]


@dataclass
class FrameSequence:
    pixels: np.ndarray  # (s, channels, height, width)
    start_ms: list[int]

    def __post_init__(self):
        if len(self.start_ms) != len(self.pixels):
            raise ValueError("one start time per image is required")
        if any(b <= a for a, b in zip(self.start_ms, self.start_ms[1:])):
            raise ValueError("image start times must strictly increase")

    def __len__(self) -> int:
        return len(self.pixels)

    @property
    def images(self) -> list[FrameImage]:
        return [FrameImage(p, t) for p, t in zip(self.pixels, self.start_ms)]


def altitude_scale(altitude_ft: float, style: GlyphStyle = GlyphStyle()) -> float:
    """log(1 + alt) / log(1 + ceiling), clamped to [min_scale, 1]."""
    alt = min(max(altitude_ft, 0.0), style.altitude_ceiling_ft)
    s = math.log1p(alt) / math.log1p(style.altitude_ceiling_ft)
    return max(style.min_scale, min(1.0, s))


def anomaly_intensity(scores: Sequence[float | None]) -> float:
    known = [s for s in scores if s is not None]
    return float(max(known)) if known else 1.0


def build_glyph(track: Sequence[AdsbMessage], params: LccParams, viewport: Viewport,
                style: GlyphStyle = GlyphStyle()) -> ArrowGlyph:
    """Arrow for one aircraft's time-ordered messages within a slice."""
    if not track:
        raise ValueError("cannot build a glyph from an empty track")
    first, last = track[0], track[-1]
    xs, ys = project(np.array([first.latitude, last.latitude]), np.array([first.longitude, last.longitude]), params)
    rows, cols = to_pixel(xs, ys, viewport)
    heading = (last.heading - float(convergence_deg(last.longitude, params))) % 360.0
    return ArrowGlyph(
        start_px=(float(rows[0]), float(cols[0])),
        end_px=(float(rows[1]), float(cols[1])),
        heading_deg=heading,
        size=altitude_scale(last.altitude, style),
        intensity=anomaly_intensity([m.anomaly_score for m in track]),
    )


def _segments(glyph: ArrowGlyph, style: GlyphStyle) -> list[tuple[float, float, float, float]]:
    r0, c0 = glyph.start_px
    r1, c1 = glyph.end_px
    head = style.head_length_px * glyph.size
    segs = [(r0, c0, r1, c1)]
    back = math.radians(glyph.heading_deg + 180.0)
    for side in (-1.0, 1.0):
        a = back + side * math.radians(style.head_half_angle_deg)
        # heading 0 points up (row decreasing), 90 points right
        segs.append((r1, c1, r1 - head * math.cos(a), c1 + head * math.sin(a)))
    return segs


def glyph_extent(glyph: ArrowGlyph, style: GlyphStyle = GlyphStyle()) -> tuple[float, float, float, float]:
    """(row_min, col_min, row_max, col_max) of the glyph's possible nonzero support."""
    pad = 0.5 * style.stroke_width_px * glyph.size + 0.5
    segs = _segments(glyph, style)
    rs = [v for s in segs for v in (s[0], s[2])]
    cs = [v for s in segs for v in (s[1], s[3])]
    return min(rs) - pad, min(cs) - pad, max(rs) + pad, max(cs) + pad


def glyph_bbox(glyph: ArrowGlyph, viewport: Viewport, style: GlyphStyle = GlyphStyle()) -> tuple[int, int, int, int] | None:
    """Integer pixel box (x0, y0, x1, y1), inclusive, clipped to the viewport; None if off-screen."""
    r0, c0, r1, c1 = glyph_extent(glyph, style)
    y0, x0 = max(0, math.ceil(r0)), max(0, math.ceil(c0))
    y1, x1 = min(viewport.height_px - 1, math.floor(r1)), min(viewport.width_px - 1, math.floor(c1))
    if y0 > y1 or x0 > x1:
        return None
    return x0, y0, x1, y1


def _capsule_coverage(rr: np.ndarray, cc: np.ndarray, seg, half_width: float) -> np.ndarray:
    r0, c0, r1, c1 = seg
    dr, dc = r1 - r0, c1 - c0
    ll = dr * dr + dc * dc
    if ll > 0.0:
        t = np.clip(((rr - r0) * dr + (cc - c0) * dc) / ll, 0.0, 1.0)
    else:
        t = np.zeros_like(rr)
    d = np.hypot(rr - (r0 + t * dr), cc - (c0 + t * dc))
    # signed-distance edge, dimmed for strokes thinner than a pixel
    return np.clip(half_width + 0.5 - d, 0.0, 1.0) * min(1.0, 2.0 * half_width)


def draw_glyph(canvas: np.ndarray, glyph: ArrowGlyph, style: GlyphStyle = GlyphStyle()) -> None:
    """Max-composite a glyph into ``canvas`` of shape (channels, H, W) in place."""
    _, h, w = canvas.shape
    r0, c0, r1, c1 = glyph_extent(glyph, style)
    y0, x0 = max(0, math.ceil(r0)), max(0, math.ceil(c0))
    y1, x1 = min(h - 1, math.floor(r1)), min(w - 1, math.floor(c1))
    if y0 > y1 or x0 > x1:
        return
    rr, cc = np.mgrid[y0:y1 + 1, x0:x1 + 1].astype(np.float64)
    hw = 0.5 * style.stroke_width_px * glyph.size
    cov = np.zeros_like(rr)
    for seg in _segments(glyph, style):
        np.maximum(cov, _capsule_coverage(rr, cc, seg, hw), out=cov)
    cov = cov.astype(canvas.dtype)
    region = canvas[:, y0:y1 + 1, x0:x1 + 1]
    np.maximum(region[0], cov, out=region[0])
    if canvas.shape[0] > 1:
        np.maximum(region[1], cov * np.float32(glyph.intensity), out=region[1])


def render_frame(time_slice: TimeSlice, params: LccParams, viewport: Viewport, channels: int = 1,
                 style: GlyphStyle = GlyphStyle()) -> FrameImage:
    if channels not in (1, 2):
        raise ValueError("frames have one base channel and an optional anomaly channel")
    canvas = np.zeros((channels, viewport.height_px, viewport.width_px), dtype=np.float32)
    for callsign in sorted(time_slice.per_aircraft):
        track = time_slice.per_aircraft[callsign]
        if track:
            draw_glyph(canvas, build_glyph(track, params, viewport, style), style)
    return FrameImage(canvas, time_slice.start_ms)


def render_images(slices: Iterable[TimeSlice], params: LccParams, viewport: Viewport, channels: int = 1,
                  style: GlyphStyle = GlyphStyle()) -> np.ndarray:
    """Stack of rendered slices, shape (N, channels, H, W)."""
    frames = [render_frame(s, params, viewport, channels, style).pixels for s in slices]
    if not frames:
        return np.zeros((0, channels, viewport.height_px, viewport.width_px), dtype=np.float32)
    return np.stack(frames)


def group_indices(n: int, s: int, stride: int | None = None) -> list[range]:
    """Index ranges of length ``s`` every ``stride`` images (default: back to back)."""
    if s < 1:
        raise ValueError("sequence length s must be at least 1")
    stride = s if stride is None else stride
    if stride < 1:
        raise ValueError("stride must be at least 1")
    return [range(i, i + s) for i in range(0, n - s + 1, stride)]


def render_stream(slices: Sequence[TimeSlice], s: int, params: LccParams, viewport: Viewport,
                  channels: int = 1, style: GlyphStyle = GlyphStyle(), stride: int | None = None) -> list[FrameSequence]:
    """Render slices and group them into sequences of ``s`` images; a short tail is dropped."""
    groups = group_indices(len(slices), s, stride)
    if not groups:
        return []
    images = render_images(slices, params, viewport, channels, style)
    starts = [sl.start_ms for sl in slices]
    return [FrameSequence(images[g.start:g.stop], starts[g.start:g.stop]) for g in groups]


def to_uint8(pixels: np.ndarray) -> np.ndarray:
    return np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_pgm(path, image: np.ndarray) -> None:
    """8-bit binary PGM of a (H, W) or (1, H, W) image."""
    img = image[0] if image.ndim == 3 else image
    data = to_uint8(img)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def write_png(path, image: np.ndarray) -> None:
    from PIL import Image

    img = image[0] if image.ndim == 3 else image
    Image.fromarray(to_uint8(img), mode="L").save(path)
