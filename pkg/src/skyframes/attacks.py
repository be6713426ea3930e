"""Attack injection into 50-image test segments, with per-image ground truth.

A segment is the message content behind 50 consecutive slices. The first 35
slices are never touched: every injector only adds, removes or edits messages
whose time falls after the end of slice 34 and before the start of slice 50,
so clean and attacked segments render identically up to image 35.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .ingest import AdsbMessage, Region, TimeSlice, slice_at
from .projection import LccParams, Viewport, from_pixel, inverse_project, project, to_pixel
from .raster import GlyphStyle, build_glyph, glyph_bbox

log = logging.getLogger(__name__)

SEGMENT_LEN = 50
CLEAN_PREFIX = 35


class AttackKind(str, enum.Enum):
    FLOOD = "Flood"
    GHOST = "Ghost"
    JAM = "Jam"
    REVERSE = "Reverse"
    CHANGE_ALTITUDE = "ChangeAltitude"

    @classmethod
    def parse(cls, text: str) -> AttackKind:
        for k in cls:
            if k.value.lower() == text.lower() or k.name.lower() == text.lower():
                return k
        raise ValueError(f"unknown attack kind {text!r}")


ALL_KINDS = tuple(AttackKind)


@dataclass(frozen=True)
class AttackSpec:
    kind: AttackKind
    segment_index: int
    rng_seed: int = 0
    params: dict = field(default_factory=dict)


@dataclass
class Segment:
    index: int
    starts_ms: list[int]
    delta_t_ms: int
    messages: list[AdsbMessage]  # sorted by time, everything any of the slices can see

    @property
    def stride_ms(self) -> int:
        return self.starts_ms[1] - self.starts_ms[0]

    def attack_window(self, duration_ms: int | None = None) -> tuple[int, int]:
        """[start, end) message times seen by the last 15 images and by none of the first 35."""
        lo = self.starts_ms[CLEAN_PREFIX - 1] + self.delta_t_ms
        hi = self.starts_ms[-1] + self.delta_t_ms
        if hi <= lo:
            raise ValueError("slice overlap too large for a clean 35-image prefix")
        if duration_ms is not None:
            hi = min(hi, lo + duration_ms)
        return lo, hi

    def slices(self) -> list[TimeSlice]:
        return slice_at(self.messages, self.starts_ms, self.delta_t_ms, presorted=True)

    def with_messages(self, messages: Iterable[AdsbMessage]) -> Segment:
        msgs = sorted(messages, key=lambda m: m.time_ms)
        return Segment(self.index, list(self.starts_ms), self.delta_t_ms, msgs)


@dataclass
class GroundTruthLabel:
    segment_index: int
    kind: AttackKind | None
    attacked: list[bool]  # one flag per image
    callsigns: list[str] = field(default_factory=list)
    bboxes: list[tuple[int, int, int, int] | None] = field(default_factory=list)  # per image, (x0, y0, x1, y1)
    skipped: str | None = None

    @classmethod
    def clean(cls, segment: Segment) -> GroundTruthLabel:
        n = len(segment.starts_ms)
        return cls(segment.index, None, [False] * n, [], [None] * n)


@dataclass(frozen=True)
class AttackGeometry:
    """Projection, viewport and glyph style used to compute label boxes."""

    params: LccParams
    viewport: Viewport
    style: GlyphStyle = GlyphStyle()


def segment_test_set(test_slices: Sequence[TimeSlice], size: int = SEGMENT_LEN) -> list[Segment]:
    """Consecutive disjoint runs of ``size`` slices; a shorter tail is dropped."""
    out = []
    for k in range(len(test_slices) // size):
        chunk = test_slices[k * size:(k + 1) * size]
        seen: dict[int, AdsbMessage] = {}
        for sl in chunk:
            for track in sl.per_aircraft.values():
                for m in track:
                    seen.setdefault(id(m), m)
        msgs = sorted(seen.values(), key=lambda m: (m.time_ms, m.callsign))
        out.append(Segment(k, [s.start_ms for s in chunk], chunk[0].delta_t_ms, msgs))
    return out


def _union(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return min(a[0], b[0]), min(a[1], b[1]), max(a[2], b[2]), max(a[3], b[3])


def _boxes(segment: Segment, callsigns: set[str], geom: AttackGeometry) -> list[tuple[int, int, int, int] | None]:
    """Per-image union box of the glyphs drawn for ``callsigns``."""
    boxes = []
    for sl in segment.slices():
        box = None
        for cs in callsigns:
            track = sl.per_aircraft.get(cs)
            if track:
                box = _union(box, glyph_bbox(build_glyph(track, geom.params, geom.viewport, geom.style),
                                             geom.viewport, geom.style))
        boxes.append(box)
    return boxes


def _label(segment: Segment, kind: AttackKind, window: tuple[int, int], callsigns: list[str],
           boxes: list) -> GroundTruthLabel:
    lo, hi = window
    attacked = [s < hi and s + segment.delta_t_ms > lo for s in segment.starts_ms]
    return GroundTruthLabel(segment.index, kind, attacked, callsigns,
                            [b if a else None for a, b in zip(attacked, boxes)])


def _fresh_callsign(segment: Segment, prefix: str, rng: np.random.Generator) -> str:
    taken = {m.callsign for m in segment.messages}
    while True:
        cs = f"{prefix}{rng.integers(0, 10**5):05d}"
        if cs not in taken:
            return cs


def _ticks(window: tuple[int, int], period_ms: int = 1000) -> list[int]:
    lo, hi = window
    return list(range(lo, hi, period_ms))


def inject_flood(segment: Segment, rng: np.random.Generator, geom: AttackGeometry,
                 count: int | None = None, resample_each_image: bool = False,
                 duration_ms: int | None = None, region_half_extent_m: float | None = None):
    """Add 3-8 fake aircraft at uniform random positions during the attack window."""
    if count is None:
        count = int(rng.integers(3, 9))
    if not 3 <= count <= 8:
        raise ValueError("flood count must lie in [3, 8]")
    window = segment.attack_window(duration_ms)
    half = region_half_extent_m if region_half_extent_m is not None else -geom.viewport.origin_x
    ticks = _ticks(window)
    added: list[AdsbMessage] = []
    names = []
    for _ in range(count):
        cs = _fresh_callsign(segment, "FLD", rng)
        while cs in names:
            cs = _fresh_callsign(segment, "FLD", rng)
        names.append(cs)
        heading = float(rng.uniform(0.0, 360.0))
        speed = float(rng.uniform(0.0, 500.0))
        alt = float(rng.uniform(0.0, 40000.0))
        x, y = rng.uniform(-half, half, size=2)
        period = segment.stride_ms
        for t in ticks:
            if resample_each_image and t != window[0] and (t - window[0]) % period == 0:
                x, y = rng.uniform(-half, half, size=2)
            lat, lon = inverse_project(float(x), float(y), geom.params)
            added.append(AdsbMessage(cs, t, lat, lon, speed, alt, heading))
    out = segment.with_messages(segment.messages + added)
    return out, _label(out, AttackKind.FLOOD, window, names, _boxes(out, set(names), geom))


def inject_ghost(segment: Segment, source_route: Sequence[AdsbMessage], rng: np.random.Generator,
                 geom: AttackGeometry, anchor: str = "midpoint", anchor_xy: tuple[float, float] | None = None,
                 duration_ms: int | None = None, region_half_extent_m: float | None = None):
    """Add one aircraft flying a foreign route, shifted into the region and onto the attack window.

    The route is flattened in a projection centred on itself, translated so
    its midpoint (or first point) lands on ``anchor_xy`` (default: uniform in
    the region), and re-timed so its first report falls at the window start.
    """
    window = segment.attack_window(duration_ms)
    route = sorted(source_route, key=lambda m: m.time_ms)
    if not route or route[-1].time_ms - route[0].time_ms < window[1] - window[0] - 1000:
        raise ValueError("ghost source route is shorter than the attack window")
    t0 = route[0].time_ms
    used = [m for m in route if m.time_ms - t0 < window[1] - window[0]]
    lat = np.array([m.latitude for m in used])
    lon = np.array([m.longitude for m in used])
    local = LccParams.around(float(lat.mean()), float(lon.mean()))
    x, y = project(lat, lon, local)
    ref = len(used) // 2 if anchor == "midpoint" else 0
    if anchor not in ("midpoint", "first"):
        raise ValueError("anchor must be 'midpoint' or 'first'")
    if anchor_xy is None:
        half = region_half_extent_m if region_half_extent_m is not None else -geom.viewport.origin_x
        anchor_xy = tuple(rng.uniform(-half, half, size=2))
    x = x - x[ref] + anchor_xy[0]
    y = y - y[ref] + anchor_xy[1]
    glat, glon = inverse_project(x, y, geom.params)
    cs = _fresh_callsign(segment, "GST", rng)
    added = [
        AdsbMessage(cs, window[0] + (m.time_ms - t0), float(a), float(o), m.speed, m.altitude, m.heading)
        for m, a, o in zip(used, np.atleast_1d(glat), np.atleast_1d(glon))
    ]
    out = segment.with_messages(segment.messages + added)
    return out, _label(out, AttackKind.GHOST, window, [cs], _boxes(out, {cs}, geom))


def presence(segment: Segment, window: tuple[int, int] | None = None) -> dict[str, int]:
    """Number of attacked images in which each aircraft appears."""
    window = window or segment.attack_window()
    counts: dict[str, int] = {}
    for sl in segment.slices()[CLEAN_PREFIX:]:
        if not (sl.start_ms < window[1] and sl.end_ms > window[0]):
            continue
        for cs, track in sl.per_aircraft.items():
            if any(window[0] <= m.time_ms < window[1] for m in track):
                counts[cs] = counts.get(cs, 0) + 1
    return counts


def pick_target(segment: Segment, window: tuple[int, int], min_presence: int = 10) -> str | None:
    """Aircraft seen in the most attacked images (ties: smallest callsign), if present often enough."""
    counts = presence(segment, window)
    if not counts:
        return None
    n_images = sum(1 for s in segment.starts_ms[CLEAN_PREFIX:] if s < window[1] and s + segment.delta_t_ms > window[0])
    need = min(min_presence, n_images)
    best = min(counts, key=lambda cs: (-counts[cs], cs))
    return best if counts[best] >= need else None


def _targeted(segment: Segment, kind: AttackKind, target: str | None, geom: AttackGeometry,
              duration_ms: int | None, edit):
    window = segment.attack_window(duration_ms)
    if target is None:
        target = pick_target(segment, window)
    if target is None:
        log.info("segment %d: no aircraft present long enough for %s, skipped", segment.index, kind.value)
        label = GroundTruthLabel.clean(segment)
        label.kind = kind
        label.skipped = "no aircraft present in at least 10 of the attacked images"
        return segment, label
    lo, hi = window
    before = _boxes(segment, {target}, geom)
    msgs = []
    for m in segment.messages:
        if m.callsign == target and lo <= m.time_ms < hi:
            m = edit(m)
            if m is None:
                continue
        msgs.append(m)
    out = Segment(segment.index, list(segment.starts_ms), segment.delta_t_ms, msgs)
    after = _boxes(out, {target}, geom)
    return out, _label(out, kind, window, [target], [_union(a, b) for a, b in zip(before, after)])


def inject_jam(segment: Segment, geom: AttackGeometry, target_callsign: str | None = None,
               rng: np.random.Generator | None = None, duration_ms: int | None = None):
    """Drop every message of the target inside the attack window."""
    return _targeted(segment, AttackKind.JAM, target_callsign, geom, duration_ms, lambda m: None)


def inject_reverse(segment: Segment, geom: AttackGeometry, target_callsign: str | None = None,
                   rng: np.random.Generator | None = None, duration_ms: int | None = None):
    """Flip the target's reported heading by 180 degrees inside the attack window."""
    return _targeted(segment, AttackKind.REVERSE, target_callsign, geom, duration_ms,
                     lambda m: replace(m, heading=(m.heading + 180.0) % 360.0))


def inject_altitude(segment: Segment, geom: AttackGeometry, target_callsign: str | None = None,
                    threshold_ft: float = 10000.0, high_ft: float = 35000.0, low_ft: float = 2000.0,
                    rng: np.random.Generator | None = None, duration_ms: int | None = None):
    """Swap low (descending) altitudes to ``high_ft`` and the rest to ``low_ft``."""
    return _targeted(segment, AttackKind.CHANGE_ALTITUDE, target_callsign, geom, duration_ms,
                     lambda m: replace(m, altitude=high_ft if m.altitude < threshold_ft else low_ft))


@dataclass
class AttackOptions:
    flood_resample: bool = False
    altitude_threshold_ft: float = 10000.0
    altitude_high_ft: float = 35000.0
    altitude_low_ft: float = 2000.0
    duration_ms: int | None = None
    ghost_routes: Sequence[Sequence[AdsbMessage]] = ()


def inject(segment: Segment, kind: AttackKind, seed: int, geom: AttackGeometry,
           options: AttackOptions = AttackOptions()):
    rng = np.random.default_rng([seed, segment.index, ALL_KINDS.index(kind)])
    if kind is AttackKind.FLOOD:
        return inject_flood(segment, rng, geom, resample_each_image=options.flood_resample,
                            duration_ms=options.duration_ms)
    if kind is AttackKind.GHOST:
        if not options.ghost_routes:
            raise ValueError("ghost injection needs at least one foreign route")
        route = options.ghost_routes[int(rng.integers(len(options.ghost_routes)))]
        return inject_ghost(segment, route, rng, geom, duration_ms=options.duration_ms)
    if kind is AttackKind.JAM:
        return inject_jam(segment, geom, duration_ms=options.duration_ms)
    if kind is AttackKind.REVERSE:
        return inject_reverse(segment, geom, duration_ms=options.duration_ms)
    return inject_altitude(segment, geom, threshold_ft=options.altitude_threshold_ft,
                           high_ft=options.altitude_high_ft, low_ft=options.altitude_low_ft,
                           duration_ms=options.duration_ms)


@dataclass
class InfectedTestSet:
    segments: list[Segment]
    labels: list[GroundTruthLabel]
    shortfall: int = 0

    def messages(self) -> list[AdsbMessage]:
        """All messages of the infected stream, each once, in time order."""
        seen: dict[tuple, AdsbMessage] = {}
        for seg in self.segments:
            for m in seg.messages:
                seen.setdefault((m.callsign, m.time_ms), m)
        return sorted(seen.values(), key=lambda m: (m.time_ms, m.callsign))

    def image_labels(self) -> np.ndarray:
        return np.array([a for lab in self.labels for a in lab.attacked], dtype=bool)


def build_infected_testset(segments: Sequence[Segment], kinds: Sequence[AttackKind], injections_per_kind: int,
                           seed: int, geom: AttackGeometry, options: AttackOptions = AttackOptions()) -> InfectedTestSet:
    """Attack kinds assigned round-robin, one per segment, until each kind has its quota."""
    total = injections_per_kind * len(kinds)
    if total > len(segments):
        log.warning("only %d segments for %d requested injections", len(segments), total)
    out_segments, labels = [], []
    for seg in segments:
        if seg.index < total and kinds:
            kind = kinds[seg.index % len(kinds)]
            new, lab = inject(seg, kind, seed, geom, options)
        else:
            new, lab = seg, GroundTruthLabel.clean(seg)
        out_segments.append(new)
        labels.append(lab)
    return InfectedTestSet(out_segments, labels, max(0, total - len(segments)))


def write_labels(path, labels: Sequence[GroundTruthLabel]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["segment_index", "image_index", "attacked", "kind", "target_callsigns", "x0", "y0", "x1", "y1"])
        for lab in labels:
            for i, flag in enumerate(lab.attacked):
                box = lab.bboxes[i] if i < len(lab.bboxes) else None
                w.writerow([lab.segment_index, i, int(flag), lab.kind.value if lab.kind else "",
                            ";".join(lab.callsigns) if flag else "",
                            *(box if box is not None else ("", "", "", ""))])


def read_labels(path) -> list[GroundTruthLabel]:
    """Labels in file order; one label per (attack kind, segment) pair."""
    by_seg: dict[tuple[str, int], GroundTruthLabel] = {}
    with open(path, encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            idx = int(row["segment_index"])
            lab = by_seg.setdefault((row["kind"], idx), GroundTruthLabel(idx, None, [], [], []))
            if row["kind"]:
                lab.kind = AttackKind.parse(row["kind"])
            lab.attacked.append(row["attacked"] == "1")
            if row["target_callsigns"] and not lab.callsigns:
                lab.callsigns = row["target_callsigns"].split(";")
            lab.bboxes.append(tuple(int(row[k]) for k in ("x0", "y0", "x1", "y1")) if row["x0"] else None)
    return list(by_seg.values())
