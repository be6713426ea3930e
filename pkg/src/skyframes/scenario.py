"""Seeded synthetic air traffic for a square surveillance region.

Aircraft arrive by a Poisson process, pick a route template, and report
once per second while inside the region. Routes are straight legs between
boundary points (overflights) or between the boundary and the central
airport (arrivals descend on a glide slope, departures climb).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ingest import AdsbMessage, MAX_ALTITUDE_FT, MAX_SPEED_KT, Region, inside_mask
from .projection import LccParams, inverse_project, project

KT_TO_MS = 1852.0 / 3600.0
M_TO_FT = 1.0 / 0.3048
HEADING_LSB_DEG = 360.0 / 1024.0


@dataclass(frozen=True)
class RouteTemplate:
    """A route in plane metres relative to the region centre."""

    entry: tuple[float, float]
    exit: tuple[float, float]
    altitude_band_ft: tuple[float, float] = (28000.0, 38000.0)
    speed_band_kt: tuple[float, float] = (380.0, 480.0)
    descent: bool = False
    climb: bool = False
    glide_slope_deg: float = 3.0
    weight: float = 1.0

    def __post_init__(self):
        if self.entry == self.exit:
            raise ValueError("route entry and exit must differ")
        lo, hi = self.altitude_band_ft
        if not 0.0 <= lo <= hi <= MAX_ALTITUDE_FT:
            raise ValueError("altitude band outside [0, 45000] ft")
        lo, hi = self.speed_band_kt
        if not 0.0 < lo <= hi <= MAX_SPEED_KT:
            raise ValueError("speed band outside (0, 500] kt")
        if self.descent and self.climb:
            raise ValueError("a route either descends or climbs")


@dataclass(frozen=True)
class NoiseLevels:
    position_m: float = 30.0
    heading_deg: float = 1.0
    speed_kt: float = 3.0
    lateral_offset_m: float = 1500.0  # per-aircraft spread around the template line


@dataclass(frozen=True)
class ScenarioConfig:
    arrival_rate_per_min: float = 0.8
    duration_s: float = 3600.0
    start_ms: int = 1_560_000_000_000
    noise: NoiseLevels = NoiseLevels()
    callsign_prefix: str = "SYN"


def _boundary_point(bearing_deg: float, half: float) -> tuple[float, float]:
    # point where a ray from the centre at this bearing leaves the square
    b = math.radians(bearing_deg)
    dx, dy = math.sin(b), math.cos(b)
    t = half / max(abs(dx), abs(dy))
    return dx * t, dy * t


def default_templates(region: Region) -> list[RouteTemplate]:
    """Overflights crossing the box plus arrivals to and departures from the centre."""
    h = region.half_extent_m * 1.02  # spawn just outside so aircraft fly in
    out = []
    for a, b in ((250.0, 70.0), (340.0, 165.0), (20.0, 200.0), (110.0, 300.0), (290.0, 125.0), (200.0, 40.0)):
        out.append(RouteTemplate(_boundary_point(a, h), _boundary_point(b, h)))
    for a in (80.0, 260.0, 150.0):
        out.append(RouteTemplate(_boundary_point(a, h), (0.0, 0.0), (8000.0, 14000.0), (180.0, 260.0), descent=True))
    for b in (300.0, 30.0):
        out.append(RouteTemplate((0.0, 0.0), _boundary_point(b, h), (20000.0, 30000.0), (200.0, 320.0), climb=True,
                                 glide_slope_deg=5.0, weight=0.8))
    return out


@dataclass
class _Flight:
    callsign: str
    spawn_s: float
    template: RouteTemplate
    speed_kt: float
    cruise_ft: float
    offset_m: float


def _flight_messages(fl: _Flight, duration_s: float, start_ms: int, noise: NoiseLevels,
                     rng: np.random.Generator, params: LccParams) -> list[AdsbMessage]:
    tp = fl.template
    (x0, y0), (x1, y1) = tp.entry, tp.exit
    length = math.hypot(x1 - x0, y1 - y0)
    ux, uy = (x1 - x0) / length, (y1 - y0) / length
    # lateral offset, tapered to zero at the airport end for arrivals/departures
    nx, ny = -uy, ux
    v = fl.speed_kt * KT_TO_MS
    t_first = max(0.0, math.ceil(fl.spawn_s))
    t_last = min(duration_s - 1.0, fl.spawn_s + length / v)
    if t_last < t_first:
        return []
    ts = np.arange(t_first, math.floor(t_last) + 1.0)
    if len(ts) == 0:
        return []
    k = len(ts)
    speed = fl.speed_kt + rng.normal(0.0, noise.speed_kt, k) if noise.speed_kt > 0 else np.full(k, fl.speed_kt)
    along = (ts - fl.spawn_s) * v
    frac = along / length
    if tp.descent:
        taper = 1.0 - frac
    elif tp.climb:
        taper = frac
    else:
        taper = np.ones(k)
    off = fl.offset_m * np.clip(taper * 4.0, 0.0, 1.0)
    px = x0 + ux * along + nx * off
    py = y0 + uy * along + ny * off
    if noise.position_m > 0:
        px = px + rng.normal(0.0, noise.position_m, k)
        py = py + rng.normal(0.0, noise.position_m, k)
    track_deg = math.degrees(math.atan2(ux, uy))
    heading = track_deg + (rng.normal(0.0, noise.heading_deg, k) if noise.heading_deg > 0 else np.zeros(k))
    # quantized to the 10-bit ADS-B heading resolution (360/1024 deg, exact in binary)
    heading = np.mod(np.round(heading / HEADING_LSB_DEG) * HEADING_LSB_DEG, 360.0)
    if tp.descent:
        dist = np.maximum(length - along, 0.0)
        alt = np.minimum(fl.cruise_ft, dist * math.tan(math.radians(tp.glide_slope_deg)) * M_TO_FT)
    elif tp.climb:
        alt = np.minimum(fl.cruise_ft, along * math.tan(math.radians(tp.glide_slope_deg)) * M_TO_FT)
    else:
        alt = np.full(k, fl.cruise_ft)
    lat, lon = inverse_project(px, py, params)
    speed = np.clip(speed, 0.0, MAX_SPEED_KT)
    alt = np.clip(alt, 0.0, MAX_ALTITUDE_FT)
    times = start_ms + (ts * 1000.0).astype(np.int64)
    # heading is rounded to 0 when the mod lands exactly on 360 in floating point
    heading = np.where(heading >= 360.0, 0.0, heading)
    return [
        AdsbMessage(fl.callsign, int(times[i]), float(lat[i]), float(lon[i]), float(speed[i]), float(alt[i]),
                    float(heading[i]))
        for i in range(k)
    ]


def generate_corpus(region: Region, templates: Sequence[RouteTemplate] | None = None,
                    config: ScenarioConfig = ScenarioConfig(), seed: int = 0,
                    params: LccParams | None = None) -> list[AdsbMessage]:
    """Deterministic synthetic corpus sorted by (time, callsign).

    Traffic is warmed up before t=0 so the region is already populated when
    the first message is emitted. Only positions inside the region are kept.
    """
    templates = list(templates) if templates is not None else default_templates(region)
    if not templates:
        raise ValueError("at least one route template is required")
    if config.duration_s <= 0 or config.arrival_rate_per_min <= 0:
        return []
    params = params or region.projection()
    rng = np.random.default_rng(seed)
    weights = np.array([t.weight for t in templates], dtype=np.float64)
    weights /= weights.sum()
    rate_s = config.arrival_rate_per_min / 60.0
    longest = max(math.hypot(t.exit[0] - t.entry[0], t.exit[1] - t.entry[1]) / (t.speed_band_kt[0] * KT_TO_MS)
                  for t in templates)
    t = -longest
    flights: list[_Flight] = []
    while True:
        t += rng.exponential(1.0 / rate_s)
        if t >= config.duration_s:
            break
        tp = templates[rng.choice(len(templates), p=weights)]
        flights.append(_Flight(
            callsign=f"{config.callsign_prefix}{len(flights):05d}",
            spawn_s=t,
            template=tp,
            speed_kt=rng.uniform(*tp.speed_band_kt),
            cruise_ft=rng.uniform(*tp.altitude_band_ft),
            offset_m=rng.normal(0.0, config.noise.lateral_offset_m) if config.noise.lateral_offset_m > 0 else 0.0,
        ))
    msgs: list[AdsbMessage] = []
    for fl in flights:
        frng = np.random.default_rng([seed, int(fl.callsign[len(config.callsign_prefix):])])
        msgs.extend(_flight_messages(fl, config.duration_s, config.start_ms, config.noise, frng, params))
    mask = inside_mask(msgs, region, params)
    msgs = [m for m, keep in zip(msgs, mask) if keep]
    msgs.sort(key=lambda m: (m.time_ms, m.callsign))
    return msgs


def split_corpus(messages: Sequence[AdsbMessage], fractions: tuple[float, float, float] = (0.60, 0.25, 0.15)):
    """Contiguous (train, validation, test) partitions by time span, never shuffled.

    Boundaries sit at fractions of the span from the first to the last
    message time, so a 100 s corpus splits at 60 s and 85 s.
    """
    if len(fractions) != 3 or any(f < 0 for f in fractions) or not math.isclose(sum(fractions), 1.0, abs_tol=1e-9):
        raise ValueError("fractions must be three non-negative numbers summing to 1")
    msgs = sorted(messages, key=lambda m: m.time_ms)
    if not msgs:
        return [], [], []
    t0 = msgs[0].time_ms
    span = msgs[-1].time_ms - t0
    b1 = t0 + fractions[0] * span
    b2 = t0 + (fractions[0] + fractions[1]) * span
    if fractions[2] == 0:
        b2 = math.inf
    if fractions[1] == 0 and fractions[2] == 0:
        b1 = math.inf
    train = [m for m in msgs if m.time_ms < b1]
    val = [m for m in msgs if b1 <= m.time_ms < b2]
    test = [m for m in msgs if m.time_ms >= b2]
    return train, val, test


def foreign_route(seed: int = 0, region: Region | None = None, min_messages: int = 60) -> list[AdsbMessage]:
    """One aircraft's track from an unrelated region, used as a ghost source."""
    region = region or Region(41.80, 12.25)
    corpus = generate_corpus(region, config=ScenarioConfig(arrival_rate_per_min=1.0, duration_s=1800.0,
                                                           callsign_prefix="FGN"), seed=seed)
    tracks: dict[str, list[AdsbMessage]] = {}
    for m in corpus:
        tracks.setdefault(m.callsign, []).append(m)
    candidates = sorted((cs for cs, tr in tracks.items() if len(tr) >= min_messages))
    if not candidates:
        raise ValueError("no foreign track is long enough")
    pick = candidates[np.random.default_rng(seed).integers(len(candidates))]
    return tracks[pick]
