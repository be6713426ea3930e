"""Parsing, validation, region filtering and time slicing of ADS-B state reports.

Both on-disk formats share one schema::

    callsign,time_ms,lat,lon,speed_kt,alt_ft,heading_deg[,anomaly_score]

CSV needs the header row; JSONL carries the same keys on every line.
"""

from __future__ import annotations

import bisect
import csv
import io
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import IO, Iterable

import numpy as np

from .projection import LccParams, Viewport, project

log = logging.getLogger(__name__)

COLUMNS = ("callsign", "time_ms", "lat", "lon", "speed_kt", "alt_ft", "heading_deg")
OPTIONAL_COLUMNS = ("anomaly_score",)
MAX_SPEED_KT = 500.0
MAX_ALTITUDE_FT = 45000.0


class FormatError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class AdsbMessage:
    callsign: str
    time_ms: int
    latitude: float
    longitude: float
    speed: float
    altitude: float
    heading: float
    anomaly_score: float | None = None


@dataclass(frozen=True)
class Region:
    center_lat: float
    center_lon: float
    half_extent_km: float = 50.0

    def __post_init__(self):
        if not self.half_extent_km > 0:
            raise ValueError("half_extent_km must be positive")
        if not -90.0 < self.center_lat < 90.0 or not -180.0 <= self.center_lon <= 180.0:
            raise ValueError("region center outside valid latitude/longitude range")

    @property
    def half_extent_m(self) -> float:
        return self.half_extent_km * 1000.0

    def projection(self, spread_deg: float = 0.5) -> LccParams:
        return LccParams.around(self.center_lat, self.center_lon, spread_deg)

    def viewport(self, size_px: int = 64) -> Viewport:
        return Viewport.centered(self.half_extent_m, size_px)


@dataclass
class TimeSlice:
    start_ms: int
    end_ms: int
    per_aircraft: dict[str, list[AdsbMessage]] = field(default_factory=dict)

    @property
    def delta_t_ms(self) -> int:
        return self.end_ms - self.start_ms

    def messages(self) -> list[AdsbMessage]:
        return sorted((m for track in self.per_aircraft.values() for m in track),
                      key=lambda m: (m.time_ms, m.callsign))

    def __len__(self) -> int:
        return sum(len(t) for t in self.per_aircraft.values())


@dataclass
class ParseReport:
    accepted: int = 0
    skipped: int = 0
    clamped: int = 0
    problems: list[str] = field(default_factory=list)

    def note(self, line: int, what: str) -> None:
        self.problems.append(f"record {line}: {what}")


def validate(callsign: str, time_ms: int, lat: float, lon: float, speed: float, alt: float,
             heading: float, anomaly_score: float | None = None,
             report: ParseReport | None = None, line: int = 0) -> AdsbMessage | None:
    """Build a message from raw fields, or return None if a field is out of range."""
    report = report if report is not None else ParseReport()
    bad = None
    if not callsign:
        bad = "empty callsign"
    elif time_ms <= 0:
        bad = f"time_ms {time_ms} not positive"
    elif not all(math.isfinite(v) for v in (lat, lon, speed, alt, heading)):
        bad = "non-finite value"
    elif not -90.0 <= lat <= 90.0:
        bad = f"latitude {lat} out of range"
    elif not -180.0 <= lon <= 180.0:
        bad = f"longitude {lon} out of range"
    elif not 0.0 <= speed <= MAX_SPEED_KT:
        bad = f"speed {speed} out of range"
    elif alt < 0.0:
        bad = f"altitude {alt} negative"
    elif anomaly_score is not None and not (math.isfinite(anomaly_score) and 0.0 <= anomaly_score <= 1.0):
        bad = f"anomaly score {anomaly_score} outside [0, 1]"
    if bad is not None:
        report.skipped += 1
        report.note(line, bad)
        return None
    if alt > MAX_ALTITUDE_FT:
        report.clamped += 1
        report.note(line, f"altitude {alt} clamped to {MAX_ALTITUDE_FT:g}")
        alt = MAX_ALTITUDE_FT
    heading = float(heading) % 360.0
    if heading == 360.0:  # -tiny % 360 rounds up
        heading = 0.0
    report.accepted += 1
    return AdsbMessage(callsign, int(time_ms), float(lat), float(lon), float(speed), float(alt),
                       heading, None if anomaly_score is None else float(anomaly_score))


def _record(raw: dict, line: int, report: ParseReport) -> AdsbMessage | None:
    try:
        callsign = str(raw["callsign"]).strip()
        t = raw["time_ms"]
        if isinstance(t, str):
            t = t.strip()
            time_ms = int(t)
        elif isinstance(t, bool) or not float(t).is_integer():
            raise ValueError(f"time_ms {t!r} is not an integer")
        else:
            time_ms = int(t)
        vals = [float(raw[k]) for k in COLUMNS[2:]]
        score = raw.get("anomaly_score")
        score = None if score in (None, "") else float(score)
    except (KeyError, TypeError, ValueError) as exc:
        report.skipped += 1
        report.note(line, f"unparseable ({exc})")
        return None
    return validate(callsign, time_ms, *vals, anomaly_score=score, report=report, line=line)


def _text(stream) -> IO[str]:
    if isinstance(stream, (bytes, bytearray)):
        return io.StringIO(stream.decode("utf-8"))
    if isinstance(stream, io.TextIOBase):
        return stream
    try:
        return io.TextIOWrapper(stream, encoding="utf-8", newline="")
    except (AttributeError, TypeError) as exc:
        raise OSError(f"unreadable input stream: {exc}") from exc


def parse_messages(stream, fmt: str = "csv", report: ParseReport | None = None) -> list[AdsbMessage]:
    """Read messages from a byte/text stream in ``csv`` or ``jsonl`` format.

    Records failing validation are skipped and tallied in ``report``; a bad
    header or a line that is not JSON raises :class:`FormatError`.
    """
    report = report if report is not None else ParseReport()
    fmt = fmt.lower()
    text = _text(stream)
    out: list[AdsbMessage] = []
    if fmt == "csv":
        reader = csv.reader(text)
        header = next(reader, None)
        if header is None:
            raise FormatError("missing CSV header")
        header = [h.strip() for h in header]
        if tuple(header[:len(COLUMNS)]) != COLUMNS or any(h not in OPTIONAL_COLUMNS for h in header[len(COLUMNS):]):
            raise FormatError(f"CSV header must start with {','.join(COLUMNS)}, got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                report.skipped += 1
                report.note(lineno, f"expected {len(header)} fields, got {len(row)}")
                continue
            msg = _record(dict(zip(header, row)), lineno, report)
            if msg is not None:
                out.append(msg)
    elif fmt == "jsonl":
        for lineno, line in enumerate(text, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"line {lineno}: not JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise FormatError(f"line {lineno}: expected a JSON object")
            msg = _record(obj, lineno, report)
            if msg is not None:
                out.append(msg)
    else:
        raise FormatError(f"unknown format {fmt!r}; use csv or jsonl")
    if report.skipped or report.clamped:
        log.warning("parsed %d records, skipped %d, clamped %d", report.accepted, report.skipped, report.clamped)
    return out


def _row(m: AdsbMessage) -> list[str]:
    return [m.callsign, str(m.time_ms), repr(m.latitude), repr(m.longitude), repr(m.speed),
            repr(m.altitude), repr(m.heading)]


def write_messages(messages: Iterable[AdsbMessage], stream: IO[str], fmt: str = "csv") -> None:
    """Serialize messages; floats use ``repr`` so a re-parse is exact."""
    messages = list(messages)
    scored = any(m.anomaly_score is not None for m in messages)
    if fmt == "csv":
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(COLUMNS + (OPTIONAL_COLUMNS if scored else ()))
        for m in messages:
            row = _row(m)
            if scored:
                row.append("" if m.anomaly_score is None else repr(m.anomaly_score))
            w.writerow(row)
    elif fmt == "jsonl":
        for m in messages:
            obj = dict(zip(COLUMNS, (m.callsign, m.time_ms, m.latitude, m.longitude, m.speed, m.altitude, m.heading)))
            if m.anomaly_score is not None:
                obj["anomaly_score"] = m.anomaly_score
            stream.write(json.dumps(obj) + "\n")
    else:
        raise FormatError(f"unknown format {fmt!r}")


def read_corpus(path, fmt: str | None = None, report: ParseReport | None = None) -> list[AdsbMessage]:
    fmt = fmt or ("jsonl" if str(path).endswith((".jsonl", ".json")) else "csv")
    with open(path, "rb") as fh:
        return parse_messages(fh, fmt, report)


def write_corpus(path, messages: Iterable[AdsbMessage], fmt: str | None = None) -> None:
    fmt = fmt or ("jsonl" if str(path).endswith((".jsonl", ".json")) else "csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        write_messages(messages, fh, fmt)


def inside_mask(messages: list[AdsbMessage], region: Region, params: LccParams | None = None) -> np.ndarray:
    if not messages:
        return np.zeros(0, dtype=bool)
    params = params or region.projection()
    lat = np.fromiter((m.latitude for m in messages), dtype=np.float64, count=len(messages))
    lon = np.fromiter((m.longitude for m in messages), dtype=np.float64, count=len(messages))
    ok = np.abs(lat) < 90.0
    x = np.full(len(messages), np.inf)
    y = np.full(len(messages), np.inf)
    if ok.any():
        x[ok], y[ok] = project(lat[ok], lon[ok], params)
    h = region.half_extent_m
    return (x >= -h) & (x < h) & (y > -h) & (y <= h)


def filter_region(messages: list[AdsbMessage], region: Region, params: LccParams | None = None) -> list[AdsbMessage]:
    """Keep messages whose projected position lies in the region's square, in order.

    The square spans ``[-h, h)`` east-west and ``(-h, h]`` north-south so it
    matches the pixel grid exactly.
    """
    mask = inside_mask(messages, region, params)
    return [m for m, keep in zip(messages, mask) if keep]


def sort_messages(messages: Iterable[AdsbMessage]) -> list[AdsbMessage]:
    return sorted(messages, key=lambda m: m.time_ms)


def slice_at(messages: list[AdsbMessage], starts_ms: Iterable[int], delta_t_ms: int,
             presorted: bool = False) -> list[TimeSlice]:
    """Group messages into ``[start, start + delta_t)`` windows for each given start."""
    msgs = messages if presorted else sort_messages(messages)
    times = [m.time_ms for m in msgs]
    out = []
    for start in starts_ms:
        lo = bisect.bisect_left(times, start)
        hi = bisect.bisect_left(times, start + delta_t_ms)
        groups: dict[str, list[AdsbMessage]] = defaultdict(list)
        for m in msgs[lo:hi]:
            groups[m.callsign].append(m)
        out.append(TimeSlice(int(start), int(start + delta_t_ms), {k: groups[k] for k in sorted(groups)}))
    return out


def slice_grid(first_ms: int, last_ms: int, delta_t_s: float, overlap_fraction: float) -> tuple[list[int], int]:
    """Slice start times anchored at ``first_ms``, up to and including ``last_ms``."""
    if not delta_t_s > 0:
        raise ValueError("delta_t_s must be positive")
    if not 0.0 <= overlap_fraction < 1.0:
        raise ValueError("overlap_fraction must lie in [0, 1)")
    dt_ms = int(round(delta_t_s * 1000.0))
    stride = int(round(dt_ms * (1.0 - overlap_fraction)))
    if stride <= 0:
        raise ValueError("slice stride rounds to zero milliseconds")
    return list(range(first_ms, last_ms + 1, stride)), dt_ms


def slice_time(messages: list[AdsbMessage], delta_t_s: float, overlap_fraction: float = 0.5) -> list[TimeSlice]:
    """Cut a message stream into possibly overlapping windows of ``delta_t_s`` seconds.

    Windows start every ``delta_t_s * (1 - overlap_fraction)`` seconds from the
    first message. Windows with no traffic are kept so the time grid stays regular.
    """
    if not messages:
        return []
    msgs = sort_messages(messages)
    starts, dt_ms = slice_grid(msgs[0].time_ms, msgs[-1].time_ms, delta_t_s, overlap_fraction)
    return slice_at(msgs, starts, dt_ms, presorted=True)
