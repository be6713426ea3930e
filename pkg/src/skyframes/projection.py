"""Spherical Lambert conformal conic projection and the pixel viewport."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EARTH_RADIUS_M = 6371000.0


class ProjectionDomainError(ValueError):
    pass


@dataclass(frozen=True)
class LccParams:
    ref_lat: float
    ref_lon: float
    std_parallel_1: float
    std_parallel_2: float
    earth_radius_m: float = EARTH_RADIUS_M

    def __post_init__(self):
        for p in (self.std_parallel_1, self.std_parallel_2):
            if not -90.0 < p < 90.0:
                raise ValueError(f"standard parallel {p} outside (-90, 90)")
        if math.isclose(self.std_parallel_1, -self.std_parallel_2, abs_tol=1e-12):
            raise ValueError("standard parallels symmetric about the equator give a degenerate cone")
        if not self.earth_radius_m > 0:
            raise ValueError("earth radius must be positive")
        if not -90.0 < self.ref_lat < 90.0 or not -180.0 <= self.ref_lon <= 180.0:
            raise ValueError("reference point outside valid latitude/longitude range")

    @classmethod
    def around(cls, lat: float, lon: float, spread_deg: float = 0.5,
               earth_radius_m: float = EARTH_RADIUS_M) -> LccParams:
        """Projection centred on (lat, lon) with parallels at lat +/- spread."""
        return cls(lat, lon, lat - spread_deg, lat + spread_deg, earth_radius_m)

    @property
    def cone(self) -> tuple[float, float, float]:
        """(n, R*F, rho0) of the projection."""
        return _cone(self)


_CONE_CACHE: dict[LccParams, tuple[float, float, float]] = {}


def _t(phi):
    return np.tan(np.pi / 4 + phi / 2)


def _cone(p: LccParams) -> tuple[float, float, float]:
    hit = _CONE_CACHE.get(p)
    if hit is not None:
        return hit
    p1, p2 = math.radians(p.std_parallel_1), math.radians(p.std_parallel_2)
    if math.isclose(p1, p2):
        n = math.sin(p1)
    else:
        n = math.log(math.cos(p1) / math.cos(p2)) / math.log(math.tan(math.pi / 4 + p2 / 2) / math.tan(math.pi / 4 + p1 / 2))
    rf = p.earth_radius_m * math.cos(p1) * math.tan(math.pi / 4 + p1 / 2) ** n / n
    rho0 = rf / math.tan(math.pi / 4 + math.radians(p.ref_lat) / 2) ** n
    _CONE_CACHE[p] = (n, rf, rho0)
    return n, rf, rho0


def _wrap(dlon):
    return (dlon + np.pi) % (2 * np.pi) - np.pi


def project(lat, lon, params: LccParams):
    """Geographic degrees -> plane metres, origin at the reference point.

    Accepts scalars or arrays; returns the same kind.
    """
    lat_a = np.asarray(lat, dtype=np.float64)
    lon_a = np.asarray(lon, dtype=np.float64)
    if np.any(np.abs(lat_a) >= 90.0):
        raise ProjectionDomainError("latitude at or beyond a pole cannot be projected")
    n, rf, rho0 = _cone(params)
    rho = rf / _t(np.radians(lat_a)) ** n
    theta = n * _wrap(np.radians(lon_a - params.ref_lon))
    x = rho * np.sin(theta)
    y = rho0 - rho * np.cos(theta)
    if x.ndim == 0:
        return float(x), float(y)
    return x, y


def inverse_project(x, y, params: LccParams):
    """Plane metres -> geographic degrees (inverse of :func:`project`)."""
    x_a = np.asarray(x, dtype=np.float64)
    y_a = np.asarray(y, dtype=np.float64)
    n, rf, rho0 = _cone(params)
    sign = 1.0 if n > 0 else -1.0
    dy = rho0 - y_a
    rho = sign * np.hypot(x_a, dy)
    if np.any(rho == 0.0):
        raise ProjectionDomainError("point at the cone apex has no unique inverse")
    theta = np.arctan2(sign * x_a, sign * dy)
    lat = np.degrees(2.0 * np.arctan((rf / rho) ** (1.0 / n)) - np.pi / 2)
    lon = params.ref_lon + np.degrees(theta / n)
    lon = (lon + 180.0) % 360.0 - 180.0
    if lat.ndim == 0:
        return float(lat), float(lon)
    return lat, lon


def convergence_deg(lon, params: LccParams):
    """Meridian convergence in degrees; true azimuth minus this gives grid azimuth."""
    n, _, _ = _cone(params)
    return np.degrees(n * _wrap(np.radians(np.asarray(lon, dtype=np.float64) - params.ref_lon)))


def scale_factor(lat, params: LccParams):
    """Point scale factor of the spherical projection at latitude ``lat``."""
    n, rf, _ = _cone(params)
    phi = np.radians(np.asarray(lat, dtype=np.float64))
    rho = rf / _t(phi) ** n
    return n * rho / (params.earth_radius_m * np.cos(phi))


@dataclass(frozen=True)
class Viewport:
    width_px: int = 64
    height_px: int = 64
    meters_per_px: float = 1562.5
    origin_x: float = -50000.0
    origin_y: float = 50000.0

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("viewport dimensions must be positive")
        if not self.meters_per_px > 0:
            raise ValueError("meters_per_px must be positive")

    @classmethod
    def centered(cls, half_extent_m: float, size_px: int = 64) -> Viewport:
        return cls(size_px, size_px, 2.0 * half_extent_m / size_px, -half_extent_m, half_extent_m)


def to_pixel(x_m, y_m, viewport: Viewport):
    """Plane metres -> (row, col) fractional pixels; rows grow downward."""
    col = (np.asarray(x_m, dtype=np.float64) - viewport.origin_x) / viewport.meters_per_px
    row = (viewport.origin_y - np.asarray(y_m, dtype=np.float64)) / viewport.meters_per_px
    if row.ndim == 0:
        return float(row), float(col)
    return row, col


def from_pixel(row, col, viewport: Viewport):
    x = viewport.origin_x + np.asarray(col, dtype=np.float64) * viewport.meters_per_px
    y = viewport.origin_y - np.asarray(row, dtype=np.float64) * viewport.meters_per_px
    if x.ndim == 0:
        return float(x), float(y)
    return x, y
