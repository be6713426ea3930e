import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skyframes.projection import (
    LccParams,
    ProjectionDomainError,
    Viewport,
    inverse_project,
    project,
    scale_factor,
    to_pixel,
)

DUTCH = LccParams(52.3, 4.7, 51.8, 52.8, 6371000.0)
# frozen from the high-precision oracle below
DUTCH_XY = (-13691.336196896603049, -33338.454141809710193)


def snyder_oracle(lat, lon, p: LccParams, dps=40):
    """Textbook spherical LCC evaluated in 40-digit arithmetic, cot/sec form."""
    with mp.workdps(dps):
        r = mp.radians
        p1, p2 = r(p.std_parallel_1), r(p.std_parallel_2)
        phi, phi0 = r(lat), r(p.ref_lat)
        n = mp.log(mp.cos(p1) * mp.sec(p2)) / mp.log(mp.tan(mp.pi / 4 + p2 / 2) * mp.cot(mp.pi / 4 + p1 / 2))
        F = mp.cos(p1) * mp.tan(mp.pi / 4 + p1 / 2) ** n / n
        rho = p.earth_radius_m * F * mp.cot(mp.pi / 4 + phi / 2) ** n
        rho0 = p.earth_radius_m * F * mp.cot(mp.pi / 4 + phi0 / 2) ** n
        th = n * r(lon - p.ref_lon)
        return float(rho * mp.sin(th)), float(rho0 - rho * mp.cos(th))


def test_origin_maps_to_zero():
    x, y = project(DUTCH.ref_lat, DUTCH.ref_lon, DUTCH)
    assert abs(x) < 1e-9 and abs(y) < 1e-9


def test_forward_matches_oracle():
    x, y = project(52.0, 4.5, DUTCH)
    ox, oy = snyder_oracle(52.0, 4.5, DUTCH)
    assert (ox, oy) == pytest.approx(DUTCH_XY, rel=1e-12)
    assert x == pytest.approx(ox, rel=1e-6)
    assert y == pytest.approx(oy, rel=1e-6)


def test_inverse_of_forward_example():
    lat, lon = inverse_project(*DUTCH_XY, DUTCH)
    assert abs(lat - 52.0) < 1e-9 and abs(lon - 4.5) < 1e-9


def test_inverse_origin():
    lat, lon = inverse_project(0.0, 0.0, DUTCH)
    assert lat == pytest.approx(52.3, abs=1e-12) and lon == pytest.approx(4.7, abs=1e-12)


@pytest.mark.parametrize("parallel", [51.8, 52.8])
def test_unit_scale_on_standard_parallels(parallel):
    assert float(scale_factor(parallel, DUTCH)) == pytest.approx(1.0, abs=1e-12)
    # 1 km east-west along the parallel (great-circle length of a short arc)
    dlon = math.degrees(1000.0 / (DUTCH.earth_radius_m * math.cos(math.radians(parallel))))
    x0, y0 = project(parallel, 4.7, DUTCH)
    x1, y1 = project(parallel, 4.7 + dlon, DUTCH)
    chord = 2 * DUTCH.earth_radius_m * math.cos(math.radians(parallel)) * math.sin(math.radians(dlon) / 2)
    assert math.hypot(x1 - x0, y1 - y0) == pytest.approx(chord, rel=1e-6)


def test_roundtrip_1000_points():
    rng = np.random.default_rng(3)
    p = LccParams.around(51.47, -0.45)
    x = rng.uniform(-50000, 50000, 1000)
    y = rng.uniform(-50000, 50000, 1000)
    lat, lon = inverse_project(x, y, p)
    lat2, lon2 = inverse_project(*project(lat, lon, p), p)
    assert np.max(np.abs(lat2 - lat)) < 1e-9
    assert np.max(np.abs(lon2 - lon)) < 1e-9


@settings(max_examples=60, deadline=None)
@given(st.floats(-0.45, 0.45), st.floats(-0.7, 0.7), st.floats(100.0, 2000.0))
def test_small_squares_stay_square(dlat, dlon, side):
    p = LccParams.around(51.47, -0.45)
    lat, lon = 51.47 + dlat, -0.45 + dlon
    x0, y0 = project(lat, lon, p)
    # side metres north and east measured on the sphere
    north = math.degrees(side / p.earth_radius_m)
    east = math.degrees(side / (p.earth_radius_m * math.cos(math.radians(lat))))
    xn, yn = project(lat + north, lon, p)
    xe, ye = project(lat, lon + east, p)
    ratio = math.hypot(xn - x0, yn - y0) / math.hypot(xe - x0, ye - y0)
    assert abs(ratio - 1.0) < 1e-4


def test_pole_is_a_domain_error():
    with pytest.raises(ProjectionDomainError):
        project(-90.0, 0.0, DUTCH)


def test_apex_is_a_domain_error():
    n, rf, rho0 = DUTCH.cone
    with pytest.raises(ProjectionDomainError):
        inverse_project(0.0, rho0, DUTCH)


def test_invalid_params():
    with pytest.raises(ValueError):
        LccParams(0.0, 0.0, 30.0, -30.0)
    with pytest.raises(ValueError):
        LccParams(0.0, 0.0, 90.0, 30.0)
    with pytest.raises(ValueError):
        LccParams(0.0, 0.0, 30.0, 40.0, earth_radius_m=0.0)


def test_single_parallel_tangent_cone():
    p = LccParams(45.0, 0.0, 45.0, 45.0)
    assert p.cone[0] == pytest.approx(math.sin(math.radians(45.0)))
    assert float(scale_factor(45.0, p)) == pytest.approx(1.0)


VIEW = Viewport(64, 64, 1562.5, -50000.0, 50000.0)


def test_center_maps_to_center_pixel():
    assert to_pixel(0.0, 0.0, VIEW) == (32.0, 32.0)


def test_top_left_corner():
    assert to_pixel(-50000.0, 50000.0, VIEW) == (0.0, 0.0)


def test_one_pixel_east():
    assert to_pixel(1562.5, 0.0, VIEW) == (32.0, 33.0)


def test_row_grows_downward():
    r_up, _ = to_pixel(0.0, 1000.0, VIEW)
    assert r_up < 32.0


@settings(max_examples=50)
@given(st.floats(-1e5, 1e5), st.floats(-1e5, 1e5), st.floats(-1e5, 1e5), st.floats(-1e5, 1e5))
def test_to_pixel_is_affine(ax, ay, bx, by):
    ra, ca = to_pixel(ax, ay, VIEW)
    rb, cb = to_pixel(bx, by, VIEW)
    r0, c0 = to_pixel(0.0, 0.0, VIEW)
    rs, cs = to_pixel(ax + bx, ay + by, VIEW)
    assert ra + rb - r0 == pytest.approx(rs, abs=1e-6)
    assert ca + cb - c0 == pytest.approx(cs, abs=1e-6)


def test_viewport_validation():
    with pytest.raises(ValueError):
        Viewport(0, 64, 1.0)
    with pytest.raises(ValueError):
        Viewport(64, 64, 0.0)
