import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tridoa.geometry import (
    ArrayGeometry,
    Direction,
    cf_map,
    cf_map_many,
    direction_tdoas,
    direction_to_point,
    point_to_direction,
    tdoa_from_geometry,
    tdoas_from_geometry,
)

thetas = st.floats(-math.pi + 1e-9, math.pi - 1e-9)
phis = st.floats(0.0, math.pi / 2 - 1e-6)


def test_geometry_rejects_collinear_and_degenerate():
    with pytest.raises(ValueError):
        ArrayGeometry(0.1, 0.05, 0.0)
    with pytest.raises(ValueError):
        ArrayGeometry(0.0, 0.05, 0.1)
    with pytest.raises(ValueError):
        ArrayGeometry(-0.1, 0.05, 0.1)


def test_spacings():
    g = ArrayGeometry(0.1, 0.05, 0.12)
    assert g.spacings == pytest.approx((0.1, 0.13, 0.13))


@pytest.mark.parametrize("d, p", [
    ((0.0, 0.0), (1.0, 0.0, 0.0)),
    ((math.pi / 2, math.pi / 2), (0.0, 0.0, 1.0)),
])
def test_direction_to_point_axes(d, p):
    assert direction_to_point(d) == pytest.approx(p, abs=1e-15)


def test_direction_to_point_345():
    # cos(phi)=0.6, sin(phi)=0.8, cos(theta)=0.8, sin(theta)=0.6
    theta, phi = math.atan2(0.6, 0.8), math.atan2(0.8, 0.6)
    assert theta == pytest.approx(0.6435, abs=1e-4)
    assert phi == pytest.approx(0.9273, abs=1e-4)
    p = direction_to_point((theta, phi))
    assert p == pytest.approx((0.48, 0.36, 0.8), abs=1e-15)
    back = point_to_direction(p)
    assert abs(back.theta - theta) < 1e-12 and abs(back.phi - phi) < 1e-12


def test_pole_azimuth_is_zero():
    assert point_to_direction((0.0, 0.0, 1.0)) == (0.0, math.pi / 2)


def test_point_below_plane_rejected():
    with pytest.raises(ValueError):
        point_to_direction((0.0, 0.6, -0.8))


@given(thetas, phis)
def test_direction_roundtrip(theta, phi):
    p = direction_to_point((theta, phi))
    assert abs(np.linalg.norm(p) - 1) < 1e-12 and p[2] >= 0
    back = point_to_direction(p)
    assert abs(back.phi - phi) < 1e-12
    assert abs(back.theta - theta) < 1e-9 * max(1.0, 1 / max(math.cos(phi), 1e-3))


def test_tdoa_collinear_case():
    g = ArrayGeometry(0.1, 0.0, 0.1)
    q = tdoa_from_geometry(g, (0.6, 0.0, 0.0))
    assert q.r12 == pytest.approx(0.6 - 0.5, abs=1e-15)


def test_tdoa_far_field_r13():
    g = ArrayGeometry(0.1, 0.05, 0.12)
    q = tdoa_from_geometry(g, (0.0, 100.0, 0.0))
    expected = 100.0 - math.hypot(0.05, 100.0 - 0.12)
    assert q.r13 == pytest.approx(expected, abs=1e-13)
    assert q.r13 == pytest.approx(0.1199875, abs=1e-7)  # ~ c_y for a far source


@given(st.floats(0.01, 1.0))
def test_tdoa_symmetric_array_overhead(h):
    g = ArrayGeometry(0.1, 0.05, 0.1)
    assert abs(tdoa_from_geometry(g, (0.05, 0.0, h)).r12) < 1e-15
    g2 = ArrayGeometry(0.08, 0.04, 0.1)
    assert abs(tdoa_from_geometry(g2, (0.04, 0.3, h)).r12) < 1e-15


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.01, 3))
def test_tdoa_identity_and_bounds(x, y, z):
    g = ArrayGeometry(0.1, 0.05, 0.12)
    q = tdoa_from_geometry(g, (x, y, z))
    assert q.r12 + q.r23 - q.r13 == 0.0
    for r, d in zip(q, g.spacings):
        assert abs(r) <= d + 1e-15


def test_cf_on_axis():
    g = ArrayGeometry(0.1, 0.0, 0.1)
    q = tdoa_from_geometry(g, (100.0, 0.0, 0.0))
    res = cf_map(q.r12, q.r13, g, 100.0)
    d = point_to_direction(res.point)
    assert abs(d.theta) < 1e-9 and abs(d.phi) < 1e-3
    assert not res.inconsistent


def test_cf_roundtrip_37_25():
    g = ArrayGeometry(0.1, 0.05, 0.12)
    truth = Direction.from_degrees(37, 25)
    q = tdoa_from_geometry(g, direction_to_point(truth) * 100.0)
    d = point_to_direction(cf_map(q.r12, q.r13, g, 100.0).point)
    assert abs(d.theta - truth.theta) < 1e-6 and abs(d.phi - truth.phi) < 1e-6


def test_cf_inflated_tdoas_flagged():
    g = ArrayGeometry(0.1, 0.0, 0.1)
    q = tdoa_from_geometry(g, (100.0, 0.0, 0.0))
    res = cf_map(1.2 * q.r12, 1.2 * q.r13, g, 100.0)
    assert res.clamped and res.inconsistent and not res.ok
    assert np.linalg.norm(res.point) == pytest.approx(1.0)
    assert res.point[2] == 0.0


def test_cf_requires_small_r12():
    with pytest.raises(ValueError):
        cf_map(250.0, 0.0, ArrayGeometry(0.1, 0.0, 0.1), 100.0)


def test_cf_random_directions_vectorised_matches_scalar(rng):
    g = ArrayGeometry(0.1, 0.05, 0.12)
    d = np.stack([rng.uniform(-np.pi, np.pi, 50), rng.uniform(0, np.pi / 2, 50)], axis=1)
    q = direction_tdoas(g, d)
    many = cf_map_many(q, g)
    for row, p in zip(q, many):
        assert cf_map(row[0], row[1], g).point == pytest.approx(p, abs=1e-12)


def test_vectorised_tdoas_match_scalar(rng):
    g = ArrayGeometry(0.1, 0.05, 0.12)
    src = rng.normal(size=(20, 3)) * 2
    for s, q in zip(src, tdoas_from_geometry(g, src)):
        assert tuple(q) == tdoa_from_geometry(g, s)
