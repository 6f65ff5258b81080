import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpslam.geometry import (
    Anchor,
    Floorplan,
    GeometryError,
    WallSegment,
    amplitude_from_distance,
    distance_to_line,
    enumerate_vas,
    mirror_point,
    path_length_via_reflection,
    range_aoa,
    range_aoa_batch,
    reflection_visible,
    visible_from,
    wrap_angle,
)

RECT = Floorplan(
    (
        WallSegment((0, 0), (6, 0)),
        WallSegment((6, 0), (6, 4)),
        WallSegment((6, 4), (0, 4)),
        WallSegment((0, 4), (0, 0)),
    )
)

coord = st.floats(-20, 20, allow_nan=False)


def test_mirror_across_vertical_line():
    assert mirror_point((0, 0), WallSegment((5, -1), (5, 1))) == pytest.approx((10.0, 0.0))


def test_point_on_line_is_fixed():
    w = WallSegment((0, 0), (4, 3))
    assert mirror_point((8, 6), w) == pytest.approx((8.0, 6.0))


def test_mirror_oblique_line_frozen():
    # foot of the perpendicular from (1, 2) onto span{(0.8, 0.6)} is (1.6, 1.2)
    w = WallSegment((0, 0), (4, 3))
    r = mirror_point((1, 2), w)
    assert r == pytest.approx((2.2, 0.4), abs=1e-14)
    assert distance_to_line(r, w) == pytest.approx(distance_to_line((1, 2), w))
    mid = ((1 + r[0]) / 2, (2 + r[1]) / 2)
    assert distance_to_line(mid, w) == pytest.approx(0.0, abs=1e-14)


def test_zero_length_wall_rejected():
    with pytest.raises(GeometryError):
        Floorplan((WallSegment((1, 1), (1, 1)),))
    with pytest.raises(GeometryError):
        mirror_point((0, 0), WallSegment((1, 1), (1, 1)))


def test_empty_floorplan_rejected():
    with pytest.raises(GeometryError):
        Floorplan(())


@settings(max_examples=200, deadline=None)
@given(coord, coord, coord, coord, coord, coord)
def test_mirror_invariants(px, py, ax, ay, bx, by):
    if math.hypot(bx - ax, by - ay) < 1e-3:
        return
    w = WallSegment((ax, ay), (bx, by))
    r = mirror_point((px, py), w)
    assert distance_to_line(r, w) == pytest.approx(distance_to_line((px, py), w), abs=1e-9)
    mid = ((px + r[0]) / 2, (py + r[1]) / 2)
    assert distance_to_line(mid, w) == pytest.approx(0.0, abs=1e-9)
    back = mirror_point(r, w)
    assert back == pytest.approx((px, py), abs=1e-9)


def test_rectangle_has_four_first_order_vas():
    vas = enumerate_vas(Anchor(1, (2, 1)), RECT)
    assert [va.wall for va in vas] == [0, 1, 2, 3]
    pos = [tuple(va.position) for va in vas]
    assert pos == [pytest.approx(p) for p in [(2, -1), (10, 1), (2, 7), (-2, 1)]]
    assert all(va.order == 1 and va.parent_anchor == 1 for va in vas)


def test_anchor_on_wall_line_has_no_image_across_it():
    vas = enumerate_vas(Anchor(1, (3, 0)), RECT)
    assert [va.wall for va in vas] == [1, 2, 3]


def test_second_order_images():
    vas = enumerate_vas(Anchor(1, (2, 1)), RECT, max_order=2)
    assert len(vas) == 4 + 4 * 3
    second = [va for va in vas if va.order == 2]
    # floor then right wall: (2, -1) -> (10, -1)
    fr = next(va for va in second if va.path == (0, 1))
    assert tuple(fr.position) == pytest.approx((10.0, -1.0))
    with pytest.raises(ValueError):
        enumerate_vas(Anchor(1, (2, 1)), RECT, max_order=0)


def test_range_aoa_values():
    d, phi = range_aoa((1, 1), 0.0, (1, 3))
    assert d == pytest.approx(2.0)
    assert phi == pytest.approx(math.pi / 2)
    d, phi = range_aoa((0, 0), 0.0, (-1, 0))
    assert phi == pytest.approx(-math.pi)  # wrapped into [-pi, pi)
    d, phi = range_aoa((0, 0), math.pi / 2, (1, 0))
    assert phi == pytest.approx(-math.pi / 2)
    with pytest.raises(GeometryError):
        range_aoa((1, 1), 0.0, (1, 1))


def test_range_aoa_batch_matches_scalar():
    rng = np.random.default_rng(3)
    a = rng.uniform(-5, 5, (50, 2))
    f = rng.uniform(-5, 5, (50, 2))
    d, phi = range_aoa_batch(a, 0.3, f)
    for i in range(50):
        ds, ps = range_aoa(a[i], 0.3, f[i])
        assert d[i] == pytest.approx(ds, abs=1e-12)
        assert phi[i] == pytest.approx(ps, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(st.floats(-1e3, 1e3, allow_nan=False))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi <= w < math.pi
    assert math.cos(w) == pytest.approx(math.cos(a), abs=1e-9)
    assert math.sin(w) == pytest.approx(math.sin(a), abs=1e-9)


def test_wrap_angle_pi_maps_to_minus_pi():
    assert wrap_angle(math.pi) == pytest.approx(-math.pi)


def test_amplitude_from_distance():
    assert amplitude_from_distance(2.0, 30.0) == pytest.approx(15.0)
    with pytest.raises(ValueError):
        amplitude_from_distance(0.0, 30.0)


def test_reflection_visibility_and_path_length():
    anchor = Anchor(1, (2, 1))
    floor_va = enumerate_vas(anchor, RECT)[0]
    agent = (4, 1)
    assert reflection_visible(agent, floor_va, RECT)
    # image-source distance equals unfolded path length
    total = path_length_via_reflection(agent, anchor.position, floor_va, RECT)
    assert total == pytest.approx(math.dist(agent, floor_va.position))
    # a partial wall that the path misses
    short = Floorplan((WallSegment((5, 0), (6, 0)),) + RECT.walls[1:])
    va_short = enumerate_vas(anchor, short)[0]
    assert not reflection_visible(agent, va_short, short)
    assert visible_from(agent, [va_short], short) == []
    with pytest.raises(GeometryError):
        path_length_via_reflection(agent, anchor.position, va_short, short)


def test_second_order_visibility_in_rectangle():
    anchor = Anchor(1, (2, 1))
    vas = enumerate_vas(anchor, RECT, max_order=2)
    va = next(v for v in vas if v.path == (0, 1))
    assert reflection_visible((3, 2), va, RECT)
