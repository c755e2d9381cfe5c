import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from airtraj.geom import (Polygon2D, TurningConfig, convex_hull, detect_turning_points,
                          estimate_headings, filtered_headings, lowpass, point_in_polygon,
                          points_in_polygon, turning_point_indices, wrap_angle)

from helpers import l_path, line, track

UNIT_SQUARE = Polygon2D([[0, 0], [1, 0], [1, 1], [0, 1]])


@pytest.mark.parametrize("heading, expected", [(0.0, 0.0), (np.pi / 2, np.pi / 2), (np.pi, np.pi)])
def test_headings_along_axes(heading, expected):
    # the stepping is exact on the axes, so compare with a tight tolerance
    raw = estimate_headings(np.round(line(10, heading), 9)).raw
    assert raw.shape == (8,)
    assert np.allclose(raw, expected, atol=1e-12)


def test_west_is_pi_not_minus_pi():
    raw = estimate_headings([[2, 0], [1, 0], [0, 0]]).raw
    assert raw[0] == np.pi


def test_headings_need_three_points():
    with pytest.raises(ValueError):
        estimate_headings([[0, 0], [1, 0]])


def test_coincident_neighbours_carry_heading_forward():
    raw = estimate_headings([[0, 0], [1, 1], [2, 2], [1, 1], [2, 2], [3, 2]]).raw
    assert raw[0] == pytest.approx(np.pi / 4)
    assert raw[1] == pytest.approx(np.pi / 4)  # (1,1) -> (1,1)
    assert raw[2] == pytest.approx(np.pi / 4)  # (2,2) -> (2,2)
    assert estimate_headings([[0, 0], [5, 5], [0, 0]]).raw[0] == 0.0


def test_lowpass_hand_values():
    f = lowpass(np.array([0.0, 0.1, 0.1, 0.1]), 0.4).filtered
    assert f[0] == 0.0
    assert f[1] == pytest.approx(0.04, abs=1e-15)
    assert f[2] == pytest.approx(0.064, abs=1e-15)
    assert f[3] == pytest.approx(0.0784, abs=1e-15)


def test_lowpass_fixed_point_and_identity():
    c = np.full(6, 1.3)
    assert np.allclose(lowpass(c, 0.4).filtered, 1.3)
    raw = np.array([0.1, -0.4, 2.0, 3.0, -3.0])
    assert np.allclose(lowpass(raw, 1.0).filtered, raw)


def test_lowpass_rejects_bad_alpha_and_empty():
    for a in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            lowpass(np.zeros(3), a)
    with pytest.raises(ValueError):
        lowpass(np.zeros(0), 0.4)
    with pytest.raises(ValueError):
        TurningConfig(psi_c=0.0)


def test_lowpass_across_the_seam_does_not_swing_through_zero():
    raw = wrap_angle(np.array([3.1, 3.12, -3.13, -3.11]))
    f = lowpass(raw, 0.4).filtered
    assert np.all(np.abs(f) > 3.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-np.pi, np.pi), min_size=1, max_size=40), st.floats(0.01, 1.0))
def test_lowpass_stays_within_unwrapped_envelope(raw, alpha):
    from airtraj.geom import _filter_unwrapped
    raw = wrap_angle(np.array(raw))
    u = np.unwrap(raw)
    g = _filter_unwrapped(raw, alpha)
    assert np.all(g >= u.min() - 1e-9) and np.all(g <= u.max() + 1e-9)
    assert np.allclose(wrap_angle(g - lowpass(raw, alpha).filtered), 0.0, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(-np.pi, np.pi), st.integers(0, 2**31 - 1))
def test_headings_are_rotation_equivariant(theta, seed):
    xy = np.random.default_rng(seed).normal(size=(12, 2)) * 100
    c, s = np.cos(theta), np.sin(theta)
    rot = xy @ np.array([[c, s], [-s, c]])
    a = estimate_headings(xy).raw
    b = estimate_headings(rot).raw
    assert np.allclose(wrap_angle(b - a - theta), 0.0, atol=1e-9)


def test_filtered_headings_cover_every_point():
    xy = l_path(np.pi / 2)
    f = filtered_headings(xy)
    assert f.shape == (40,)
    assert filtered_headings([[0, 0], [0, 5]]).tolist() == [np.pi / 2] * 2


def test_straight_line_gives_only_first_point():
    assert turning_point_indices(line(40)) == [0]


@pytest.mark.parametrize("angle", [np.pi / 2, -np.pi / 2, np.deg2rad(10), np.deg2rad(170)])
def test_l_path_gives_first_point_and_corner(angle):
    idx = turning_point_indices(l_path(angle))
    assert len(idx) == 2 and idx[0] == 0
    assert 18 <= idx[1] <= 24


def test_run_trimming_keeps_middle_or_first():
    from airtraj.geom import _trim_runs
    flags = np.zeros(12, bool)
    flags[[2, 3, 5, 6, 7, 9]] = True
    assert _trim_runs(flags) == [2, 6, 9]


def _loop_track(jitter=0.0, seed=0):
    # east along y=0, one counter-clockwise loop of radius 3 km tangent at the
    # origin, then east again
    r = 3000.0
    ang = np.linspace(-np.pi / 2, 1.5 * np.pi, 73)[1:-1]
    loop = np.column_stack([r * np.cos(ang), r + r * np.sin(ang)])
    xy = np.vstack([line(25, 0.0, 260, start=(-25 * 260, 0)), loop, line(25, 0.0, 260)])
    xy = xy + np.random.default_rng(seed).normal(0, jitter, xy.shape)
    return xy, r


def test_holding_loop_turning_points_lie_on_the_loop():
    xy, r = _loop_track()
    idx = turning_point_indices(xy)
    assert idx[0] == 0 and len(idx) >= 2
    d = np.hypot(xy[idx[1:], 0], xy[idx[1:], 1] - r)
    assert np.all(np.abs(d - r) < 300)


def test_noisy_loop_gives_several_points_on_the_ring():
    xy, r = _loop_track(jitter=15.0, seed=4)
    idx = turning_point_indices(xy, TurningConfig(psi_c=0.05))
    ring = [i for i in idx[1:] if 25 <= i < 25 + 71]
    assert len(ring) >= 2
    d = np.hypot(xy[ring, 0], xy[ring, 1] - r)
    assert np.all(np.abs(d - r) < 300)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_turning_indices_increase_and_are_not_adjacent(seed):
    xy = np.cumsum(np.random.default_rng(seed).normal(size=(60, 2)) * 50 + [100, 0], axis=0)
    idx = turning_point_indices(xy)
    assert idx[0] == 0
    assert np.all(np.diff(idx) >= 1)
    assert np.all(np.diff(idx[1:]) >= 2)


def test_turning_points_carry_positions():
    f = track(l_path(np.pi / 2), fid="X")
    tps = detect_turning_points(f)
    assert tps[0].flight_id == "X"
    assert tps[1].position == f.point(tps[1].index)


def test_hull_of_square_with_center():
    h = convex_hull([[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]])
    assert h.vertices.shape == (4, 2)
    assert h.area == pytest.approx(1.0)
    assert [0.5, 0.5] not in h.vertices.tolist()


def test_hull_of_triangle_is_ccw():
    h = convex_hull([[0, 0], [0, 1], [1, 0]])
    assert h.vertices.shape == (3, 2) and h.area > 0


def test_hull_errors():
    with pytest.raises(ValueError):
        convex_hull([[0, 0], [1, 1]])
    with pytest.raises(ValueError):
        convex_hull([[0, 0], [1, 1], [2, 2], [3, 3]])
    with pytest.raises(ValueError):
        convex_hull([[1, 1]] * 5)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_hull_of_disk_points_brute_force(seed):
    rng = np.random.default_rng(seed)
    r = np.sqrt(rng.uniform(size=100))
    a = rng.uniform(0, 2 * np.pi, 100)
    pts = np.column_stack([r * np.cos(a), r * np.sin(a)])
    h = convex_hull(pts)
    assert 0 < h.area <= np.pi
    assert points_in_polygon(pts, h).all()
    v = h.vertices
    # every edge has all points on its left (convex, counter-clockwise)
    for i in range(len(v)):
        e = v[(i + 1) % len(v)] - v[i]
        w = pts - v[i]
        assert np.all(e[0] * w[:, 1] - e[1] * w[:, 0] >= -1e-12)
    assert convex_hull(v) == h


def test_point_in_polygon_cases():
    assert point_in_polygon((0.5, 0.5), UNIT_SQUARE)
    assert not point_in_polygon((2, 2), UNIT_SQUARE)
    assert point_in_polygon((1.0, 0.3), UNIT_SQUARE)
    assert point_in_polygon((0.0, 0.0), UNIT_SQUARE)
    assert point_in_polygon((0.5, 1.0), UNIT_SQUARE)
    assert not point_in_polygon((1.0 + 1e-6, 0.5), UNIT_SQUARE)
    assert UNIT_SQUARE.contains((0.2, 0.9))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_vectorised_containment_matches_half_planes(seed):
    rng = np.random.default_rng(seed)
    h = convex_hull(rng.normal(size=(30, 2)))
    q = rng.normal(size=(200, 2)) * 1.5
    v = h.vertices
    e = np.roll(v, -1, axis=0) - v
    cross = e[None, :, 0] * (q[:, None, 1] - v[None, :, 1]) - e[None, :, 1] * (q[:, None, 0] - v[None, :, 0])
    expected = (cross >= 0).all(1)
    got = h.contains_points(q)
    assert np.array_equal(got, expected)


def test_polygon_needs_three_vertices():
    with pytest.raises(ValueError):
        Polygon2D([[0, 0], [1, 1]])
