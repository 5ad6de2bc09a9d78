import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monolift import geometry as geo
from monolift.errors import BehindCamera, DegenerateDepth

SIMPLE_P = np.array([[700.0, 0.0, 600.0, 0.0], [0.0, 700.0, 180.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
KITTI_P2 = np.array(
    [
        [7.215377e02, 0.0, 6.095593e02, 4.485728e01],
        [0.0, 7.215377e02, 1.728540e02, 2.163791e-01],
        [0.0, 0.0, 1.0, 2.745884e-03],
    ]
)

angles = st.floats(-50.0, 50.0, allow_nan=False)


def test_rot_y_identity():
    np.testing.assert_array_equal(geo.rot_y(0.0), np.eye(3))


def test_rot_y_quarter_turn():
    np.testing.assert_allclose(geo.rot_y(math.pi / 2) @ [1.0, 0.0, 0.0], [0.0, 0.0, -1.0], atol=1e-15)


def test_rot_y_orthonormal_random():
    rng = np.random.default_rng(0)
    for a in rng.uniform(-10, 10, 1000):
        R = geo.rot_y(a)
        np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-9)
        assert abs(np.linalg.det(R) - 1.0) < 1e-9
        np.testing.assert_allclose(R @ geo.rot_y(-a), np.eye(3), atol=1e-12)


def test_corners_cube():
    pts = geo.corners_at_origin((2.0, 2.0, 2.0)).points
    assert set(pts[:, 0]) == {-1.0, 1.0}
    assert set(pts[:, 2]) == {-1.0, 1.0}
    assert set(pts[:, 1]) == {0.0, -2.0}
    assert len({tuple(p) for p in pts}) == 8


def test_corners_edges_reproduce_dims():
    h, w, l = 1.5, 1.6, 3.9
    pts = geo.corners_at_origin((h, w, l)).points
    # 0-1 runs along width, 1-2 along length, 0-4 is vertical
    assert np.linalg.norm(pts[1] - pts[0]) == pytest.approx(w, rel=1e-9)
    assert np.linalg.norm(pts[2] - pts[1]) == pytest.approx(l, rel=1e-9)
    assert np.linalg.norm(pts[4] - pts[0]) == pytest.approx(h, rel=1e-9)
    np.testing.assert_allclose(pts.mean(axis=0), [0.0, -h / 2, 0.0], atol=1e-15)


def test_corners_min_y_count():
    pts = geo.corners_at_origin((1.7, 0.6, 0.8)).points
    assert np.sum(pts[:, 1] == pts[:, 1].min()) == 4


def test_bottom_ring_counter_clockwise_from_above():
    pts = geo.corners_at_origin((1.0, 2.0, 3.0)).points[:4]
    x, z = pts[:, 0], pts[:, 2]
    assert np.dot(x, np.roll(z, -1)) - np.dot(z, np.roll(x, -1)) > 0
    np.testing.assert_array_equal(pts[:, [0, 2]], geo.corners_at_origin((1.0, 2.0, 3.0)).points[4:, [0, 2]])


def test_transform_identity_and_shift():
    c = geo.corners_at_origin((1.5, 1.6, 3.9))
    np.testing.assert_array_equal(geo.transform_corners(c, 0.0, (0, 0, 0)).points, c.points)
    moved = geo.transform_corners(c, 0.0, (0, 0, 10))
    np.testing.assert_allclose(moved.points - c.points, np.tile([0, 0, 10.0], (8, 1)))
    assert moved.frame == "camera"


def test_transform_round_trip():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(500):
        c = geo.corners_at_origin(rng.uniform(0.3, 5.0, 3))
        a = rng.uniform(-math.pi, math.pi)
        t = rng.uniform(-30, 30, 3)
        back = geo.inverse_transform_corners(geo.transform_corners(c, a, t), a, t)
        worst = max(worst, np.abs(back.points - c.points).max())
    assert worst < 1e-9


def _project_oracle(P, x):
    # plain homogeneous arithmetic, written independently of geometry.project
    rows = [sum(P[i][j] * v for j, v in enumerate([x[0], x[1], x[2], 1.0])) for i in range(3)]
    return rows[0] / rows[2], rows[1] / rows[2]


def test_project_optical_axis():
    np.testing.assert_allclose(geo.project((0.0, 0.0, 7.0), SIMPLE_P), [600.0, 180.0])


def test_project_scale_invariance():
    pt = np.array([1.3, -0.4, 12.0])
    np.testing.assert_allclose(geo.project(pt, SIMPLE_P), geo.project(2 * pt, SIMPLE_P), rtol=1e-12)


def test_project_matches_oracle_kitti():
    rng = np.random.default_rng(2)
    for _ in range(100):
        x = rng.uniform([-20, -2, 2], [20, 3, 80])
        np.testing.assert_allclose(geo.project(x, KITTI_P2), _project_oracle(KITTI_P2.tolist(), x), rtol=1e-12)


@given(st.floats(0.01, 100.0), st.tuples(*[st.floats(-10, 10)] * 2), st.floats(0.5, 50))
def test_project_positive_scaling_property(k, xy, z):
    pt = np.array([xy[0], xy[1], z])
    np.testing.assert_allclose(geo.project(pt, SIMPLE_P), geo.project(k * pt, SIMPLE_P), rtol=1e-9, atol=1e-9)


def test_project_principal_plane():
    with pytest.raises(DegenerateDepth):
        geo.project((1.0, 1.0, 0.0), SIMPLE_P)


def test_projected_bbox_symmetric_on_axis():
    c = geo.transform_corners(geo.corners_at_origin((2.0, 2.0, 2.0)), 0.0, (0.0, 1.0, 10.0))
    b = geo.projected_bbox(c, SIMPLE_P)
    assert 0.5 * (b.x_min + b.x_max) == pytest.approx(600.0)
    assert 0.5 * (b.y_min + b.y_max) == pytest.approx(180.0)


def test_projected_bbox_shrinks_with_depth():
    areas = []
    for z in np.linspace(5, 80, 20):
        b = geo.projected_bbox(geo.box_corners((1.5, 1.6, 3.9), 0.3, (1.0, 1.6, z)), SIMPLE_P)
        areas.append(b.width * b.height)
    assert all(a > b for a, b in zip(areas, areas[1:]))


def test_projected_bbox_behind_camera():
    c = geo.transform_corners(geo.corners_at_origin((2.0, 2.0, 2.0)), 0.0, (0.0, 1.0, 1.0))
    assert c.points[:, 2].min() == 0.0
    with pytest.raises(BehindCamera):
        geo.projected_bbox(c, SIMPLE_P)


def test_ray_angle_on_axis():
    assert geo.ray_angle((580.0, 100.0, 620.0, 200.0), SIMPLE_P) == 0.0


def test_ray_angle_forty_five_degrees():
    # right of the principal point maps to a negative angle (see geometry.ray_angle)
    u = 600.0 + 700.0
    assert geo.ray_angle((u - 5, 100.0, u + 5, 200.0), SIMPLE_P) == pytest.approx(-math.pi / 4)


# A KITTI training label (Pedestrian, frame 000000) with its rectified P2.
KITTI_LABEL = "Pedestrian 0.00 0 -0.20 712.40 143.00 810.73 307.92 1.89 0.48 1.20 1.84 1.47 8.41 0.01"


def test_orientation_convention_matches_kitti_label():
    from monolift.kitti_io import parse_label_line

    r = parse_label_line(KITTI_LABEL)
    theta_loc = -math.atan2(r.location.tx, r.location.tz)
    assert abs(geo.normalize_angle(r.rotation_y - geo.local_to_global(r.alpha, theta_loc))) < 0.12
    theta_box = geo.ray_angle(r.bbox, KITTI_P2)
    assert abs(geo.normalize_angle(r.rotation_y - geo.local_to_global(r.alpha, theta_box))) < 0.12
    # the opposite sign would miss by about twice the ray angle
    assert abs(geo.normalize_angle(r.rotation_y - geo.local_to_global(r.alpha, -theta_box))) > 0.3


def test_local_to_global_examples():
    assert geo.local_to_global(0.5, 0.0) == 0.5
    assert geo.local_to_global(3.0, -1.0) == pytest.approx(4.0 - 2 * math.pi, abs=1e-15)


@given(angles, angles)
def test_local_global_round_trip(a, theta):
    a = geo.normalize_angle(a)
    back = geo.global_to_local(geo.local_to_global(a, theta), theta)
    assert abs(geo.normalize_angle(back - a)) < 1e-12


@given(angles)
def test_normalize_range(a):
    r = geo.normalize_angle(a)
    assert -math.pi < r <= math.pi
    assert math.isclose(math.cos(r), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(r), math.sin(a), abs_tol=1e-9)


def test_normalize_boundaries():
    assert geo.normalize_angle(math.pi) == math.pi
    assert geo.normalize_angle(-math.pi) == math.pi
    arr = geo.normalize_angle(np.array([-math.pi, 0.0, 3 * math.pi]))
    np.testing.assert_allclose(arr, [math.pi, 0.0, math.pi])


def test_iou_2d_examples():
    a = (0.0, 0.0, 1.0, 1.0)
    assert geo.iou_2d(a, a) == 1.0
    assert geo.iou_2d(a, (2.0, 2.0, 3.0, 3.0)) == 0.0
    assert geo.iou_2d(a, (0.5, 0.0, 1.5, 1.0)) == pytest.approx(1 / 3)


boxes = st.tuples(st.floats(-100, 100), st.floats(-100, 100), st.floats(0.1, 100), st.floats(0.1, 100)).map(
    lambda t: (t[0], t[1], t[0] + t[2], t[1] + t[3])
)


@given(boxes, boxes)
def test_iou_2d_properties(a, b):
    v = geo.iou_2d(a, b)
    assert 0.0 <= v <= 1.0
    assert v == pytest.approx(geo.iou_2d(b, a))
    if v == 1.0:
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9)
    assert geo.iou_2d_many(a, np.array([b]))[0] == pytest.approx(v)


def test_decompose_projection_recovers_intrinsics():
    f, cu, cv = 721.5, 609.6, 172.9
    K = np.array([[f, 0, cu], [0, f, cv], [0, 0, 1.0]])
    t = np.array([0.06, -0.0003, 0.0027])
    P = K @ np.hstack([np.eye(3), t[:, None]])
    K2, R2, t2 = geo.decompose_projection(P)
    np.testing.assert_allclose(K2, K, rtol=1e-12)
    np.testing.assert_allclose(R2, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(t2, t, atol=1e-12)


def test_camera_matrix_validation():
    with pytest.raises(ValueError):
        geo.camera_matrix(np.zeros(12))
    with pytest.raises(ValueError):
        geo.camera_matrix([np.nan] + [1.0] * 11)
    assert geo.camera_matrix(KITTI_P2.ravel()).shape == (3, 4)


@settings(max_examples=50)
@given(st.floats(-3.2, 3.2), st.tuples(st.floats(-20, 20), st.floats(0, 3), st.floats(5, 60)))
def test_box_validation_helpers(a, t):
    geo.check_dims((1.0, 2.0, 3.0))
    with pytest.raises(ValueError):
        geo.check_dims((1.0, 0.0, 3.0))
    with pytest.raises(ValueError):
        geo.check_box((5.0, 0.0, 5.0, 1.0))
    c = geo.box_corners((1.5, 1.6, 3.9), a, t)
    np.testing.assert_allclose(c[:4].mean(axis=0), t, atol=1e-9)
