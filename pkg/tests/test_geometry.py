"""Tests for geometry.py"""

import os
import sys

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from pyrsweep.exceptions import DegenerateDepth, DegenerateGeometry, ValidationError
from pyrsweep.geometry import (
    RANGE_NEAR_EPIPOLE,
    RANGE_OK,
    RANGE_PURE_ROTATION,
    CameraView,
    SweepPlane,
    backproject,
    backproject_points,
    depth_interval_for_offset,
    depth_search_range,
    depth_search_ranges,
    homography,
    level_size,
    pixel_grid,
    planes_for_interval,
    project,
    project_points,
    scale_intrinsics,
)


def make_K(f, cx, cy):
    return np.array([[f, 0.0, cx], [0.0, f, cy], [0.0, 0.0, 1.0]])


def rectified_pair(f=100.0, baseline=1.0, d_min=1.0, d_max=100.0, size=(100, 80)):
    """Reference at the origin and a source shifted by ``baseline`` along x"""
    width, height = size
    K = make_K(f, (width - 1) / 2.0, (height - 1) / 2.0)
    ref = CameraView(K, np.eye(3), np.zeros(3), width, height, d_min, d_max)
    src = CameraView(K, np.eye(3), [-baseline, 0.0, 0.0], width, height, d_min, d_max)
    return ref, src


def general_pair():
    K = make_K(120.0, 80.0, 60.0)
    ref_R = Rotation.from_rotvec([0.02, -0.05, 0.01]).as_matrix()
    ref = CameraView(K, ref_R, [0.1, -0.2, 0.3], 160, 120, 0.5, 50.0)
    src_R = Rotation.from_rotvec([-0.03, 0.08, 0.02]).as_matrix()
    src = CameraView(K, src_R, [-0.5, -0.1, 0.25], 160, 120, 0.5, 50.0)
    return ref, src


def test_scale_intrinsics_examples():
    """Test focal lengths and principal point scale by 1/2^level"""
    K = make_K(100.0, 50.0, 40.0)
    assert np.array_equal(scale_intrinsics(K, 0), K)
    assert np.allclose(scale_intrinsics(K, 1), make_K(50.0, 25.0, 20.0))
    scaled = scale_intrinsics(make_K(320.0, 80.0, 64.0), 2)
    assert np.allclose(scaled, make_K(80.0, 20.0, 16.0))


def test_scale_intrinsics_composes():
    """Test scaling by a then b equals scaling by a + b"""
    K = np.array([[321.0, 0.7, 99.5], [0.0, 317.0, 77.25], [0.0, 0.0, 1.0]])
    assert np.allclose(scale_intrinsics(scale_intrinsics(K, 1), 2), scale_intrinsics(K, 3))
    assert scale_intrinsics(K, 2)[0, 1] == pytest.approx(0.7 / 4)
    assert np.array_equal(scale_intrinsics(K, 3)[2], [0.0, 0.0, 1.0])


def test_scale_intrinsics_negative_level():
    """Test negative levels are rejected"""
    with pytest.raises(ValidationError):
        scale_intrinsics(np.eye(3), -1)


def test_pixel_grid_is_row_major():
    """Test pixel centers run along u first, then v"""
    grid = pixel_grid(2, 3)
    assert grid.shape == (6, 2)
    assert grid.tolist() == [
        [0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 1.0]
    ]


def test_camera_view_validation():
    """Test CameraView rejects bad rotations, depth ranges and intrinsics"""
    K = make_K(100.0, 50.0, 40.0)
    with pytest.raises(ValidationError):
        CameraView(K, np.diag([1.0, 1.0, 1.01]), np.zeros(3), 100, 80, 1.0, 2.0)
    with pytest.raises(ValidationError):
        CameraView(K, np.diag([1.0, -1.0, 1.0]), np.zeros(3), 100, 80, 1.0, 2.0)
    with pytest.raises(ValidationError):
        CameraView(K, np.eye(3), np.zeros(3), 100, 80, 2.0, 2.0)
    with pytest.raises(ValidationError):
        CameraView(make_K(-1.0, 0.0, 0.0), np.eye(3), np.zeros(3), 100, 80, 1.0, 2.0)
    with pytest.raises(ValidationError):
        CameraView(K, np.eye(3), [0.0, np.nan, 0.0], 100, 80, 1.0, 2.0)


def test_camera_view_is_immutable():
    """Test the camera arrays cannot be modified in place"""
    ref, _ = rectified_pair()
    with pytest.raises(ValueError):
        ref.K[0, 0] = 1.0


def test_camera_center_and_level():
    """Test optical center and per-level size"""
    K = make_K(100.0, 50.0, 40.0)
    cam = CameraView(K, np.eye(3), [-1.0, 2.0, 0.5], 101, 81, 1.0, 2.0)
    assert np.allclose(cam.center, [1.0, -2.0, -0.5])
    half = cam.at_level(1)
    assert (half.width, half.height) == (51, 41)
    assert np.allclose(half.K, scale_intrinsics(K, 1))
    assert cam.at_level(0) is cam
    assert level_size(5, 1) == 3
    assert level_size(1600, 4) == 100


def test_homography_identity_for_same_camera():
    """Test H is the identity up to scale when the source is the reference"""
    ref, _ = general_pair()
    for depth in (0.7, 3.0, 40.0):
        H = homography(ref, ref, SweepPlane.fronto_parallel(ref, depth))
        assert np.allclose(H / H[2, 2], np.eye(3), atol=1e-12)


def test_homography_rectified_disparity():
    """Test a rectified pair shifts pixels by -f*b/d along u"""
    ref, src = rectified_pair(f=100.0, baseline=0.5)
    depth = 4.0
    H = homography(ref, src, SweepPlane.fronto_parallel(ref, depth))
    for u, v in [(10.0, 20.0), (55.5, 3.25), (90.0, 70.0)]:
        x = H @ np.array([u, v, 1.0])
        assert x[0] / x[2] == pytest.approx(u - 100.0 * 0.5 / depth, abs=1e-9)
        assert x[1] / x[2] == pytest.approx(v, abs=1e-9)


@pytest.mark.parametrize("level", [0, 1, 2])
def test_homography_matches_projection(level):
    """Test the homography and back-project/project paths agree"""
    ref, src = general_pair()
    rng = np.random.default_rng(7 + level)
    ref_l = ref.at_level(level)
    src_l = src.at_level(level)
    for _ in range(20):
        pixel = rng.uniform([0, 0], [ref_l.width - 1, ref_l.height - 1])
        depth = float(rng.uniform(ref.d_min, ref.d_max))
        H = homography(ref, src, SweepPlane.fronto_parallel(ref, depth), level)
        x = H @ np.array([pixel[0], pixel[1], 1.0])
        point = backproject_points(ref_l, pixel, [depth])
        pixels, lam, _ = project_points(src_l, point)
        assert np.allclose(x[:2] / x[2], pixels[0], atol=1e-6)
        assert x[2] == pytest.approx(lam[0] / depth, rel=1e-9)


def random_camera(rng, origin=(0.0, 0.0, 0.0)):
    f = float(rng.uniform(80.0, 400.0))
    width, height = (int(v) for v in rng.integers(32, 321, size=2))
    K = np.array([
        [f, float(rng.uniform(-1.0, 1.0)), float(rng.uniform(0.3, 0.7)) * width],
        [0.0, f * float(rng.uniform(0.9, 1.1)), float(rng.uniform(0.3, 0.7)) * height],
        [0.0, 0.0, 1.0],
    ])
    R = Rotation.from_rotvec(rng.normal(scale=0.15, size=3)).as_matrix()
    center = np.asarray(origin) + rng.uniform(-0.5, 0.5, 3)
    return CameraView(K, R, -R @ center, width, height, 1.0, 20.0)


def test_homography_matches_projection_on_random_cameras():
    """Test 1,000 random camera pairs, pixels and plane depths"""
    rng = np.random.default_rng(17)
    checked = 0
    while checked < 1000:
        ref = random_camera(rng)
        src = random_camera(rng, ref.center)
        level = int(rng.integers(0, 3))
        ref_l, src_l = ref.at_level(level), src.at_level(level)
        pixel = rng.uniform([0, 0], [ref_l.width - 1, ref_l.height - 1])
        depth = float(rng.uniform(1.0, 20.0))

        point = backproject_points(ref_l, pixel, [depth])
        pixels, lam, _ = project_points(src_l, point)
        if lam[0] < 0.1 * depth:
            continue
        H = homography(ref, src, SweepPlane.fronto_parallel(ref, depth), level)
        x = H @ np.array([pixel[0], pixel[1], 1.0])
        assert np.max(np.abs(x[:2] / x[2] - pixels[0])) < 1e-6
        assert abs(x[2] - lam[0] / depth) <= 1e-9 * (lam[0] / depth)

        back, ref_lam, _ = project_points(ref_l, point)
        assert np.max(np.abs(back[0] - pixel)) < 1e-9
        assert abs(ref_lam[0] - depth) < 1e-9 * depth
        checked += 1


def test_homography_rejects_nonpositive_depth():
    """Test DegenerateDepth for planes at or behind the reference center"""
    ref, src = rectified_pair()
    with pytest.raises(DegenerateDepth):
        homography(ref, src, SweepPlane.fronto_parallel(ref, 0.0))


def test_sweep_plane_requires_unit_normal():
    """Test plane normals must be unit vectors"""
    with pytest.raises(ValidationError):
        SweepPlane(2.0, [0.0, 0.0, 2.0])


def test_backproject_examples():
    """Test back-projection with the canonical camera"""
    cam = CameraView(np.eye(3), np.eye(3), np.zeros(3), 10, 10, 0.5, 10.0)
    assert np.allclose(backproject(cam, (0.0, 0.0), 1.0), [0.0, 0.0, 1.0])
    assert np.allclose(backproject(cam, (2.0, 3.0), 2.0), [4.0, 6.0, 2.0])
    with pytest.raises(DegenerateDepth):
        backproject(cam, (1.0, 1.0), 0.0)


def test_project_examples():
    """Test on-axis and behind-camera projections"""
    cam = CameraView(np.eye(3), np.eye(3), np.zeros(3), 10, 10, 0.5, 10.0)
    proj = project(cam, (0.0, 0.0, 5.0))
    assert proj.valid
    assert np.allclose(proj.pixel, [0.0, 0.0])
    assert proj.lam == 5.0

    behind = project(cam, (0.0, 0.0, -1.0))
    assert not behind.valid
    assert behind.pixel is None and behind.lam is None


def test_project_border_rule():
    """Test projections may leave the pixel grid by half a pixel only"""
    cam = CameraView(np.eye(3), np.eye(3), np.zeros(3), 10, 10, 0.5, 10.0)
    assert project(cam, (-0.4, 0.0, 1.0)).valid
    assert not project(cam, (-0.6, 0.0, 1.0)).valid
    assert project(cam, (9.4, 9.4, 1.0)).valid
    assert not project(cam, (9.6, 0.0, 1.0)).valid


def test_backproject_project_round_trip():
    """Test project(backproject(x, d)) returns x and d"""
    _, cam = general_pair()
    rng = np.random.default_rng(3)
    for _ in range(50):
        pixel = rng.uniform([0, 0], [cam.width - 1, cam.height - 1])
        depth = float(rng.uniform(0.5, 50.0))
        proj = project(cam, backproject(cam, pixel, depth))
        assert proj.valid
        assert np.allclose(proj.pixel, pixel, atol=1e-6)
        assert proj.lam == pytest.approx(depth, rel=1e-9)


def test_depth_interval_rectified_oracle():
    """Test the mean interval matches the disparity formula"""
    ref, src = rectified_pair(f=100.0, baseline=1.0, d_min=5.0, d_max=15.0)
    interval = depth_interval_for_offset(ref, [src], 0, 0.5)
    assert interval == pytest.approx(0.5 * 100.0 / (100.0 - 0.5 * 10.0), rel=1e-9)


def test_depth_interval_scales_with_offset():
    """Test doubling the offset doubles the interval to first order"""
    ref, src = rectified_pair(f=1000.0, baseline=1.0, d_min=5.0, d_max=15.0, size=(1000, 800))
    half = depth_interval_for_offset(ref, [src], 0, 0.5)
    full = depth_interval_for_offset(ref, [src], 0, 1.0)
    assert full / half == pytest.approx(2.0, rel=0.01)


def test_depth_interval_identical_views():
    """Test a zero-baseline pair is degenerate"""
    ref, _ = rectified_pair()
    with pytest.raises(DegenerateGeometry):
        depth_interval_for_offset(ref, [ref], 0, 0.5)


def test_depth_interval_argument_checks():
    """Test offset and source list validation"""
    ref, src = rectified_pair()
    with pytest.raises(ValidationError):
        depth_interval_for_offset(ref, [src], 0, 0.0)
    with pytest.raises(ValidationError):
        depth_interval_for_offset(ref, [], 0, 0.5)


def test_planes_for_interval():
    """Test the plane count covers the depth range"""
    ref, _ = rectified_pair(d_min=2.0, d_max=6.0)
    assert planes_for_interval(ref, 0.5) == 8
    assert planes_for_interval(ref, 0.3) == 14
    assert planes_for_interval(ref, 100.0) == 2


def test_depth_search_range_rectified_oracle():
    """Test +-2 px at disparity 10 brackets 100/12 .. 100/8"""
    ref, src = rectified_pair(f=100.0, baseline=1.0)
    d_lo, d_hi = depth_search_range(ref, src, (50.0, 40.0), 10.0, 2.0)
    assert d_lo == pytest.approx(100.0 / 12.0, rel=1e-9)
    assert d_hi == pytest.approx(12.5, rel=1e-9)


def test_depth_search_range_collapses():
    """Test a vanishing offset collapses the range onto the current depth"""
    ref, src = rectified_pair(f=100.0, baseline=1.0)
    d_lo, d_hi = depth_search_range(ref, src, (50.0, 40.0), 10.0, 1e-8)
    assert d_lo < 10.0 < d_hi
    assert d_hi - d_lo < 1e-6


def test_depth_search_range_contains_and_is_monotone():
    """Test ranges contain the current depth and grow with the offset"""
    ref, src = general_pair()
    rng = np.random.default_rng(11)
    for _ in range(20):
        pixel = rng.uniform([20, 20], [140, 100])
        depth = float(rng.uniform(2.0, 8.0))
        previous = None
        for offset in (0.5, 1.0, 2.0):
            d_lo, d_hi = depth_search_range(ref, src, pixel, depth, offset)
            assert d_lo < depth < d_hi
            if previous is not None:
                assert d_lo <= previous[0] and d_hi >= previous[1]
            previous = (d_lo, d_hi)


def test_depth_search_range_clamps():
    """Test ranges are clamped to the reference depth range"""
    ref, src = rectified_pair(f=100.0, baseline=1.0, d_min=9.0, d_max=11.0)
    assert depth_search_range(ref, src, (50.0, 40.0), 10.0, 2.0) == (9.0, 11.0)


def test_depth_search_range_degenerate_pairs():
    """Test zero baseline and epipole proximity raise DegenerateGeometry"""
    ref, _ = rectified_pair()
    with pytest.raises(DegenerateGeometry):
        depth_search_range(ref, ref, (50.0, 40.0), 10.0)

    forward = CameraView(ref.K, np.eye(3), [0.0, 0.0, -1.0], ref.width, ref.height, 1.0, 100.0)
    with pytest.raises(DegenerateGeometry):
        depth_search_range(ref, forward, (ref.K[0, 2], ref.K[1, 2]), 10.0)
    with pytest.raises(DegenerateDepth):
        depth_search_range(ref, forward, (10.0, 10.0), 0.0)


def test_depth_search_ranges_reason_codes():
    """Test the vectorized form reports why a pixel is degenerate"""
    ref, _ = rectified_pair()
    forward = CameraView(ref.K, np.eye(3), [0.0, 0.0, -1.0], ref.width, ref.height, 1.0, 100.0)
    cx, cy = ref.K[0, 2], ref.K[1, 2]
    pixels = np.array([[cx + 1.0, cy], [10.0, 10.0]])
    _, _, reason = depth_search_ranges(ref, forward, pixels, [10.0, 10.0])
    assert reason[0] == RANGE_NEAR_EPIPOLE
    assert reason[1] == RANGE_OK

    _, _, reason = depth_search_ranges(ref, ref, pixels, [10.0, 10.0])
    assert np.all(reason == RANGE_PURE_ROTATION)
