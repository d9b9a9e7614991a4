"""Tests for metrics.py"""

import os
import sys

import numpy as np
import pytest
from scipy.spatial.distance import cdist

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from pyrsweep.depth import DepthMap
from pyrsweep.exceptions import EmptyCloud, EmptyMask, ValidationError
from pyrsweep.fusion import PointCloud
from pyrsweep.metrics import cloud_metrics, l1_error, nearest_distances


def full_map(depth):
    depth = np.asarray(depth, dtype=np.float64)
    return DepthMap(depth, np.ones(depth.shape, dtype=bool))


def grid_cloud(step=0.02):
    xs, ys = np.meshgrid(np.arange(0.0, 1.0, step), np.arange(0.0, 1.0, step))
    return np.column_stack([xs.ravel(), ys.ravel(), np.zeros(xs.size)])


def test_l1_identity_and_offset():
    """Test zero error on identical maps and exactly one for a unit offset"""
    rng = np.random.default_rng(0)
    gt = [full_map(rng.uniform(2, 6, (8, 10))), full_map(rng.uniform(2, 6, (4, 5)))]
    report = l1_error(gt, gt)
    assert report.per_level == [0.0, 0.0]
    assert report.total == 0.0
    assert report.pixels == [80, 20]

    shifted = [full_map(g.depth + 1.0) for g in gt]
    report = l1_error(shifted, gt)
    assert report.per_level == pytest.approx([1.0, 1.0], abs=1e-12)
    assert report.total == pytest.approx(2.0, abs=1e-12)


def test_l1_matches_double_loop():
    """Test random masks and values against a per-pixel loop"""
    rng = np.random.default_rng(1)
    for _ in range(10000):
        h, w = (int(v) for v in rng.integers(1, 9, size=2))
        gt_depth = rng.uniform(1, 10, (h, w))
        gt_valid = rng.random((h, w)) < 0.6
        gt_valid[0, 0] = True
        est_depth = rng.uniform(1, 10, (h, w))
        est_depth[rng.random((h, w)) < 0.1] = np.nan
        est_depth[0, 0] = 5.0
        est = DepthMap(est_depth, np.isfinite(est_depth))
        report = l1_error([est], [DepthMap(gt_depth, gt_valid)])

        total = 0.0
        count = 0
        for r in range(h):
            for c in range(w):
                if gt_valid[r, c] and np.isfinite(est_depth[r, c]):
                    total += abs(gt_depth[r, c] - est_depth[r, c])
                    count += 1
        assert report.pixels == [count]
        assert report.per_level[0] == pytest.approx(total / count, rel=1e-12)


def test_l1_errors():
    """Test empty masks and mismatched inputs"""
    gt = DepthMap(np.ones((3, 3)), np.zeros((3, 3), dtype=bool))
    with pytest.raises(EmptyMask):
        l1_error([full_map(np.ones((3, 3)))], [gt])
    with pytest.raises(ValidationError):
        l1_error([full_map(np.ones((3, 3)))], [])
    with pytest.raises(ValidationError):
        l1_error([full_map(np.ones((3, 3)))], [full_map(np.ones((3, 4)))])


def test_l1_report_to_dict():
    """Test the report serializes to plain values"""
    report = l1_error([full_map(np.full((2, 2), 2.0))], [full_map(np.ones((2, 2)))])
    assert report.to_dict() == {"per_level": [1.0], "pixels": [4], "total": 1.0}


def test_cloud_metrics_identity():
    """Test identical clouds score zero distance and full f-score"""
    pts = grid_cloud()
    report = cloud_metrics(pts, PointCloud(pts))
    assert (report.accuracy, report.completeness, report.overall) == (0.0, 0.0, 0.0)
    assert report.precision == report.recall == report.fscore == 1.0


def test_cloud_metrics_translation():
    """Test a uniform shift shows up as accuracy and completeness"""
    gt = grid_cloud()
    est = gt + np.array([0.0, 0.0, 0.1])
    report = cloud_metrics(est, gt, threshold=0.05)
    assert report.accuracy == pytest.approx(0.1, rel=0.1)
    assert report.completeness == pytest.approx(0.1, rel=0.1)
    assert report.overall == pytest.approx(0.1, rel=0.1)
    assert report.precision == 0.0
    assert report.fscore == 0.0


def test_cloud_metrics_symmetry():
    """Test swapping clouds swaps accuracy and completeness"""
    rng = np.random.default_rng(2)
    a = rng.random((300, 3))
    b = rng.random((200, 3)) + 0.1
    ab = cloud_metrics(a, b)
    ba = cloud_metrics(b, a)
    assert ab.accuracy == ba.completeness
    assert ab.completeness == ba.accuracy
    assert ab.precision == ba.recall


def test_cloud_metrics_caps_outliers():
    """Test distances above the cap are left out of the means"""
    gt = grid_cloud()
    est = np.vstack([gt, [[0.5, 0.5, 100.0]]])
    report = cloud_metrics(est, gt, dist_cap=20.0)
    assert report.accuracy == 0.0
    assert report.precision == pytest.approx(len(gt) / len(est))

    far = cloud_metrics(gt + 50.0, gt, dist_cap=20.0)
    assert np.isnan(far.accuracy)


def test_nearest_distances_match_brute_force():
    """Test the KD-tree agrees with an all-pairs search"""
    rng = np.random.default_rng(3)
    query = rng.random((1000, 3))
    reference = rng.random((1000, 3))
    expected = cdist(query, reference).min(axis=1)
    assert np.allclose(nearest_distances(query, reference), expected, rtol=1e-12, atol=0)
    distances = nearest_distances(query, reference, workers=2)
    assert np.allclose(distances, expected, rtol=1e-12, atol=0)


def test_cloud_metrics_errors():
    """Test empty clouds and bad parameters"""
    pts = grid_cloud()
    with pytest.raises(EmptyCloud):
        cloud_metrics(PointCloud.empty(), pts)
    with pytest.raises(EmptyCloud):
        cloud_metrics(pts, np.zeros((0, 3)))
    with pytest.raises(ValidationError):
        cloud_metrics(pts, pts, dist_cap=0.0)
