"""Depth and point-cloud quality metrics"""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .depth import DepthMap
from .exceptions import EmptyCloud, EmptyMask, ValidationError

logger = logging.getLogger(__name__)


@dataclass
class L1Report:
    """Mean absolute depth error per level and summed over levels"""

    per_level: List[float]
    pixels: List[int]
    total: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class CloudReport:  # pylint: disable=too-many-instance-attributes
    """Accuracy, completeness and their mean, plus threshold scores"""

    accuracy: float
    completeness: float
    overall: float
    precision: float
    recall: float
    fscore: float
    threshold: float
    dist_cap: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def l1_error(est: Sequence[DepthMap], gt: Sequence[DepthMap]) -> L1Report:
    """Mean L1 depth error over the ground-truth mask of every level

    Maps are paired by position. Pixels whose estimate is not finite are left
    out of the mask.
    """
    if len(est) != len(gt):
        raise ValidationError(f"{len(est)} estimated levels but {len(gt)} ground truth")
    per_level = []
    pixels = []
    for index, (e, g) in enumerate(zip(est, gt)):
        if e.shape != g.shape:
            raise ValidationError(
                f"level {index}: estimate {e.shape} does not match "
                f"ground truth {g.shape}"
            )
        mask = g.valid & np.isfinite(e.depth)
        count = int(mask.sum())
        if count == 0:
            raise EmptyMask(f"level {index}: no valid ground-truth pixels")
        per_level.append(float(np.abs(g.depth[mask] - e.depth[mask]).sum() / count))
        pixels.append(count)
    return L1Report(per_level=per_level, pixels=pixels, total=float(sum(per_level)))


def _as_points(cloud, name: str) -> np.ndarray:
    points = np.asarray(getattr(cloud, "points", cloud), dtype=np.float64)
    points = points.reshape(-1, 3)
    if len(points) == 0:
        raise EmptyCloud(f"{name} cloud is empty")
    return points


def nearest_distances(
    query: np.ndarray, reference: np.ndarray, workers: Optional[int] = None
) -> np.ndarray:
    """Distance from every query point to its nearest reference point"""
    distances, _ = cKDTree(reference).query(query, k=1, workers=workers or 1)
    return distances


def _capped_mean(distances: np.ndarray, dist_cap: float, label: str) -> float:
    inliers = distances[distances <= dist_cap]
    if inliers.size == 0:
        logger.warning("%s: every distance exceeds the cap %g", label, dist_cap)
        return float("nan")
    return float(inliers.mean())


def cloud_metrics(
    est,
    gt,
    dist_cap: float = 20.0,
    threshold: float = 0.5,
    workers: Optional[int] = None,
) -> CloudReport:
    """Accuracy (est to gt) and completeness (gt to est) mean distances

    Distances above ``dist_cap`` are outliers and left out of the means.
    Precision and recall are the fractions of distances within ``threshold``.

    Args:
        est: Estimated ``PointCloud`` or (N, 3) array
        gt: Ground-truth ``PointCloud`` or (N, 3) array
        dist_cap: Outlier distance cap
        threshold: Distance for precision, recall and f-score
        workers: Query threads for the KD-tree
    """
    if dist_cap <= 0 or threshold <= 0:
        raise ValidationError("dist_cap and threshold must be positive")
    est_pts = _as_points(est, "estimated")
    gt_pts = _as_points(gt, "ground-truth")

    to_gt = nearest_distances(est_pts, gt_pts, workers)
    to_est = nearest_distances(gt_pts, est_pts, workers)
    accuracy = _capped_mean(to_gt, dist_cap, "accuracy")
    completeness = _capped_mean(to_est, dist_cap, "completeness")

    precision = float(np.mean(to_gt <= threshold))
    recall = float(np.mean(to_est <= threshold))
    fscore = 0.0
    if precision + recall > 0:
        fscore = 2 * precision * recall / (precision + recall)
    return CloudReport(
        accuracy=accuracy,
        completeness=completeness,
        overall=0.5 * (accuracy + completeness),
        precision=precision,
        recall=recall,
        fscore=fscore,
        threshold=threshold,
        dist_cap=dist_cap,
    )
