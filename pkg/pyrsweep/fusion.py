"""Depth-map filtering by cross-view consistency and fusion into a point cloud"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .depth import DepthMap
from .exceptions import ValidationError
from .geometry import CameraView, backproject_points, project_points
from .pipeline_manager import parallel_map
from .settings import FusionConfig, settings

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class PointCloud:
    """World points with optional 8-bit RGB colors"""

    points: np.ndarray
    colors: Optional[np.ndarray] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise ValidationError("point coordinates must be finite")
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
            if len(self.colors) != len(self.points):
                raise ValidationError(
                    f"{len(self.colors)} colors for {len(self.points)} points"
                )

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def empty(cls, with_colors: bool = False) -> "PointCloud":
        colors = np.zeros((0, 3), dtype=np.uint8) if with_colors else None
        return cls(points=np.zeros((0, 3)), colors=colors)


def sample_depth(D: DepthMap, pixels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Bilinear depth lookup; a sample is usable only if all 4 taps are valid"""
    height, width = D.shape
    u = pixels[:, 0]
    v = pixels[:, 1]
    with np.errstate(invalid="ignore"):
        ok = (u >= 0) & (u <= width - 1) & (v >= 0) & (v <= height - 1)
    u = np.where(ok, u, 0.0)
    v = np.where(ok, v, 0.0)
    u0 = np.minimum(np.floor(u).astype(np.int64), max(width - 2, 0))
    v0 = np.minimum(np.floor(v).astype(np.int64), max(height - 2, 0))
    u1 = np.minimum(u0 + 1, width - 1)
    v1 = np.minimum(v0 + 1, height - 1)
    tu = u - u0
    tv = v - v0

    valid = D.valid
    ok &= valid[v0, u0] & valid[v0, u1] & valid[v1, u0] & valid[v1, u1]
    depth = np.where(D.valid, D.depth, 0.0)
    values = (
        (1 - tu) * (1 - tv) * depth[v0, u0]
        + tu * (1 - tv) * depth[v0, u1]
        + (1 - tu) * tv * depth[v1, u0]
        + tu * tv * depth[v1, u1]
    )
    return values, ok


def _cross_check(  # pylint: disable=too-many-arguments
    cam_i: CameraView,
    pixels: np.ndarray,
    depths: np.ndarray,
    D_j: DepthMap,
    cam_j: CameraView,
    cfg: FusionConfig,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Round trip i -> j -> i for every pixel

    Returns:
        (consistent, reprojected depth in view i, pixel in view j)
    """
    points = backproject_points(cam_i, pixels, depths)
    pix_j, _, visible = project_points(cam_j, points)
    depth_j, found = sample_depth(D_j, np.nan_to_num(pix_j, nan=-1.0))
    ok = visible & found
    back = backproject_points(cam_j, np.nan_to_num(pix_j), np.where(ok, depth_j, 1.0))
    pix_back, lam_back, _ = project_points(cam_i, back)
    with np.errstate(invalid="ignore"):
        reproj = np.linalg.norm(pix_back - pixels, axis=1)
        rel = np.abs(lam_back - depths) / depths
        ok &= (lam_back > settings.eps_depth) & (reproj < cfg.reproj_px_max) & (
            rel < cfg.rel_depth_max
        )
    return ok, lam_back, pix_j


def _pixel_coords(mask: np.ndarray) -> np.ndarray:
    rows, cols = np.nonzero(mask)
    return np.column_stack([cols, rows]).astype(np.float64)


def consistency_filter(
    depths: Sequence[DepthMap],
    cams: Sequence[CameraView],
    cfg: Optional[FusionConfig] = None,
    workers: Optional[int] = None,
) -> List[DepthMap]:
    """Keep confident pixels that agree with enough other views

    A pixel survives when its confidence reaches ``conf_min`` and at least
    ``min_consistent_views - 1`` other views pass the reprojection and
    relative-depth round trip. ``meta["consistent_views"]`` holds the count.
    """
    cfg = (cfg or FusionConfig()).validate()
    if len(depths) != len(cams):
        raise ValidationError(f"{len(depths)} depth maps but {len(cams)} cameras")
    for D, cam in zip(depths, cams):
        if D.shape != (cam.height, cam.width):
            raise ValidationError(
                f"depth map {D.shape} does not match camera {cam.width}x{cam.height}"
            )

    def filter_view(i: int) -> DepthMap:
        D = depths[i]
        candidate = D.valid & (D.confidence >= cfg.conf_min)
        pixels = _pixel_coords(candidate)
        values = D.depth[candidate]
        counts = np.zeros(len(pixels), dtype=np.int64)
        for j, (D_j, cam_j) in enumerate(zip(depths, cams)):
            if j == i or len(pixels) == 0:
                continue
            ok, _, _ = _cross_check(cams[i], pixels, values, D_j, cam_j, cfg)
            counts += ok
        survive = np.zeros(D.shape, dtype=bool)
        survive[candidate] = counts >= cfg.min_consistent_views - 1
        consistent = np.zeros(D.shape, dtype=np.int64)
        consistent[candidate] = counts
        logger.debug(
            "view %d: %d of %d pixels survive", i, int(survive.sum()), survive.size
        )
        return DepthMap(
            depth=D.depth,
            valid=survive,
            confidence=D.confidence,
            level=D.level,
            meta={**D.meta, "consistent_views": consistent},
        )

    return parallel_map(filter_view, range(len(depths)), workers)


def _pixel_colors(image: np.ndarray, pixels: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    rows = pixels[:, 1].astype(np.int64)
    cols = pixels[:, 0].astype(np.int64)
    values = image[rows, cols]
    if values.ndim == 1:
        values = np.repeat(values[:, None], 3, axis=1)
    values = values[:, :3]
    if image.dtype == np.uint8:
        return values
    if image.dtype == np.uint16:
        return np.round(values / 257.0).astype(np.uint8)
    return np.round(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def fuse(
    filtered: Sequence[DepthMap],
    cams: Sequence[CameraView],
    cfg: Optional[FusionConfig] = None,
    images: Optional[Sequence[np.ndarray]] = None,
) -> PointCloud:
    """Back-project surviving pixels, merging matches into one point each

    Views are visited in order. Each unconsumed surviving pixel averages its
    depth with the depths reprojected from consistent views, along its own
    ray, and the matched pixels of those views are consumed.

    Args:
        filtered: Maps from ``consistency_filter``
        cams: Cameras in the same order
        cfg: Thresholds used to re-match pixels across views
        images: Optional reference images for colors; uint8, uint16 or
            float in [0, 1]
    """
    cfg = (cfg or FusionConfig()).validate()
    if len(filtered) != len(cams):
        raise ValidationError(f"{len(filtered)} depth maps but {len(cams)} cameras")
    if images is not None and len(images) != len(cams):
        raise ValidationError(f"{len(images)} images but {len(cams)} cameras")

    consumed = [np.zeros(D.shape, dtype=bool) for D in filtered]
    all_points = []
    all_colors = []
    for i, (D, cam) in enumerate(zip(filtered, cams)):
        mask = D.valid & ~consumed[i]
        pixels = _pixel_coords(mask)
        if len(pixels) == 0:
            continue
        values = D.depth[mask]
        depth_sum = values.copy()
        matches = np.ones(len(pixels))
        for j, (D_j, cam_j) in enumerate(zip(filtered, cams)):
            if j == i:
                continue
            ok, lam_back, pix_j = _cross_check(cam, pixels, values, D_j, cam_j, cfg)
            depth_sum += np.where(ok, lam_back, 0.0)
            matches += ok
            hit = np.round(pix_j[ok]).astype(np.int64)
            height, width = D_j.shape
            inside = (
                (hit[:, 0] >= 0)
                & (hit[:, 0] < width)
                & (hit[:, 1] >= 0)
                & (hit[:, 1] < height)
            )
            hit = hit[inside]
            consumed[j][hit[:, 1], hit[:, 0]] |= D_j.valid[hit[:, 1], hit[:, 0]]
        consumed[i] |= mask
        all_points.append(backproject_points(cam, pixels, depth_sum / matches))
        if images is not None:
            all_colors.append(_pixel_colors(images[i], pixels))

    if not all_points:
        logger.warning("no surviving pixels to fuse")
        return PointCloud.empty(with_colors=images is not None)
    colors = np.concatenate(all_colors) if images is not None else None
    cloud = PointCloud(points=np.concatenate(all_points), colors=colors)
    logger.info("fused %d points from %d views", len(cloud), len(filtered))
    return cloud
