"""Plane-sweep and residual cost volumes, aggregation and probabilities

Costs are per-channel feature variances across views, mean-reduced over the
channels. Views whose warp leaves the image or lands behind the camera are
excluded from the variance; fewer than two contributing views yields the
sentinel cost from ``settings.sentinel_cost``.
"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from .exceptions import InvalidTemperature, ParseError, ValidationError
from .geometry import (
    RANGE_OK,
    CameraView,
    SweepPlane,
    backproject_points,
    depth_interval_for_offset,
    depth_search_ranges,
    homography,
    pixel_grid,
    project_points,
)
from .pipeline_manager import parallel_map
from .pyramid import FeatureMap, sample_features
from .settings import settings

logger = logging.getLogger(__name__)

HYPOTHESIS_KERNEL = np.array([0.25, 0.5, 0.25])
ROW_BLOCK = 16
VOLUME_MAGIC = b"PSCV"
VOLUME_HEADER = struct.Struct("<4sIIIIi")
VOLUME_VERSION = 1


@dataclass(frozen=True, eq=False)
class HypothesisSet:  # pylint: disable=too-many-instance-attributes
    """Depth hypotheses indexing the last axis of a volume

    Absolute sets hold ``count`` plane depths; residual sets hold a per-pixel
    base depth and interval with residual indices ``-count/2 .. count/2-1``.
    """

    kind: str
    count: int
    d_min: float
    d_max: float
    depths: Optional[np.ndarray] = None
    base: Optional[np.ndarray] = None
    interval: Optional[np.ndarray] = None

    @classmethod
    def absolute(cls, d_min: float, d_max: float, count: int) -> "HypothesisSet":
        """Uniform planes ``d_min + m * (d_max - d_min) / count``"""
        if count < 2:
            raise ValidationError(f"at least 2 planes are required, got {count}")
        depths = d_min + np.arange(count) * ((d_max - d_min) / count)
        return cls("absolute", count, d_min, d_max, depths=depths)

    @classmethod
    def residual(
        cls,
        base: np.ndarray,
        interval: np.ndarray,
        count: int,
        d_min: float,
        d_max: float,
    ) -> "HypothesisSet":
        """Per-pixel residual hypotheses around ``base``"""
        if count < 2 or count % 2:
            raise ValidationError(f"residual count must be even and >= 2, got {count}")
        if not np.all(interval > 0):
            raise ValidationError("residual intervals must be positive")
        return cls("residual", count, d_min, d_max, base=base, interval=interval)

    @property
    def offsets(self) -> np.ndarray:
        """Residual indices ``m`` in ascending order"""
        return np.arange(-(self.count // 2), self.count // 2)

    def depth_volume(self, shape: Tuple[int, int]) -> np.ndarray:
        """Hypothesized depth for every (row, col, hypothesis)"""
        if self.kind == "absolute":
            return np.broadcast_to(self.depths, shape + (self.count,))
        return self.base[:, :, None] + self.offsets * self.interval[:, :, None]


@dataclass(frozen=True, eq=False)
class CostVolume:
    """Scalar matching costs with the per-cell count of contributing views"""

    costs: np.ndarray
    valid_views: np.ndarray
    hypotheses: HypothesisSet
    level: int

    @property
    def hypotheses_per_pixel(self) -> int:
        return int(self.costs.shape[2])

    @property
    def cells(self) -> int:
        return int(self.costs.size)


@dataclass(frozen=True, eq=False)
class ProbabilityVolume:
    """Per-pixel distributions over hypotheses

    ``low_confidence`` flags pixels whose hypotheses were all sentinel and
    therefore carry a uniform distribution.
    """

    probs: np.ndarray
    hypotheses: HypothesisSet
    low_confidence: np.ndarray
    level: int


def _variance_costs(
    stack: np.ndarray, valid: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Channel-mean variance over the valid views of a (V, N, F) stack"""
    count = valid.sum(axis=0)
    divisor = np.maximum(count, 1)[:, None]

    total = np.zeros(stack.shape[1:])
    for view in range(stack.shape[0]):
        total += np.where(valid[view][:, None], stack[view], 0.0)
    mean = total / divisor

    squares = np.zeros(stack.shape[1:])
    for view in range(stack.shape[0]):
        diff = stack[view] - mean
        squares += np.where(valid[view][:, None], diff * diff, 0.0)
    cost = (squares / divisor).mean(axis=1)
    cost[count < 2] = settings.sentinel_cost
    return cost, count


def variance_cost(features: Sequence[Tuple[np.ndarray, bool]]) -> Tuple[float, int]:
    """Feature variance across views for one pixel and hypothesis

    Args:
        features: ``(vector, valid)`` pairs, reference view first

    Returns:
        (cost, valid_count)
    """
    if not features:
        raise ValidationError("at least the reference feature is required")
    stack = np.stack([np.asarray(vec, dtype=np.float64) for vec, _ in features])
    valid = np.array([bool(flag) for _, flag in features])
    cost, count = _variance_costs(stack[:, None, :], valid[:, None])
    return float(cost[0]), int(count[0])


def _check_inputs(
    ref_feat: FeatureMap,
    src_feats: Sequence[FeatureMap],
    cams: Sequence[CameraView],
    level: int,
) -> Tuple[CameraView, List[CameraView]]:
    if len(cams) != len(src_feats) + 1:
        raise ValidationError(
            f"expected {len(src_feats) + 1} cameras (reference first), got {len(cams)}"
        )
    if not src_feats:
        raise ValidationError("at least one source view is required")
    ref_l = cams[0].at_level(level)
    for fm, cam in zip([ref_feat, *src_feats], cams):
        cam_l = cam.at_level(level)
        if (fm.height, fm.width) != (cam_l.height, cam_l.width):
            raise ValidationError(
                f"feature map {fm.width}x{fm.height} does not match level {level} "
                f"camera size {cam_l.width}x{cam_l.height}"
            )
        if fm.channels != ref_feat.channels:
            raise ValidationError("all feature maps must have the same channel count")
    return cams[0], list(cams[1:])


def build_coarse_volume(  # pylint: disable=too-many-arguments,too-many-locals
    ref_feat: FeatureMap,
    src_feats: Sequence[FeatureMap],
    cams: Sequence[CameraView],
    planes: int,
    level: int,
    warp: str = "homography",
    workers: Optional[int] = None,
) -> CostVolume:
    """Full sweep over ``planes`` uniform fronto-parallel planes

    ``warp`` selects the plane-induced homography path or the per-pixel
    back-project/project path; both sample the same source locations.
    """
    if warp not in ("homography", "projection"):
        raise ValidationError(f"unknown warp mode '{warp}'")
    ref, srcs = _check_inputs(ref_feat, src_feats, cams, level)
    hypotheses = HypothesisSet.absolute(ref.d_min, ref.d_max, planes)
    height, width = ref_feat.height, ref_feat.width
    grid = pixel_grid(height, width)
    grid_h = np.column_stack([grid, np.ones(len(grid))])
    ref_data = ref_feat.data.reshape(-1, ref_feat.channels)
    ref_l = ref.at_level(level)
    srcs_l = [src.at_level(level) for src in srcs]

    costs = np.empty((height, width, planes))
    counts = np.empty((height, width, planes), dtype=np.uint8)

    def sweep_plane(index: int) -> None:
        depth = float(hypotheses.depths[index])
        stack = [ref_data]
        valids = [np.ones(len(grid), dtype=bool)]
        if warp == "projection":
            points = backproject_points(ref_l, grid, np.full(len(grid), depth))
        for fm, src, src_l in zip(src_feats, srcs, srcs_l):
            if warp == "homography":
                H = homography(ref, src, SweepPlane.fronto_parallel(ref, depth), level)
                warped = grid_h @ H.T
                in_front = warped[:, 2] > settings.eps_depth
                with np.errstate(divide="ignore", invalid="ignore"):
                    w = np.where(in_front, warped[:, 2], np.nan)
                    pixels = warped[:, :2] / w[:, None]
            else:
                pixels, lam, _ = project_points(src_l, points)
                in_front = lam > settings.eps_depth
            feats, inside = sample_features(fm, pixels)
            stack.append(feats)
            valids.append(in_front & inside)
        cost, count = _variance_costs(np.stack(stack), np.stack(valids))
        costs[:, :, index] = cost.reshape(height, width)
        counts[:, :, index] = count.reshape(height, width)

    parallel_map(sweep_plane, range(planes), workers)
    return CostVolume(
        costs=costs, valid_views=counts, hypotheses=hypotheses, level=level
    )


def residual_intervals(  # pylint: disable=too-many-arguments
    ref: CameraView,
    srcs: Sequence[CameraView],
    base: np.ndarray,
    planes: int,
    level: int,
    range_offset_px: float = 2.0,
    sample_offset_px: float = 0.5,
) -> np.ndarray:
    """Per-pixel residual interval ``s_p / planes`` against the first source view

    Pixels with degenerate search ranges fall back to the mean interval for
    ``sample_offset_px``.
    """
    height, width = base.shape
    d_lo, d_hi, reason = depth_search_ranges(
        ref, srcs[0], pixel_grid(height, width), base.ravel(), range_offset_px, level
    )
    span = (d_hi - d_lo).reshape(height, width)
    degenerate = (reason.reshape(height, width) != RANGE_OK) | ~(span > 0)
    if np.any(degenerate):
        fallback = depth_interval_for_offset(ref, list(srcs), level, sample_offset_px)
        logger.warning(
            "level %d: %d of %d pixels use the mean interval %.6g",
            level,
            int(degenerate.sum()),
            degenerate.size,
            fallback,
        )
        span = np.where(degenerate, fallback * planes, span)
    return span / planes


def build_partial_volume(  # pylint: disable=too-many-arguments,too-many-locals
    ref_feat: FeatureMap,
    src_feats: Sequence[FeatureMap],
    cams: Sequence[CameraView],
    base_depth: np.ndarray,
    planes: int,
    level: int,
    range_offset_px: float = 2.0,
    sample_offset_px: float = 0.5,
    workers: Optional[int] = None,
) -> CostVolume:
    """Residual cost volume of ``planes`` hypotheses around an upsampled depth

    Args:
        base_depth: (H, W) upsampled depth at this level's resolution
    """
    if planes < 2 or planes % 2:
        raise ValidationError(f"residual planes must be even and >= 2, got {planes}")
    ref, srcs = _check_inputs(ref_feat, src_feats, cams, level)
    height, width = ref_feat.height, ref_feat.width
    base = np.asarray(base_depth, dtype=np.float64)
    if base.shape != (height, width):
        raise ValidationError(
            f"base depth shape {base.shape} does not match features {(height, width)}"
        )
    mid = 0.5 * (ref.d_min + ref.d_max)
    base = np.clip(np.where(np.isfinite(base), base, mid), ref.d_min, ref.d_max)

    interval = residual_intervals(
        ref, srcs, base, planes, level, range_offset_px, sample_offset_px
    )
    hypotheses = HypothesisSet.residual(base, interval, planes, ref.d_min, ref.d_max)
    offsets = hypotheses.offsets
    ref_l = ref.at_level(level)
    srcs_l = [src.at_level(level) for src in srcs]

    costs = np.empty((height, width, planes))
    counts = np.empty((height, width, planes), dtype=np.uint8)

    def sweep_rows(row0: int) -> None:
        rows = slice(row0, min(row0 + ROW_BLOCK, height))
        block = pixel_grid(rows.stop - rows.start, width)
        block[:, 1] += row0
        ref_data = ref_feat.data[rows].reshape(-1, ref_feat.channels)
        block_base = base[rows].ravel()
        block_interval = interval[rows].ravel()
        for index, m in enumerate(offsets):
            depth = block_base + m * block_interval
            positive = depth > 0
            points = backproject_points(ref_l, block, np.where(positive, depth, 1.0))
            stack = [ref_data]
            valids = [positive]
            for fm, src_l in zip(src_feats, srcs_l):
                pixels, lam, _ = project_points(src_l, points)
                feats, inside = sample_features(fm, pixels)
                stack.append(feats)
                valids.append(positive & (lam > settings.eps_depth) & inside)
            cost, count = _variance_costs(np.stack(stack), np.stack(valids))
            cost[~positive] = settings.sentinel_cost
            count[~positive] = 0
            costs[rows, :, index] = cost.reshape(-1, width)
            counts[rows, :, index] = count.reshape(-1, width)

    parallel_map(sweep_rows, range(0, height, ROW_BLOCK), workers)
    return CostVolume(
        costs=costs, valid_views=counts, hypotheses=hypotheses, level=level
    )


def _normalized_box(values: np.ndarray, live: np.ndarray) -> np.ndarray:
    weights = live.astype(np.float64)
    num = ndimage.uniform_filter(np.where(live, values, 0.0), 3, mode="constant")
    den = ndimage.uniform_filter(weights, 3, mode="constant")
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(live, num / den, values)


def aggregate(cv: CostVolume, workers: Optional[int] = None) -> CostVolume:
    """Separable smoothing that leaves sentinel cells untouched

    Two 3x3 box passes per hypothesis slice, then a [0.25, 0.5, 0.25] pass
    along the hypothesis axis with edge clamping. Each pass renormalizes over
    the non-sentinel taps it covers.
    """
    live = cv.costs < settings.sentinel_cost
    spatial = np.empty_like(cv.costs)

    def smooth_slice(index: int) -> None:
        values = cv.costs[:, :, index]
        mask = live[:, :, index]
        spatial[:, :, index] = _normalized_box(_normalized_box(values, mask), mask)

    parallel_map(smooth_slice, range(cv.costs.shape[2]), workers)

    weights = live.astype(np.float64)
    num = ndimage.correlate1d(
        np.where(live, spatial, 0.0), HYPOTHESIS_KERNEL, axis=2, mode="nearest"
    )
    den = ndimage.correlate1d(weights, HYPOTHESIS_KERNEL, axis=2, mode="nearest")
    with np.errstate(divide="ignore", invalid="ignore"):
        smoothed = np.where(live, num / den, settings.sentinel_cost)
    return CostVolume(
        costs=smoothed,
        valid_views=cv.valid_views,
        hypotheses=cv.hypotheses,
        level=cv.level,
    )


def to_probability(cv: CostVolume, tau: float) -> ProbabilityVolume:
    """Softmax of ``-cost / tau`` along the hypothesis axis

    Sentinel cells get zero probability; all-sentinel pixels get a uniform
    distribution and are flagged low-confidence.
    """
    if not tau > 0:
        raise InvalidTemperature(f"temperature must be positive, got {tau}")
    live = cv.costs < settings.sentinel_cost
    dead = ~live.any(axis=2)
    logits = np.where(live, -cv.costs / tau, -np.inf)
    peak = np.where(dead, 0.0, logits.max(axis=2))
    weights = np.where(live, np.exp(logits - peak[:, :, None]), 0.0)
    total = weights.sum(axis=2, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        probs = weights / total
    probs[dead] = 1.0 / cv.costs.shape[2]
    return ProbabilityVolume(
        probs=probs, hypotheses=cv.hypotheses, low_confidence=dead, level=cv.level
    )


def write_volume(path: Union[str, Path], volume: np.ndarray, level: int) -> None:
    """Dump an (H, W, M) volume as little-endian float32 behind a small header"""
    volume = np.asarray(volume)
    if volume.ndim != 3:
        raise ValidationError(f"expected an (H, W, M) volume, got shape {volume.shape}")
    header = VOLUME_HEADER.pack(VOLUME_MAGIC, VOLUME_VERSION, *volume.shape, level)
    with open(path, "wb") as f:
        f.write(header)
        f.write(volume.astype("<f4").tobytes())


def read_volume(path: Union[str, Path]) -> Tuple[np.ndarray, int]:
    """Load a volume dump, returning ``(volume, level)``"""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < VOLUME_HEADER.size:
        raise ParseError("truncated volume header", path=str(path))
    magic, version, height, width, planes, level = VOLUME_HEADER.unpack_from(raw)
    if magic != VOLUME_MAGIC or version != VOLUME_VERSION:
        raise ParseError("not a pyrsweep volume dump", path=str(path))
    payload = raw[VOLUME_HEADER.size :]
    if len(payload) != 4 * height * width * planes:
        raise ParseError("volume payload size does not match header", path=str(path))
    volume = np.frombuffer(payload, dtype="<f4").reshape(height, width, planes)
    return volume.astype(np.float32), level
