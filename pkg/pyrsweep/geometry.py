"""Camera model, plane-induced homographies and epipolar depth constructions

Pose convention is world-to-camera throughout: ``x_cam = R @ X + t``.
Pixel ``(u, v)`` is the center of its cell and intrinsics scale by exactly
``1 / 2**level`` per pyramid level, with no half-pixel correction.
"""

import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import DegenerateDepth, DegenerateGeometry, ValidationError
from .settings import settings

logger = logging.getLogger(__name__)

ROTATION_TOL = 1e-9

# Reason codes returned by depth_search_ranges
RANGE_OK = 0
RANGE_PURE_ROTATION = 1
RANGE_NOT_VISIBLE = 2
RANGE_NEAR_EPIPOLE = 3
RANGE_NO_BRACKET = 4

_RANGE_REASONS = {
    RANGE_PURE_ROTATION: "pure rotation or zero baseline between views",
    RANGE_NOT_VISIBLE: "current 3-D point does not project in front of the source view",
    RANGE_NEAR_EPIPOLE: "pixel lies within the epipole exclusion radius",
    RANGE_NO_BRACKET: "displaced rays do not bracket the current depth",
}


def _frozen_array(value, shape: Tuple[int, ...], name: str) -> np.ndarray:
    arr = np.array(value, dtype=np.float64).reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


def level_size(size: int, level: int) -> int:
    """Image extent at a pyramid level, halving with ceil at every step"""
    for _ in range(level):
        size = (size + 1) // 2
    return size


def rotation_error(R: np.ndarray) -> float:
    """Largest deviation of ``R`` from a proper rotation"""
    R = np.asarray(R, dtype=np.float64)
    ortho = float(np.max(np.abs(R @ R.T - np.eye(3))))
    return max(ortho, abs(float(np.linalg.det(R)) - 1.0))


@dataclass(frozen=True, eq=False)
class CameraView:  # pylint: disable=too-many-instance-attributes
    """Pinhole camera with a world-to-camera pose and a scene depth range

    Attributes:
        K: 3x3 upper-triangular intrinsic matrix in pixels
        R: 3x3 rotation, world to camera
        t: translation, world to camera, scene units
        width: image width in pixels
        height: image height in pixels
        d_min: nearest depth of the viewing frustum
        d_max: farthest depth of the viewing frustum
    """

    K: np.ndarray
    R: np.ndarray
    t: np.ndarray
    width: int
    height: int
    d_min: float
    d_max: float

    def __post_init__(self):
        K = _frozen_array(self.K, (3, 3), "K")
        R = _frozen_array(self.R, (3, 3), "R")
        t = _frozen_array(self.t, (3,), "t")
        if K[1, 0] != 0 or K[2, 0] != 0 or K[2, 1] != 0:
            raise ValidationError("K must be upper-triangular")
        if K[2, 2] != 1:
            raise ValidationError("K must have bottom row (0, 0, 1)")
        if K[0, 0] <= 0 or K[1, 1] <= 0:
            raise ValidationError("K must have positive focal lengths")
        if rotation_error(R) > ROTATION_TOL:
            raise ValidationError("R must be orthonormal with determinant +1")
        if int(self.width) < 1 or int(self.height) < 1:
            raise ValidationError("image size must be positive")
        if not 0 < self.d_min < self.d_max:
            raise ValidationError(
                f"depth range must satisfy 0 < d_min < d_max, got "
                f"({self.d_min}, {self.d_max})"
            )
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "d_min", float(self.d_min))
        object.__setattr__(self, "d_max", float(self.d_max))

    @property
    def center(self) -> np.ndarray:
        """Optical center in world coordinates"""
        return -self.R.T @ self.t

    @property
    def principal_axis(self) -> np.ndarray:
        """Unit viewing direction in world coordinates"""
        return self.R[2].copy()

    def at_level(self, level: int) -> "CameraView":
        """The same camera with intrinsics and image size of a pyramid level"""
        if level == 0:
            return self
        return replace(
            self,
            K=scale_intrinsics(self.K, level),
            width=level_size(self.width, level),
            height=level_size(self.height, level),
        )

    def with_depth_range(self, d_min: float, d_max: float) -> "CameraView":
        """Copy with a different depth range"""
        return replace(self, d_min=d_min, d_max=d_max)


@dataclass(frozen=True, eq=False)
class SweepPlane:
    """Sweep plane at distance ``depth`` from the reference center along ``normal``

    ``normal`` is a world-frame unit vector; fronto-parallel planes use the
    reference principal axis.
    """

    depth: float
    normal: np.ndarray

    def __post_init__(self):
        normal = _frozen_array(self.normal, (3,), "normal")
        if abs(float(np.linalg.norm(normal)) - 1.0) > 1e-9:
            raise ValidationError("plane normal must be a unit vector")
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "depth", float(self.depth))

    @classmethod
    def fronto_parallel(cls, ref: CameraView, depth: float) -> "SweepPlane":
        """Plane at ``depth`` whose normal is the reference principal axis"""
        return cls(depth=depth, normal=ref.principal_axis)


@dataclass(frozen=True, eq=False)
class Projection:
    """Result of projecting a world point; invalid projections carry no values"""

    pixel: Optional[np.ndarray]
    lam: Optional[float]
    valid: bool

    @classmethod
    def invalid(cls) -> "Projection":
        return cls(pixel=None, lam=None, valid=False)


def scale_intrinsics(K: np.ndarray, level: int) -> np.ndarray:
    """Scale focal lengths, skew and principal point by ``1 / 2**level``"""
    if level < 0:
        raise ValidationError(f"level must be >= 0, got {level}")
    scaled = np.array(K, dtype=np.float64, copy=True)
    scaled[:2, :] /= float(2**level)
    return scaled


def homography(
    ref: CameraView, src: CameraView, plane: SweepPlane, level: int = 0
) -> np.ndarray:
    """Plane-induced homography mapping reference pixels to source pixels

    For a reference pixel ``x`` on ``plane``, ``H @ x`` is proportional to the
    source pixel, and its third coordinate equals source depth divided by the
    reference depth of the hit point.
    """
    if not plane.depth > 0:
        raise DegenerateDepth(f"plane depth must be positive, got {plane.depth}")
    K0 = scale_intrinsics(ref.K, level)
    Ki = scale_intrinsics(src.K, level)
    R_rel = src.R @ ref.R.T
    t_rel = src.t - R_rel @ ref.t
    n_cam = ref.R @ plane.normal
    return Ki @ (R_rel + np.outer(t_rel, n_cam) / plane.depth) @ np.linalg.inv(K0)


def pixel_grid(height: int, width: int) -> np.ndarray:
    """(u, v) of every pixel center in row-major order"""
    us, vs = np.meshgrid(
        np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64)
    )
    return np.column_stack([us.ravel(), vs.ravel()])


def pixel_rays(cam: CameraView, pixels: np.ndarray) -> np.ndarray:
    """World-frame ray directions scaled so their camera-frame depth is 1"""
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    homog = np.column_stack([pixels, np.ones(len(pixels))])
    cam_dirs = np.linalg.solve(cam.K, homog.T)
    return (cam.R.T @ cam_dirs).T


def backproject_points(
    cam: CameraView, pixels: np.ndarray, depths: np.ndarray
) -> np.ndarray:
    """Vectorized back-projection of (N, 2) pixels at (N,) depths to world points"""
    depths = np.asarray(depths, dtype=np.float64).reshape(-1)
    return cam.center + pixel_rays(cam, pixels) * depths[:, None]


def project_points(
    cam: CameraView, points: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized projection of (N, 3) world points

    Returns:
        (pixels, lam, valid): pixels are NaN where the depth is not positive
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cam_pts = points @ cam.R.T + cam.t
    lam = cam_pts[:, 2]
    homog = cam_pts @ cam.K.T
    in_front = lam > settings.eps_depth
    with np.errstate(divide="ignore", invalid="ignore"):
        pixels = homog[:, :2] / np.where(in_front, lam, np.nan)[:, None]
    border = settings.border_px
    inside = (
        (pixels[:, 0] >= -border)
        & (pixels[:, 0] <= cam.width - 1 + border)
        & (pixels[:, 1] >= -border)
        & (pixels[:, 1] <= cam.height - 1 + border)
    )
    return pixels, lam, in_front & inside


def backproject(cam: CameraView, pixel: Sequence[float], depth: float) -> np.ndarray:
    """World point at ``depth`` along the visual ray of ``pixel``"""
    if not depth > 0:
        raise DegenerateDepth(f"depth must be positive, got {depth}")
    return backproject_points(cam, np.asarray(pixel, dtype=np.float64), [depth])[0]


def project(cam: CameraView, point: Sequence[float]) -> Projection:
    """Project a world point; behind-camera or off-image points are invalid"""
    pixels, lam, valid = project_points(cam, np.asarray(point, dtype=np.float64))
    if not valid[0]:
        return Projection.invalid()
    return Projection(pixel=pixels[0], lam=float(lam[0]), valid=True)


def _depth_line(
    ref: CameraView, src: CameraView, pixels: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Projective parametrization of reference rays as seen by ``src``

    The reference point at depth ``d`` projects to homogeneous source
    coordinates ``A + d * B``. Returns ``(A, B, rays, w)`` where ``w`` is the
    unnormalized image direction of increasing depth.
    """
    rays = pixel_rays(ref, pixels)
    A = src.K @ (src.R @ ref.center + src.t)
    B = (rays @ src.R.T) @ src.K.T
    w = B[:, :2] * A[2] - A[None, :2] * B[:, 2:3]
    return A, B, rays, w


def depth_interval_for_offset(
    ref: CameraView, srcs: List[CameraView], level: int, offset_px: float
) -> float:
    """Mean depth step that moves source projections by ``offset_px``

    Averages over a 5x5 reference pixel grid and all source views at the
    mid-range depth, stepping away from the reference camera.
    """
    if offset_px <= 0:
        raise ValidationError(f"offset_px must be positive, got {offset_px}")
    if not srcs:
        raise ValidationError("at least one source view is required")
    ref_l = ref.at_level(level)
    us = (np.arange(5) + 0.5) * ref_l.width / 5.0 - 0.5
    vs = (np.arange(5) + 0.5) * ref_l.height / 5.0 - 0.5
    grid = np.stack(np.meshgrid(us, vs), axis=-1).reshape(-1, 2)
    d_mid = 0.5 * (ref.d_min + ref.d_max)

    intervals = []
    for src in srcs:
        A, B, _, w = _depth_line(ref_l, src.at_level(level), grid)
        z = A[2] + d_mid * B[:, 2]
        w_norm = np.linalg.norm(w, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            rate = w_norm / (z * z)
            denom = w_norm - offset_px * z * B[:, 2]
            step = offset_px * z * z / denom
        usable = (
            (z > settings.eps_depth)
            & (rate >= settings.min_epipolar_rate)
            & (denom > 0)
        )
        intervals.append(step[usable])

    values = np.concatenate(intervals)
    if values.size == 0:
        raise DegenerateGeometry(
            "no pixel/view pair moves along an epipolar line (pure rotation?)"
        )
    return float(np.mean(values))


def planes_for_interval(ref: CameraView, interval: float) -> int:
    """Number of uniform planes covering the reference depth range"""
    if interval <= 0:
        raise ValidationError(f"interval must be positive, got {interval}")
    return max(2, int(np.ceil((ref.d_max - ref.d_min) / interval)))


def depth_search_ranges(
    ref: CameraView,
    src: CameraView,
    pixels: np.ndarray,
    depths: np.ndarray,
    offset_px: float = 2.0,
    level: int = 0,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:  # pylint: disable=too-many-locals
    """Vectorized per-pixel residual search ranges

    Each current 3-D point is projected into ``src``, moved ``offset_px``
    both ways along the epipolar line and intersected back with the
    reference ray by the closest point between skew lines.

    Returns:
        (d_lo, d_hi, reason): ranges clamped to the reference depth range and
        a reason code array, ``RANGE_OK`` where the range is usable
    """
    ref_l = ref.at_level(level)
    src_l = src.at_level(level)
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    depths = np.asarray(depths, dtype=np.float64).reshape(-1)
    n = len(depths)
    reason = np.zeros(n, dtype=np.int8)

    A, B, rays, w = _depth_line(ref_l, src_l, pixels)
    z = A[2] + depths * B[:, 2]
    w_norm = np.linalg.norm(w, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = w_norm / (z * z)
        proj = (A[None, :2] + depths[:, None] * B[:, :2]) / z[:, None]
        direction = w / w_norm[:, None]

    reason[~(z > settings.eps_depth)] = RANGE_NOT_VISIBLE
    reason[(reason == RANGE_OK) & ~(rate >= settings.min_epipolar_rate)] = (
        RANGE_PURE_ROTATION
    )
    if abs(A[2]) > settings.eps_depth:
        epipole = A[:2] / A[2]
        near = np.linalg.norm(proj - epipole, axis=1) < settings.epipole_eps_px
        reason[(reason == RANGE_OK) & near] = RANGE_NEAR_EPIPOLE

    ref_center = ref_l.center
    src_center = src_l.center
    w0 = ref_center - src_center
    a = np.einsum("ij,ij->i", rays, rays)
    d = rays @ w0
    bounds = []
    for sign in (1.0, -1.0):
        moved = proj + sign * offset_px * direction
        q = pixel_rays(src_l, np.nan_to_num(moved))
        b = np.einsum("ij,ij->i", rays, q)
        c = np.einsum("ij,ij->i", q, q)
        e = q @ w0
        den = a * c - b * b
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (b * e - c * d) / den
        parallel = ~(den > 1e-12 * a * c)
        reason[(reason == RANGE_OK) & parallel] = RANGE_NO_BRACKET
        bounds.append(s)

    s_lo = np.minimum(bounds[0], bounds[1])
    s_hi = np.maximum(bounds[0], bounds[1])
    bracket = (s_lo < depths) & (depths < s_hi)
    reason[(reason == RANGE_OK) & ~bracket] = RANGE_NO_BRACKET

    d_lo = np.clip(np.nan_to_num(s_lo, nan=ref.d_min), ref.d_min, ref.d_max)
    d_hi = np.clip(np.nan_to_num(s_hi, nan=ref.d_max), ref.d_min, ref.d_max)
    return d_lo, d_hi, reason


def depth_search_range(
    ref: CameraView,
    src: CameraView,
    pixel: Sequence[float],
    d_current: float,
    offset_px: float = 2.0,
    level: int = 0,
) -> Tuple[float, float]:
    """Depth interval whose source projections stay within ``offset_px`` pixels"""
    if not d_current > 0:
        raise DegenerateDepth(f"current depth must be positive, got {d_current}")
    d_lo, d_hi, reason = depth_search_ranges(
        ref, src, np.asarray(pixel, dtype=np.float64), [d_current], offset_px, level
    )
    if reason[0] != RANGE_OK:
        raise DegenerateGeometry(_RANGE_REASONS[int(reason[0])])
    return float(d_lo[0]), float(d_hi[0])
