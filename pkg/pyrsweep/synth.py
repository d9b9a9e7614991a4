"""Seeded synthetic scenes with analytic depth, rendered by ray casting

Scenes are textured with a solid value-noise field evaluated at the 3-D hit
point, so every view sees the same surface radiance.
"""

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .dataio import Dataset
from .depth import DepthMap
from .exceptions import NoIntersection, ValidationError
from .geometry import CameraView, pixel_grid, pixel_rays
from .pipeline_manager import parallel_map
from .settings import settings

logger = logging.getLogger(__name__)

SCENE_KINDS = ("plane", "sphere", "heightfield")
LATTICE = 256
MARCH_STEP = 0.01
BISECTION_STEPS = 60
RANGE_MARGIN = 0.1


class ValueNoise:  # pylint: disable=too-few-public-methods
    """Seeded solid value noise in [0, 1] summed over octaves"""

    def __init__(self, seed: int, octaves: int = 4, frequency: float = 3.0):
        if octaves < 1:
            raise ValidationError(f"octaves must be >= 1, got {octaves}")
        rng = np.random.default_rng(seed)
        self.perm = rng.permutation(LATTICE)
        self.values = rng.random(LATTICE)
        self.octaves = octaves
        self.frequency = frequency

    def _hash(self, ix: np.ndarray, iy: np.ndarray, iz: np.ndarray) -> np.ndarray:
        perm = self.perm
        return perm[(perm[(perm[ix & 255] + iy) & 255] + iz) & 255]

    def _octave(self, p: np.ndarray) -> np.ndarray:
        cell = np.floor(p)
        frac = p - cell
        cell = cell.astype(np.int64)
        fade = frac * frac * (3.0 - 2.0 * frac)
        out = np.zeros(len(p))
        for corner in range(8):
            offset = np.array([(corner >> 2) & 1, (corner >> 1) & 1, corner & 1])
            corner_cell = cell + offset
            lattice = self.values[
                self._hash(corner_cell[:, 0], corner_cell[:, 1], corner_cell[:, 2])
            ]
            weight = np.prod(np.where(offset == 1, fade, 1.0 - fade), axis=1)
            out += weight * lattice
        return out

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        total = np.zeros(len(points))
        norm = 0.0
        for octave in range(self.octaves):
            amplitude = 0.5**octave
            scale = self.frequency * 2.0**octave
            total += amplitude * self._octave(points * scale + 17.31 * octave)
            norm += amplitude
        return total / norm


@dataclass
class SceneSpec:  # pylint: disable=too-many-instance-attributes
    """Scene geometry and texture parameters

    Attributes:
        kind: One of plane, sphere or heightfield
        seed: Seeds the texture and the heightfield
        depth: World z of the plane, or of the backdrop behind the sphere
        center: Sphere center
        radius: Sphere radius
        base: Mean world z of the heightfield
        amplitude: Heightfield relief
        octaves: Texture octaves
        frequency: Texture base frequency per scene unit
        relief_frequency: Heightfield relief frequency
        backdrop: Whether a plane at ``depth`` sits behind the sphere
    """

    kind: str = "plane"
    seed: int = 0
    depth: float = 4.0
    center: Tuple[float, float, float] = (0.0, 0.0, 4.0)
    radius: float = 1.0
    base: float = 4.0
    amplitude: float = 0.3
    octaves: int = 4
    frequency: float = 3.0
    relief_frequency: float = 0.6
    backdrop: bool = True

    def __post_init__(self):
        if self.kind not in SCENE_KINDS:
            raise ValidationError(
                f"unknown scene kind '{self.kind}', choose from {SCENE_KINDS}"
            )
        if self.octaves < 3:
            raise ValidationError("textures need at least 3 octaves")
        if self.radius <= 0 or self.amplitude < 0 or self.frequency <= 0:
            raise ValidationError("radius and frequency must be positive")
        self.center = tuple(float(c) for c in self.center)

    @classmethod
    def preset(cls, kind: str, seed: int = 0) -> "SceneSpec":
        """Default scene of a kind, placed around world z = 4"""
        if kind == "sphere":
            return cls(
                kind=kind, seed=seed, depth=5.5, center=(0.0, 0.0, 4.0), radius=1.0
            )
        return cls(kind=kind, seed=seed)

    @property
    def target(self) -> Tuple[float, float, float]:
        """Point the camera ring looks at"""
        if self.kind == "sphere":
            return self.center
        if self.kind == "heightfield":
            return (0.0, 0.0, self.base)
        return (0.0, 0.0, self.depth)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class Scene:
    """Ray caster for a ``SceneSpec``"""

    def __init__(self, spec: SceneSpec):
        self.spec = spec
        self.texture = ValueNoise(spec.seed, spec.octaves, spec.frequency)
        self.relief = ValueNoise(spec.seed + 1, 2, spec.relief_frequency)

    def height(self, xy: np.ndarray) -> np.ndarray:
        """Heightfield surface z at world (x, y)"""
        points = np.column_stack([xy, np.zeros(len(xy))])
        return self.spec.base + self.spec.amplitude * (2.0 * self.relief(points) - 1.0)

    @staticmethod
    def _hit_plane(origin: np.ndarray, rays: np.ndarray, z: float) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (z - origin[2]) / rays[:, 2]
        return np.where(s > settings.eps_depth, s, np.inf)

    def _hit_sphere(self, origin: np.ndarray, rays: np.ndarray) -> np.ndarray:
        center = np.asarray(self.spec.center)
        oc = origin - center
        a = np.einsum("ij,ij->i", rays, rays)
        b = 2.0 * rays @ oc
        c = float(oc @ oc) - self.spec.radius**2
        disc = b * b - 4.0 * a * c
        root = np.sqrt(np.maximum(disc, 0.0))
        near = (-b - root) / (2.0 * a)
        far = (-b + root) / (2.0 * a)
        s = np.where(near > settings.eps_depth, near, far)
        return np.where((disc >= 0) & (s > settings.eps_depth), s, np.inf)

    def _hit_heightfield(self, origin: np.ndarray, rays: np.ndarray) -> np.ndarray:
        spec = self.spec

        def gap(s: np.ndarray, index: np.ndarray) -> np.ndarray:
            pts = origin + s[:, None] * rays[index]
            return pts[:, 2] - self.height(pts[:, :2])

        lo_z = spec.base - spec.amplitude - 0.05
        hi_z = spec.base + spec.amplitude + 0.05
        with np.errstate(divide="ignore", invalid="ignore"):
            start = (lo_z - origin[2]) / rays[:, 2]
            stop = (hi_z - origin[2]) / rays[:, 2]
        usable = (rays[:, 2] > 0) & (start > settings.eps_depth)
        result = np.full(len(rays), np.inf)
        index = np.nonzero(usable)[0]
        lo = start[index]
        limit = stop[index]
        hi = np.full(len(index), np.nan)
        active = np.ones(len(index), dtype=bool)
        s = lo.copy()
        while np.any(active):
            step_s = s + MARCH_STEP
            crossed = active & (gap(step_s, index) >= 0)
            hi[crossed] = step_s[crossed]
            lo[active & ~crossed] = step_s[active & ~crossed]
            s = step_s
            active &= ~crossed & (step_s <= limit)

        found = np.isfinite(hi)
        lo, hi, index = lo[found], hi[found], index[found]
        for _ in range(BISECTION_STEPS):
            mid = 0.5 * (lo + hi)
            above = gap(mid, index) >= 0
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
        result[index] = hi
        return result

    def cast(self, origin: np.ndarray, rays: np.ndarray) -> np.ndarray:
        """Ray parameter of the first hit, ``inf`` on a miss

        With rays of unit camera-frame depth the parameter is the depth.
        """
        spec = self.spec
        if spec.kind == "plane":
            return self._hit_plane(origin, rays, spec.depth)
        if spec.kind == "sphere":
            hit = self._hit_sphere(origin, rays)
            if spec.backdrop:
                hit = np.minimum(hit, self._hit_plane(origin, rays, spec.depth))
            return hit
        return self._hit_heightfield(origin, rays)


def render(
    spec: Union[SceneSpec, Scene], cam: CameraView
) -> Tuple[np.ndarray, DepthMap]:
    """Grayscale image in [0, 1] and ground-truth depth of one camera

    Raises:
        NoIntersection: If no pixel ray hits the scene
    """
    scene = spec if isinstance(spec, Scene) else Scene(spec)
    pixels = pixel_grid(cam.height, cam.width)
    rays = pixel_rays(cam, pixels)
    origin = cam.center
    depth = scene.cast(origin, rays)
    hit = np.isfinite(depth)
    if not np.any(hit):
        raise NoIntersection("no pixel ray intersects the scene")

    image = np.zeros(len(pixels))
    image[hit] = scene.texture(origin + depth[hit, None] * rays[hit])
    depth[~hit] = np.nan
    shape = (cam.height, cam.width)
    gt = DepthMap(depth=depth.reshape(shape), valid=hit.reshape(shape))
    return image.reshape(shape), gt


def look_at(
    center: Sequence[float], target: Sequence[float]
) -> Tuple[np.ndarray, np.ndarray]:
    """World-to-camera (R, t) for a camera at ``center`` facing ``target``

    Image y points along world +y where possible.
    """
    center = np.asarray(center, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - center
    norm = np.linalg.norm(forward)
    if norm == 0:
        raise ValidationError("camera center coincides with its target")
    forward /= norm
    right = np.cross([0.0, 1.0, 0.0], forward)
    if np.linalg.norm(right) < 1e-12:
        raise ValidationError("viewing direction is parallel to the up vector")
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    R = np.stack([right, down, forward])
    return R, -R @ center


def default_intrinsics(
    width: int, height: int, focal: Optional[float] = None
) -> np.ndarray:
    """Square-pixel K with the principal point at the image center"""
    focal = float(width) if focal is None else float(focal)
    return np.array(
        [
            [focal, 0.0, (width - 1) / 2.0],
            [0.0, focal, (height - 1) / 2.0],
            [0.0, 0.0, 1.0],
        ]
    )


def make_camera_ring(  # pylint: disable=too-many-arguments
    count: int,
    radius: float,
    target: Sequence[float] = (0.0, 0.0, 4.0),
    include_center: bool = False,
    width: int = 160,
    height: int = 128,
    focal: Optional[float] = None,
    depth_range: Optional[Tuple[float, float]] = None,
) -> List[CameraView]:
    """Cameras on a circle in the z = 0 plane around the target's (x, y)

    With ``include_center`` a camera at the circle center comes first.
    ``depth_range`` defaults to half to twice the target distance; use
    ``fit_depth_ranges`` to tighten it around a rendered scene.
    """
    if count < 2 and not (include_center and count >= 1):
        raise ValidationError(f"a camera ring needs at least 2 cameras, got {count}")
    if radius <= 0:
        raise ValidationError(f"radius must be positive, got {radius}")
    target = np.asarray(target, dtype=np.float64)
    K = default_intrinsics(width, height, focal)
    centers = []
    if include_center:
        centers.append(np.array([target[0], target[1], 0.0]))
    for k in range(count):
        angle = 2.0 * np.pi * k / count
        x = target[0] + radius * np.cos(angle)
        y = target[1] + radius * np.sin(angle)
        centers.append(np.array([x, y, 0.0]))

    cams = []
    for center in centers:
        R, t = look_at(center, target)
        distance = float(np.linalg.norm(target - center))
        d_min, d_max = depth_range if depth_range else (0.5 * distance, 2.0 * distance)
        cams.append(
            CameraView(
                K=K, R=R, t=t, width=width, height=height, d_min=d_min, d_max=d_max
            )
        )
    return cams


def render_views(
    spec: SceneSpec, cams: Sequence[CameraView], workers: Optional[int] = None
) -> List[Tuple[np.ndarray, DepthMap]]:
    """Render every camera, in order"""
    scene = Scene(spec)
    return parallel_map(lambda cam: render(scene, cam), cams, workers)


def fit_depth_ranges(
    cams: Sequence[CameraView], renders: Sequence[Tuple[np.ndarray, DepthMap]]
) -> List[CameraView]:
    """Give every camera the union of rendered depths with a 10% margin"""
    depths = np.concatenate([gt.depth[gt.valid] for _, gt in renders])
    if depths.size == 0:
        raise NoIntersection("no camera sees the scene")
    lo, hi = float(depths.min()), float(depths.max())
    span = hi - lo if hi > lo else hi
    d_min = max(lo - RANGE_MARGIN * span, 0.5 * lo)
    d_max = hi + RANGE_MARGIN * span
    return [cam.with_depth_range(d_min, d_max) for cam in cams]


def synthesize(  # pylint: disable=too-many-arguments
    spec: SceneSpec,
    count: int = 5,
    radius: float = 0.8,
    width: int = 160,
    height: int = 128,
    workers: Optional[int] = None,
) -> Tuple[List[CameraView], List[np.ndarray], List[DepthMap]]:
    """Center camera plus a ring of ``count - 1``, with fitted depth ranges"""
    if count < 2:
        raise ValidationError(f"at least 2 cameras are required, got {count}")
    cams = make_camera_ring(
        count - 1, radius, spec.target, include_center=True, width=width, height=height
    )
    renders = render_views(spec, cams, workers)
    cams = fit_depth_ranges(cams, renders)
    images = [image for image, _ in renders]
    depths = [gt for _, gt in renders]
    logger.info(
        "rendered %s scene (seed %d) into %d views", spec.kind, spec.seed, count
    )
    return cams, images, depths


def write_scene(
    root: Union[str, Path],
    spec: SceneSpec,
    cams: Sequence[CameraView],
    images: Sequence[np.ndarray],
    depths: Sequence[DepthMap],
) -> Path:
    """Write a scene in the dataset layout read by ``pyrsweep.dataio``"""
    root = Path(root)
    dataset = Dataset.create(root)
    for view_id, (cam, image, gt) in enumerate(zip(cams, images, depths)):
        dataset.save_view(view_id, image, cam, gt)
    dataset.save_pair_list(dataset.nearest_pairs(len(cams) - 1))
    record = {"scene": spec.to_dict(), "cameras": len(cams)}
    text = json.dumps(record, sort_keys=True, indent=2)
    (root / "scene.json").write_text(text + "\n")
    return root
