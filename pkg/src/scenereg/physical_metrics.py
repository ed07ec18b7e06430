"""
Physical plausibility of posed object sets

Contact is the surface of an object lying within a small distance of, and
facing, another object. Penetration is the surface of an object lying
inside another one: a dilated solid voxelization of the other object is the
broad phase, exact parity and on-surface tests are the narrow phase. Both
are estimated from area-weighted surface samples.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import permutations
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import binary_dilation

from .config import ContactConfig
from .errors import NoValidPixels
from .geometry.bvh import MeshBVH
from .geometry.mesh import SurfaceSamples, TriangleMesh, sample_by_density
from .geometry.render import Camera, SceneRenderer
from .geometry.voxel import VoxelGrid, voxelize_solid
from .pose import Sim3Transform
from .rng import child_seed

logger = logging.getLogger(__name__)

SceneObjects = Sequence[Tuple[TriangleMesh, Sim3Transform]]


class PosedBody:
    """One posed object with its samples and lazily built query structures"""

    def __init__(self, mesh: TriangleMesh, pose: Sim3Transform, density: float, seed):
        self.mesh = mesh.transformed(pose)
        self.samples: SurfaceSamples = sample_by_density(mesh, density * pose.sigma**2, seed).transformed(pose)
        self.lo, self.hi = self.mesh.bounds
        self._bvh: Optional[MeshBVH] = None
        self._solid = {}

    @property
    def bvh(self) -> MeshBVH:
        if self._bvh is None:
            self._bvh = MeshBVH(self.mesh)
        return self._bvh

    def dilated_solid(self, voxel_size: float) -> VoxelGrid:
        if voxel_size not in self._solid:
            grid = voxelize_solid(self.bvh, voxel_size, padding=1)
            self._solid[voxel_size] = grid.with_occupancy(binary_dilation(grid.occupancy))
        return self._solid[voxel_size]

    def near_box(self, points: np.ndarray, margin: float) -> np.ndarray:
        return np.all((points >= self.lo - margin) & (points <= self.hi + margin), axis=1)


def _bodies(scene: SceneObjects, density: float, seed: int) -> List[PosedBody]:
    return [PosedBody(mesh, pose, density, child_seed(seed, i)) for i, (mesh, pose) in enumerate(scene)]


def contact_mask(a: PosedBody, b: PosedBody, cfg: ContactConfig) -> np.ndarray:
    mask = np.zeros(len(a.samples), dtype=bool)
    candidates = np.flatnonzero(b.near_box(a.samples.points, cfg.threshold))
    if len(candidates) == 0:
        return mask
    closest = b.bvh.closest_points(a.samples.points[candidates])
    facing = np.einsum("ij,ij->i", a.samples.normals[candidates], b.mesh.face_normals[closest.face_ids])
    mask[candidates] = (closest.distances <= cfg.threshold) & (facing <= -cfg.facing_cosine)
    return mask


def penetration_mask(a: PosedBody, b: PosedBody, cfg: ContactConfig) -> np.ndarray:
    mask = np.zeros(len(a.samples), dtype=bool)
    margin = cfg.voxel_size + cfg.surface_tolerance
    boxed = np.flatnonzero(b.near_box(a.samples.points, margin))
    if len(boxed) == 0:
        return mask
    candidates = boxed[b.dilated_solid(cfg.voxel_size).lookup(a.samples.points[boxed])]
    if len(candidates) == 0:
        return mask
    points = a.samples.points[candidates]
    closest = b.bvh.closest_points(points)
    on_surface = closest.distances <= cfg.surface_tolerance
    aligned = np.einsum("ij,ij->i", a.samples.normals[candidates], b.mesh.face_normals[closest.face_ids]) > 0
    inside = np.zeros(len(candidates), dtype=bool)
    off_surface = ~on_surface
    if np.any(off_surface):
        inside[off_surface] = b.bvh.points_inside(points[off_surface])
    mask[candidates] = inside | (on_surface & aligned)
    return mask


@dataclass
class PairMeasure:
    i: int
    j: int
    contact: float
    penetration: float

    def to_dict(self) -> dict:
        return {"i": self.i, "j": self.j, "contact_mm2": self.contact, "penetration_mm2": self.penetration}


@dataclass
class AreaBreakdown:
    """Per-object, per-pair and total area of one measure"""

    total: float
    per_object: List[float]
    per_pair: List[Tuple[int, int, float]]


@dataclass
class ContactReport:
    contact_area: float
    penetration_area: float
    ratio: Optional[float]
    per_pair: List[PairMeasure] = field(default_factory=list)
    per_object_contact: List[float] = field(default_factory=list)
    per_object_penetration: List[float] = field(default_factory=list)
    threshold: float = 2.5
    voxel_size: float = 1.0

    @property
    def ratio_defined(self) -> bool:
        return self.ratio is not None

    def to_dict(self) -> dict:
        return {
            "contact_area_mm2": self.contact_area,
            "penetration_area_mm2": self.penetration_area,
            "ratio": self.ratio,
            "ratio_defined": self.ratio_defined,
            "pair_contact_sum_mm2": float(sum(p.contact for p in self.per_pair)),
            "per_pair": [p.to_dict() for p in self.per_pair],
            "per_object_contact_mm2": list(self.per_object_contact),
            "per_object_penetration_mm2": list(self.per_object_penetration),
            "threshold_mm": self.threshold,
            "voxel_size_mm": self.voxel_size,
        }


def _measure(bodies: List[PosedBody], mask_fn, cfg: ContactConfig, threads: int) -> AreaBreakdown:
    """Evaluate ``mask_fn`` over every ordered pair and reduce in index order"""
    ordered = list(permutations(range(len(bodies)), 2))

    def run(pair):
        i, j = pair
        return mask_fn(bodies[i], bodies[j], cfg)

    if threads > 1 and len(ordered) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            masks = list(pool.map(run, ordered))
    else:
        masks = [run(pair) for pair in ordered]

    directed = {}
    union = [np.zeros(len(body.samples), dtype=bool) for body in bodies]
    for (i, j), mask in zip(ordered, masks):
        directed[i, j] = float(bodies[i].samples.weights[mask].sum())
        union[i] |= mask
    per_object = [float(body.samples.weights[m].sum()) for body, m in zip(bodies, union)]
    per_pair = [
        (i, j, directed[i, j] + directed[j, i]) for i in range(len(bodies)) for j in range(i + 1, len(bodies))
    ]
    return AreaBreakdown(float(sum(per_object)), per_object, per_pair)


def _config(cfg: Optional[ContactConfig], **overrides) -> ContactConfig:
    cfg = cfg or ContactConfig()
    update = {k: v for k, v in overrides.items() if v is not None}
    return cfg.model_copy(update=update) if update else cfg


def contact_area(
    scene: SceneObjects,
    threshold: Optional[float] = None,
    samples_per_mm2: Optional[float] = None,
    cfg: Optional[ContactConfig] = None,
    threads: int = 1,
) -> AreaBreakdown:
    """
    Surface area of each object lying within ``threshold`` of, and facing, another object

    The total counts each object's surface once even when it touches
    several neighbours; per-pair values sum both directions.
    """
    cfg = _config(cfg, threshold=threshold, samples_per_mm2=samples_per_mm2)
    return _measure(_bodies(scene, cfg.samples_per_mm2, cfg.seed), contact_mask, cfg, threads)


def penetration_area(
    scene: SceneObjects,
    voxel_size: Optional[float] = None,
    samples_per_mm2: Optional[float] = None,
    cfg: Optional[ContactConfig] = None,
    threads: int = 1,
) -> AreaBreakdown:
    """Surface area of each object lying inside another object"""
    cfg = _config(cfg, voxel_size=voxel_size, samples_per_mm2=samples_per_mm2)
    return _measure(_bodies(scene, cfg.samples_per_mm2, cfg.seed), penetration_mask, cfg, threads)


def contact_report(scene: SceneObjects, cfg: Optional[ContactConfig] = None, threads: int = 1) -> ContactReport:
    """Contact and penetration areas with their ratio; the ratio is None without contact"""
    cfg = cfg or ContactConfig()
    bodies = _bodies(scene, cfg.samples_per_mm2, cfg.seed)
    contact = _measure(bodies, contact_mask, cfg, threads)
    penetration = _measure(bodies, penetration_mask, cfg, threads)
    ratio = penetration.total / contact.total if contact.total > 0 else None
    if ratio is None:
        logger.warning("No contact between objects; penetration ratio is undefined")
    pairs = [
        PairMeasure(i, j, c, p) for (i, j, c), (_, _, p) in zip(contact.per_pair, penetration.per_pair)
    ]
    return ContactReport(
        contact_area=contact.total,
        penetration_area=penetration.total,
        ratio=ratio,
        per_pair=pairs,
        per_object_contact=contact.per_object,
        per_object_penetration=penetration.per_object,
        threshold=cfg.threshold,
        voxel_size=cfg.voxel_size,
    )


# Depth ---------------------------------------------------------------------


@dataclass
class DepthErrorStats:
    mean_abs: float
    median_abs: float
    std: float
    pixel_count: int

    def to_dict(self) -> dict:
        return {
            "mean_abs_mm": self.mean_abs,
            "median_abs_mm": self.median_abs,
            "std_mm": self.std,
            "pixel_count": self.pixel_count,
        }


def depth_residuals(
    registered: SceneObjects,
    scan: TriangleMesh,
    cameras: Sequence[Camera],
    instance_ids: Optional[Iterable[int]] = None,
    threads: int = 1,
) -> np.ndarray:
    """
    Signed depth differences (registered minus scan) pooled over cameras

    A pixel counts when both renders hit something and the registered hit
    belongs to an object (restricted to ``instance_ids`` when given, 1-based).
    """
    if not cameras:
        raise ValueError("Depth error needs at least one camera")
    objects = SceneRenderer(registered)
    background = SceneRenderer([(scan, Sim3Transform.identity())])
    allowed = None if instance_ids is None else np.asarray(sorted(instance_ids), dtype=np.int64)

    def one(camera: Camera) -> np.ndarray:
        depth, instances = objects.render(camera)
        scan_depth, _ = background.render(camera)
        valid = (depth.values > 0) & (scan_depth.values > 0) & (instances.values > 0)
        if allowed is not None:
            valid &= np.isin(instances.values, allowed)
        return (depth.values - scan_depth.values)[valid]

    if threads > 1 and len(cameras) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, cameras))
    else:
        parts = [one(camera) for camera in cameras]
    return np.concatenate(parts)


def depth_error(
    registered: SceneObjects,
    scan: TriangleMesh,
    cameras: Sequence[Camera],
    instance_ids: Optional[Iterable[int]] = None,
    threads: int = 1,
) -> DepthErrorStats:
    """
    Mean and median absolute depth error and the spread of the signed error

    Raises:
        NoValidPixels: If no pixel sees both an object and the scan
    """
    delta = depth_residuals(registered, scan, cameras, instance_ids, threads)
    if len(delta) == 0:
        raise NoValidPixels("No pixel is covered by both the registered objects and the scan")
    magnitude = np.abs(delta)
    stats = DepthErrorStats(
        mean_abs=float(magnitude.mean()),
        median_abs=float(np.median(magnitude)),
        std=float(delta.std()),
        pixel_count=int(len(delta)),
    )
    logger.info("Depth error over %d pixels: mean %.4f mm, median %.4f mm", stats.pixel_count, stats.mean_abs, stats.median_abs)
    return stats
