"""Reconstruction quality: Chamfer distance, voxel IoU, scene scores and the supervision objective"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from .alignment import Matching, PosedObject, align_scenes, match_objects
from .config import IcpConfig, LossWeights, ReconConfig
from .errors import EmptySet, LengthMismatch
from .geometry.mesh import TriangleMesh, sample_surface
from .geometry.voxel import grid_for_bounds, voxelize_on_grid
from .pose import Sim3Transform, quat_multiply, quaternion_loss

logger = logging.getLogger(__name__)

MeshInput = Union[TriangleMesh, PosedObject]


def _point_set(points, name: str) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        raise EmptySet(f"Point set {name} is empty")
    return points


def chamfer(a, b) -> float:
    """Symmetric Chamfer distance: mean squared nearest-neighbour distance, both directions summed"""
    a = _point_set(a, "a")
    b = _point_set(b, "b")
    d_ab, _ = cKDTree(b).query(a)
    d_ba, _ = cKDTree(a).query(b)
    return float(np.mean(d_ab**2) + np.mean(d_ba**2))


def chamfer_gradient(a, b) -> np.ndarray:
    """Gradient of :func:`chamfer` with respect to the points of ``a`` (nearest neighbours held fixed)"""
    a = _point_set(a, "a")
    b = _point_set(b, "b")
    _, nn_ab = cKDTree(b).query(a)
    _, nn_ba = cKDTree(a).query(b)
    grad = 2.0 * (a - b[nn_ab]) / len(a)
    np.add.at(grad, nn_ba, 2.0 * (a[nn_ba] - b) / len(b))
    return grad


def _posed(item: MeshInput) -> TriangleMesh:
    if isinstance(item, TriangleMesh):
        return item
    mesh, pose = item
    return mesh.transformed(pose)


def shared_grid(meshes: Sequence[TriangleMesh], resolution: int):
    """Origin, voxel size and dims of a lattice over the union bounding box"""
    lows, highs = zip(*(mesh.bounds for mesh in meshes))
    lo = np.min(lows, axis=0)
    hi = np.max(highs, axis=0)
    voxel_size = float(np.max(hi - lo)) / resolution
    origin, dims = grid_for_bounds(lo, hi, voxel_size)
    return origin, voxel_size, dims


def voxel_iou(a: MeshInput, b: MeshInput, resolution: int = 64) -> float:
    """
    Solid-occupancy IoU of two posed meshes on a shared grid

    The grid spans the union bounding box with ``resolution`` voxels along
    its longest side. An empty union scores 0.
    """
    mesh_a, mesh_b = _posed(a), _posed(b)
    origin, voxel_size, dims = shared_grid([mesh_a, mesh_b], resolution)
    occ_a = voxelize_on_grid(mesh_a, origin, voxel_size, dims).occupancy
    occ_b = voxelize_on_grid(mesh_b, origin, voxel_size, dims).occupancy
    return _iou(occ_a, occ_b)


def _iou(occ_a: np.ndarray, occ_b: np.ndarray) -> float:
    union = np.count_nonzero(occ_a | occ_b)
    if union == 0:
        return 0.0
    return float(np.count_nonzero(occ_a & occ_b) / union)


@dataclass
class ReconScore:
    object_iou: Optional[float]
    object_cd: Optional[float]
    scene_iou: float
    scene_cd: float
    per_pair: List[dict]
    matching: Matching
    global_rms: float

    def to_dict(self) -> dict:
        return {
            "object_iou": self.object_iou,
            "object_cd": self.object_cd,
            "scene_iou": self.scene_iou,
            "scene_cd": self.scene_cd,
            "matched": len(self.matching.pairs),
            "unmatched_pred": len(self.matching.unmatched_pred),
            "unmatched_gt": len(self.matching.unmatched_gt),
            "global_rms_mm": self.global_rms,
            "per_pair": list(self.per_pair),
        }


def _posed_samples(mesh: TriangleMesh, pose: Sim3Transform, count: int, seed: int) -> np.ndarray:
    return pose.apply(sample_surface(mesh, count, seed).points)


def scene_score(
    pred: Sequence[PosedObject],
    gt: Sequence[PosedObject],
    cfg: Optional[ReconConfig] = None,
    icp_cfg: Optional[IcpConfig] = None,
    threads: int = 1,
) -> ReconScore:
    """
    Object- and scene-level IoU and Chamfer distance of a predicted scene

    The prediction is aligned to the ground truth with the best of several
    Sim(3) ICP runs, objects are matched, and every matched pair is scored
    with the same sampling seed on both sides. Scene values use the merged
    geometry of each side.
    """
    cfg = cfg or ReconConfig()
    icp_cfg = icp_cfg or IcpConfig()
    fit = align_scenes(pred, gt, icp_cfg)
    aligned = [(mesh, fit.transform.compose(pose)) for mesh, pose in pred]
    matching = match_objects(aligned, gt)
    if matching.unmatched_pred or matching.unmatched_gt:
        logger.warning(
            "Scoring with %d unmatched predicted and %d unmatched ground-truth objects",
            len(matching.unmatched_pred),
            len(matching.unmatched_gt),
        )

    pred_samples = [_posed_samples(m, p, cfg.sample_count, cfg.seed) for m, p in aligned]
    gt_samples = [_posed_samples(m, p, cfg.sample_count, cfg.seed) for m, p in gt]

    def score(pair: Tuple[int, int]) -> dict:
        i, j = pair
        return {
            "pred_index": i,
            "gt_index": j,
            "iou": voxel_iou(aligned[i], gt[j], cfg.resolution),
            "cd": chamfer(pred_samples[i], gt_samples[j]),
        }

    if threads > 1 and len(matching.pairs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_pair = list(pool.map(score, matching.pairs))
    else:
        per_pair = [score(pair) for pair in matching.pairs]

    pred_posed = [_posed(item) for item in aligned]
    gt_posed = [_posed(item) for item in gt]
    origin, voxel_size, dims = shared_grid(pred_posed + gt_posed, cfg.resolution)
    occ_pred = np.zeros(dims, dtype=bool)
    for mesh in pred_posed:
        occ_pred |= voxelize_on_grid(mesh, origin, voxel_size, dims).occupancy
    occ_gt = np.zeros(dims, dtype=bool)
    for mesh in gt_posed:
        occ_gt |= voxelize_on_grid(mesh, origin, voxel_size, dims).occupancy

    result = ReconScore(
        object_iou=float(np.mean([p["iou"] for p in per_pair])) if per_pair else None,
        object_cd=float(np.mean([p["cd"] for p in per_pair])) if per_pair else None,
        scene_iou=_iou(occ_pred, occ_gt),
        scene_cd=chamfer(np.concatenate(pred_samples), np.concatenate(gt_samples)),
        per_pair=per_pair,
        matching=matching,
        global_rms=fit.rms,
    )
    logger.info("Scene IoU %.4f, scene CD %.6g", result.scene_iou, result.scene_cd)
    return result


# Supervision objective ----------------------------------------------------


class LossTerms(NamedTuple):
    total: float
    cd: float
    translation: float
    scale: float
    rotation: float

    def to_dict(self) -> dict:
        return {"total": self.total, "L_cd": self.cd, "L_t": self.translation, "L_s": self.scale, "L_ip": self.rotation}


ShapeAndPose = Tuple[np.ndarray, Sim3Transform]


def combined_loss(
    pred: Sequence[ShapeAndPose],
    gt: Sequence[ShapeAndPose],
    weights: Optional[LossWeights] = None,
) -> LossTerms:
    """
    Weighted sum of Chamfer, translation, scale and quaternion terms over matched objects

    Raises:
        LengthMismatch: If the object lists differ in length
    """
    weights = weights or LossWeights()
    if len(pred) != len(gt):
        raise LengthMismatch(f"{len(pred)} predicted objects against {len(gt)} targets")
    if not pred:
        return LossTerms(0.0, 0.0, 0.0, 0.0, 0.0)

    cd = float(np.mean([chamfer(a, b) for (a, _), (b, _) in zip(pred, gt)]))
    translation = float(np.mean([np.sum((p.t - g.t) ** 2) for (_, p), (_, g) in zip(pred, gt)]))
    scale = float(np.mean([(p.sigma - g.sigma) ** 2 for (_, p), (_, g) in zip(pred, gt)]))
    rotation = float(np.mean([quaternion_loss(p.q, g.q) for (_, p), (_, g) in zip(pred, gt)]))
    total = weights.w_cd * cd + weights.w_t * translation + weights.w_s * scale + weights.w_ip * rotation
    return LossTerms(float(total), cd, translation, scale, rotation)


class PoseGradients(NamedTuple):
    translation: np.ndarray
    scale: float
    rotation: np.ndarray


def pose_loss_gradients(pose: Sim3Transform, target: Sim3Transform) -> PoseGradients:
    """
    Gradients of one object's translation, scale and quaternion terms

    The rotation gradient is taken in the left chart ``exp(w) * q`` at w = 0,
    the same chart :func:`scenereg.pose.retract` steps in.
    """
    q, q_hat = pose.q, target.q
    dot = float(q @ q_hat)
    rotation = np.empty(3)
    for k in range(3):
        axis = np.zeros(4)
        axis[k + 1] = 1.0
        rotation[k] = -dot * float(quat_multiply(axis, q) @ q_hat)
    return PoseGradients(
        translation=2.0 * (pose.t - target.t),
        scale=2.0 * (pose.sigma - target.sigma),
        rotation=rotation,
    )
