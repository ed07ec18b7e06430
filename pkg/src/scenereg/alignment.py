"""Similarity alignment: Umeyama, Sim(3) ICP, object matching and pose supervision"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from .config import IcpConfig
from .errors import DegenerateConfiguration
from .geometry.bvh import MeshBVH
from .geometry.mesh import TriangleMesh, sample_surface
from .pose import PoseModel, Sim3Transform, decompose_sim3, matrix_to_quat, quat_from_rotvec
from .rng import child_seed, make_rng

logger = logging.getLogger(__name__)

PosedObject = Tuple[TriangleMesh, Sim3Transform]
Target = Union[MeshBVH, TriangleMesh, np.ndarray]


def umeyama_sim3(source, target, with_scale: bool = True) -> Sim3Transform:
    """
    Least-squares similarity mapping ``source`` rows onto ``target`` rows

    Raises:
        DegenerateConfiguration: If the points do not determine a rotation
    """
    src = np.asarray(source, dtype=np.float64)
    dst = np.asarray(target, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise ValueError(f"Point sets must both be (n, 3), got {src.shape} and {dst.shape}")
    if len(src) < 3:
        raise DegenerateConfiguration(f"Need at least 3 correspondences, got {len(src)}")

    mu_src = src.mean(axis=0)
    mu_dst = dst.mean(axis=0)
    src_c = src - mu_src
    dst_c = dst - mu_dst
    var_src = np.square(src_c).sum(axis=1).mean()
    cov = dst_c.T @ src_c / len(src)
    u, d, vh = np.linalg.svd(cov)
    if var_src <= 0 or d[0] <= 0 or d[1] <= 1e-12 * d[0]:
        raise DegenerateConfiguration("Correspondences are collinear or coincident")

    s = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vh) < 0:
        s[2, 2] = -1.0
    rotation = u @ s @ vh
    scale = float(np.trace(np.diag(d) @ s) / var_src) if with_scale else 1.0
    if scale <= 0:
        raise DegenerateConfiguration("Estimated scale is not positive")
    translation = mu_dst - scale * rotation @ mu_src
    return Sim3Transform(matrix_to_quat(rotation), translation, scale)


class IcpResult(NamedTuple):
    transform: Sim3Transform
    rms: float
    restart_rms: List[float]
    iterations: int


def _nearest_fn(target: Target) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(target, MeshBVH):
        return lambda points: target.closest_points(points).points
    if isinstance(target, TriangleMesh):
        bvh = MeshBVH(target)
        return lambda points: bvh.closest_points(points).points
    cloud = np.asarray(target, dtype=np.float64)
    tree = cKDTree(cloud)
    return lambda points: cloud[tree.query(points)[1]]


def _source_points(source, cfg: IcpConfig) -> np.ndarray:
    if isinstance(source, TriangleMesh):
        return sample_surface(source, cfg.sample_count, cfg.seed).points
    return np.asarray(source, dtype=np.float64)


def _rms(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=1))))


def _icp_once(points, nearest, init: Sim3Transform, cfg: IcpConfig) -> Tuple[Sim3Transform, float, int]:
    transform = init
    moved = transform.apply(points)
    foot = nearest(moved)
    rms = _rms(moved, foot)
    iterations = 0
    for iterations in range(1, cfg.max_iterations + 1):
        candidate = umeyama_sim3(points, foot, cfg.estimate_scale)
        moved = candidate.apply(points)
        new_foot = nearest(moved)
        new_rms = _rms(moved, new_foot)
        if new_rms > rms:
            logger.debug("ICP step %d raised RMS %.3g -> %.3g, stopping", iterations, rms, new_rms)
            break
        change = rms - new_rms
        transform, foot, rms = candidate, new_foot, new_rms
        logger.debug("ICP iteration %d: rms %.6g", iterations, rms)
        if change < cfg.convergence_tol:
            break
    return transform, rms, iterations


def perturb(init: Sim3Transform, center, diameter: float, cfg: IcpConfig, rng: np.random.Generator) -> Sim3Transform:
    """Random restart around ``center``: rotation, translation and log-scale kicks"""
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = math.radians(cfg.restart_rotation_deg)
    direction = rng.standard_normal(3)
    direction /= np.linalg.norm(direction)
    offset = direction * cfg.restart_translation_fraction * diameter
    scale = float(np.exp(rng.uniform(-cfg.restart_log_scale, cfg.restart_log_scale))) if cfg.estimate_scale else 1.0
    kick = Sim3Transform(quat_from_rotvec(axis * angle), np.zeros(3), scale)
    center = np.asarray(center, dtype=np.float64)
    delta = Sim3Transform(kick.q, center - kick.apply(center) + offset, scale)
    return delta.compose(init)


def icp_sim3(
    source,
    target: Target,
    init: Optional[Sim3Transform] = None,
    cfg: Optional[IcpConfig] = None,
) -> IcpResult:
    """
    Sim(3) ICP with restarts

    Run 0 starts from ``init``; further runs start from randomly perturbed
    copies of it. The run with the lowest final RMS is returned.

    Args:
        source: Mesh (sampled with ``cfg.sample_count`` points) or (n, 3) points
        target: Mesh, its BVH, or an (m, 3) point cloud
        init: Starting transform (identity by default)
        cfg: ICP settings
    """
    cfg = cfg or IcpConfig()
    init = init or Sim3Transform.identity()
    points = _source_points(source, cfg)
    nearest = _nearest_fn(target)

    moved = init.apply(points)
    center = moved.mean(axis=0)
    diameter = float(np.linalg.norm(np.ptp(moved, axis=0)))

    best = None
    restart_rms = []
    for run in range(cfg.restarts):
        start = init
        if run > 0:
            start = perturb(init, center, diameter, cfg, make_rng(child_seed(cfg.seed, run)))
        transform, rms, iterations = _icp_once(points, nearest, start, cfg)
        restart_rms.append(rms)
        if best is None or rms < best[1]:
            best = (transform, rms, iterations)
    logger.debug("ICP restarts rms: %s", restart_rms)
    return IcpResult(best[0], best[1], restart_rms, best[2])


# Matching -----------------------------------------------------------------


@dataclass
class Matching:
    pairs: List[Tuple[int, int]] = field(default_factory=list)
    unmatched_pred: List[int] = field(default_factory=list)
    unmatched_gt: List[int] = field(default_factory=list)
    cost: float = 0.0

    def to_dict(self) -> dict:
        return {
            "pairs": [list(p) for p in self.pairs],
            "unmatched_pred": list(self.unmatched_pred),
            "unmatched_gt": list(self.unmatched_gt),
            "cost": self.cost,
        }


def match_objects(pred: Sequence[PosedObject], gt: Sequence[PosedObject], gate_factor: float = 0.5) -> Matching:
    """
    One-to-one assignment of predicted to ground-truth objects

    Costs are distances between area-weighted surface centroids; assigned
    pairs farther apart than ``gate_factor`` times the ground-truth bounding
    box diagonal are left unmatched.
    """
    pred_centroids = [mesh.transformed(pose).surface_centroid() for mesh, pose in pred]
    gt_posed = [mesh.transformed(pose) for mesh, pose in gt]
    gt_centroids = [mesh.surface_centroid() for mesh in gt_posed]
    if not pred_centroids or not gt_centroids:
        return Matching([], list(range(len(pred))), list(range(len(gt))), 0.0)

    cost = np.linalg.norm(np.asarray(pred_centroids)[:, None, :] - np.asarray(gt_centroids)[None, :, :], axis=2)
    rows, cols = linear_sum_assignment(cost)
    gates = np.array([gate_factor * mesh.diameter for mesh in gt_posed])

    pairs = []
    total = 0.0
    for r, c in sorted(zip(rows.tolist(), cols.tolist())):
        if cost[r, c] <= gates[c]:
            pairs.append((r, c))
            total += float(cost[r, c])
    matched_pred = {p for p, _ in pairs}
    matched_gt = {g for _, g in pairs}
    return Matching(
        pairs=pairs,
        unmatched_pred=[i for i in range(len(pred)) if i not in matched_pred],
        unmatched_gt=[j for j in range(len(gt)) if j not in matched_gt],
        cost=total,
    )


# Supervision --------------------------------------------------------------


@dataclass
class SupervisionPair:
    pred_index: int
    gt_index: int
    pose: Sim3Transform
    target_pose: Sim3Transform
    rms: float

    def to_dict(self) -> dict:
        return {
            "pred_index": self.pred_index,
            "gt_index": self.gt_index,
            "pose": PoseModel.from_transform(self.pose).model_dump(),
            "target_pose": PoseModel.from_transform(self.target_pose).model_dump(),
            "rms_mm": self.rms,
        }


@dataclass
class Supervision:
    pairs: List[SupervisionPair]
    unmatched_pred: List[int]
    unmatched_gt: List[int]
    global_transform: Sim3Transform
    global_rms: float

    def to_dict(self) -> dict:
        return {
            "global": {
                "transform": PoseModel.from_transform(self.global_transform).model_dump(),
                "rms_mm": self.global_rms,
            },
            "pairs": [pair.to_dict() for pair in self.pairs],
            "unmatched_pred": list(self.unmatched_pred),
            "unmatched_gt": list(self.unmatched_gt),
        }


def align_scenes(pred: Sequence[PosedObject], gt: Sequence[PosedObject], cfg: IcpConfig) -> IcpResult:
    """Global Sim(3) from pooled predicted surface samples onto the merged ground truth"""
    pred_merged = TriangleMesh.concatenate([mesh.transformed(pose) for mesh, pose in pred])
    gt_merged = TriangleMesh.concatenate([mesh.transformed(pose) for mesh, pose in gt])
    samples = sample_surface(pred_merged, cfg.sample_count, cfg.seed).points
    result = icp_sim3(samples, MeshBVH(gt_merged), Sim3Transform.identity(), cfg)
    logger.info("Global alignment rms %.4f mm (restarts: %s)", result.rms, [round(r, 6) for r in result.restart_rms])
    return result


def gt_pose_supervision(
    pred: Sequence[PosedObject],
    gt: Sequence[PosedObject],
    cfg: Optional[IcpConfig] = None,
    threads: int = 1,
) -> Supervision:
    """
    Per-object Sim(3) targets from a predicted scene and its ground truth

    The predicted scene is aligned globally, objects are matched, and each
    matched prediction is refined onto its counterpart by ICP. ``pose`` is the
    displacement of the prediction relative to the ground truth (identity
    when they coincide); ``target_pose`` places the predicted mesh onto the
    ground-truth object.
    """
    cfg = cfg or IcpConfig()
    global_fit = align_scenes(pred, gt, cfg)
    g = global_fit.transform
    aligned = [(mesh, g.compose(pose)) for mesh, pose in pred]
    matching = match_objects(aligned, gt)
    if matching.unmatched_pred or matching.unmatched_gt:
        logger.warning(
            "Unmatched objects: %d predicted, %d ground truth",
            len(matching.unmatched_pred),
            len(matching.unmatched_gt),
        )

    def refine(pair: Tuple[int, int]) -> SupervisionPair:
        i, j = pair
        mesh, pose = aligned[i]
        gt_mesh, gt_pose = gt[j]
        points = pose.apply(sample_surface(mesh, cfg.sample_count, cfg.seed).points)
        fit = icp_sim3(points, MeshBVH(gt_mesh.transformed(gt_pose)), Sim3Transform.identity(), cfg)
        correction = fit.transform.compose(g)
        return SupervisionPair(
            pred_index=i,
            gt_index=j,
            pose=decompose_sim3(correction.inverse()),
            target_pose=decompose_sim3(fit.transform.compose(pose)),
            rms=fit.rms,
        )

    if threads > 1 and len(matching.pairs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            pairs = list(pool.map(refine, matching.pairs))
    else:
        pairs = [refine(pair) for pair in matching.pairs]
    return Supervision(pairs, matching.unmatched_pred, matching.unmatched_gt, g, global_fit.rms)
