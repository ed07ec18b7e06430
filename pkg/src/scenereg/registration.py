"""Two-stage object-to-scene registration

Stage 1 minimizes the soft-L1 robustified point-to-surface distance of
object samples to the scene mesh. Stage 2 repeats the solve with each
residual weighted by the agreement of object and scene normals, discarding
samples whose normals disagree (thin walls seen from the wrong side).
"""

import logging
from dataclasses import dataclass, field
from typing import List, Literal, Optional

import numpy as np
from scipy.optimize import least_squares

from .config import RegistrationConfig
from .errors import AllWeightsZero, DegenerateInput, Diverged
from .geometry.bvh import MeshBVH
from .geometry.mesh import SurfaceSamples, TriangleMesh, sample_surface
from .pose import PoseModel, RigidTransform, quat_from_rotvec, retract

logger = logging.getLogger(__name__)

Stage = Literal["full", "distance-only"]


def soft_l1(s, f: float):
    """Robust loss 2 * (sqrt(1 + s / f^2) - 1) of a squared residual ``s``"""
    return 2.0 * (np.sqrt(1.0 + np.asarray(s, dtype=np.float64) / (f * f)) - 1.0)


def residuals_distance(pose: RigidTransform, samples: SurfaceSamples, scene: MeshBVH) -> np.ndarray:
    """Distance from each posed sample to its closest scene point"""
    if len(samples) == 0:
        raise ValueError("No samples to evaluate")
    return scene.closest_points(pose.apply(samples.points)).distances


def normal_agreement(pose: RigidTransform, samples: SurfaceSamples, scene: MeshBVH) -> np.ndarray:
    """Cosine between each posed sample normal and the scene face normal at its closest point"""
    closest = scene.closest_points(pose.apply(samples.points))
    return np.einsum("ij,ij->i", pose.rotate(samples.normals), scene.mesh.face_normals[closest.face_ids])


def gate_weights(agreement: np.ndarray, threshold: float) -> np.ndarray:
    return np.where(agreement >= threshold, agreement, 0.0)


@dataclass
class RegistrationResult:
    pose: RigidTransform
    stage1_pose: RigidTransform
    final_cost: float
    mean_residual: float
    inlier_fraction: float
    stage1_cost: Optional[float]
    stage1_inlier_fraction: Optional[float]
    cost_history: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "stage1_cost": self.stage1_cost,
            "final_cost": self.final_cost,
            "mean_residual_mm": self.mean_residual,
            "inlier_fraction": self.inlier_fraction,
            "stage1_inlier_fraction": self.stage1_inlier_fraction,
            "cost_history": list(self.cost_history),
            "pose": PoseModel.from_transform(self.pose).model_dump(),
            "stage1_pose": PoseModel.from_transform(self.stage1_pose).model_dump(),
        }


@dataclass
class _StageOutcome:
    pose: RigidTransform
    cost: float
    mean_residual: float
    inlier_fraction: float
    history: List[float]


def _increment_residuals(x: np.ndarray, local: np.ndarray, target: np.ndarray):
    rotation = RigidTransform(quat_from_rotvec(x[:3]), x[3:])
    rotated = rotation.rotate(local)
    error = rotated + x[3:] - target
    norm = np.linalg.norm(error, axis=1)
    return rotated, error, norm


def _solve_increment(moved, foot, weights, cfg: RegistrationConfig) -> np.ndarray:
    """
    One robust solve with fixed foot points; returns the 6-vector left increment

    The rotation is taken about the centroid of ``moved``.
    """
    center = moved.mean(axis=0)
    local = moved - center
    target = foot - center

    def fun(x):
        _, _, norm = _increment_residuals(x, local, target)
        return weights * norm

    def jac(x):
        rotated, error, norm = _increment_residuals(x, local, target)
        unit = np.divide(error, norm[:, None], out=np.zeros_like(error), where=norm[:, None] > 0)
        return weights[:, None] * np.hstack([np.cross(rotated, unit), unit])

    result = least_squares(
        fun,
        np.zeros(6),
        jac=jac,
        method="trf",
        loss="soft_l1",
        f_scale=cfg.f_scale,
        max_nfev=cfg.max_inner_evaluations,
        x_scale=1.0,
    )
    # p -> R (p - c) + c + t, re-expressed about the world origin
    rotation = RigidTransform(quat_from_rotvec(result.x[:3]), np.zeros(3))
    translation = center + result.x[3:] - rotation.rotate(center)
    return np.concatenate([result.x[:3], translation])


def _stage_weights(pose, samples, closest, scene: MeshBVH, cfg: RegistrationConfig, use_normals: bool):
    agreement = np.einsum(
        "ij,ij->i", pose.rotate(samples.normals), scene.mesh.face_normals[closest.face_ids]
    )
    gated = gate_weights(agreement, cfg.normal_threshold)
    if use_normals:
        return gated, gated
    return np.ones(len(samples)), gated


def _run_stage(
    samples: SurfaceSamples,
    scene: MeshBVH,
    init: RigidTransform,
    cfg: RegistrationConfig,
    use_normals: bool,
) -> _StageOutcome:
    label = "normal-aware" if use_normals else "distance"
    pose = init
    history: List[float] = []
    for iteration in range(cfg.iterations_per_stage):
        moved = pose.apply(samples.points)
        closest = scene.closest_points(moved)
        if np.ptp(closest.points, axis=0).max() <= 1e-9 * scene.scale:
            raise DegenerateInput("All closest points collapse onto a single scene point")
        weights, gated = _stage_weights(pose, samples, closest, scene, cfg, use_normals)
        if use_normals and not np.any(weights > 0):
            raise AllWeightsZero(
                f"No sample has normal agreement >= {cfg.normal_threshold} (iteration {iteration})"
            )
        residual = weights * closest.distances
        if not np.all(np.isfinite(residual)):
            raise Diverged(f"Non-finite residuals in {label} stage")
        delta = _solve_increment(moved, closest.points, weights, cfg)
        pose = retract(pose, delta)

        fresh = scene.closest_points(pose.apply(samples.points))
        weights, _ = _stage_weights(pose, samples, fresh, scene, cfg, use_normals)
        cost = float(soft_l1((weights * fresh.distances) ** 2, cfg.f_scale).sum())
        history.append(cost)
        logger.debug("%s stage iteration %d: cost %.6g", label, iteration, cost)

    final = scene.closest_points(pose.apply(samples.points))
    weights, gated = _stage_weights(pose, samples, final, scene, cfg, use_normals)
    cost = float(soft_l1((weights * final.distances) ** 2, cfg.f_scale).sum())
    mean_residual = float(final.distances.mean())
    inlier_fraction = float(np.count_nonzero(gated > 0) / len(samples))
    if not np.isfinite(cost):
        raise Diverged(f"Non-finite cost after {label} stage")
    return _StageOutcome(pose, cost, mean_residual, inlier_fraction, history)


def _prepare(obj: TriangleMesh, scene, cfg: Optional[RegistrationConfig]):
    cfg = cfg or RegistrationConfig()
    bvh = scene if isinstance(scene, MeshBVH) else MeshBVH(scene)
    samples = sample_surface(obj, cfg.sample_count, cfg.seed)
    return cfg, bvh, samples


def _check_acceptable(outcome: _StageOutcome, cfg: RegistrationConfig) -> None:
    if outcome.mean_residual > cfg.reject_mean_residual:
        raise Diverged(
            f"Mean residual {outcome.mean_residual:.3f} mm exceeds {cfg.reject_mean_residual} mm"
        )


def register_stage1(
    obj: TriangleMesh, scene, init: RigidTransform, cfg: Optional[RegistrationConfig] = None
) -> RegistrationResult:
    """Distance-only refinement from a coarse initial pose"""
    cfg, bvh, samples = _prepare(obj, scene, cfg)
    outcome = _run_stage(samples, bvh, init, cfg, use_normals=False)
    _check_acceptable(outcome, cfg)
    return RegistrationResult(
        pose=outcome.pose,
        stage1_pose=outcome.pose,
        final_cost=outcome.cost,
        mean_residual=outcome.mean_residual,
        inlier_fraction=outcome.inlier_fraction,
        stage1_cost=outcome.cost,
        stage1_inlier_fraction=outcome.inlier_fraction,
        cost_history=outcome.history,
    )


def register_stage2(
    obj: TriangleMesh, scene, stage1_pose: RigidTransform, cfg: Optional[RegistrationConfig] = None
) -> RegistrationResult:
    """Normal-aware refinement; residuals of samples facing away from the scene surface are dropped"""
    cfg, bvh, samples = _prepare(obj, scene, cfg)
    outcome = _run_stage(samples, bvh, stage1_pose, cfg, use_normals=True)
    _check_acceptable(outcome, cfg)
    return RegistrationResult(
        pose=outcome.pose,
        stage1_pose=stage1_pose,
        final_cost=outcome.cost,
        mean_residual=outcome.mean_residual,
        inlier_fraction=outcome.inlier_fraction,
        stage1_cost=None,
        stage1_inlier_fraction=None,
        cost_history=outcome.history,
    )


def register(
    obj: TriangleMesh,
    scene,
    init: RigidTransform,
    cfg: Optional[RegistrationConfig] = None,
    stage: Stage = "full",
) -> RegistrationResult:
    """
    Register an object mesh into a scene mesh

    Args:
        obj: Object mesh in its own frame
        scene: Scene mesh or its BVH
        init: Coarse object-to-scene pose
        cfg: Solver settings
        stage: ``full`` runs both stages, ``distance-only`` stops after stage 1

    Raises:
        Diverged: If the final mean residual exceeds ``cfg.reject_mean_residual``
        AllWeightsZero: If no sample passes the normal gate in stage 2
    """
    cfg, bvh, samples = _prepare(obj, scene, cfg)
    first = _run_stage(samples, bvh, init, cfg, use_normals=False)
    logger.info(
        "Distance stage: cost %.6g, mean residual %.4f mm, normal agreement %.3f",
        first.cost,
        first.mean_residual,
        first.inlier_fraction,
    )
    if stage == "distance-only":
        _check_acceptable(first, cfg)
        final = first
    else:
        final = _run_stage(samples, bvh, first.pose, cfg, use_normals=True)
        logger.info(
            "Normal-aware stage: cost %.6g, mean residual %.4f mm, inliers %.3f",
            final.cost,
            final.mean_residual,
            final.inlier_fraction,
        )
        _check_acceptable(final, cfg)
    return RegistrationResult(
        pose=final.pose,
        stage1_pose=first.pose,
        final_cost=final.cost,
        mean_residual=final.mean_residual,
        inlier_fraction=final.inlier_fraction,
        stage1_cost=first.cost,
        stage1_inlier_fraction=first.inlier_fraction,
        cost_history=first.history + (final.history if final is not first else []),
    )
