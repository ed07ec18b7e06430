"""Run configuration models and loading

A run is configured by a JSON file (optional ``defaults`` section applied
first), an override string in any format understood by
:mod:`scenereg.parsers`, and explicit command-line flags, in that order.
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import CommandUsageError
from .parsers import ParserError, parse

logger = logging.getLogger(__name__)

THREADS_ENV = "SCENEREG_THREADS"


class _Config(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RegistrationConfig(_Config):
    """Object-to-scene registration settings"""

    sample_count: int = Field(500, ge=3, description="Surface samples drawn from the object")
    iterations_per_stage: int = Field(20, ge=1, description="Closest-point recomputations per stage")
    f_scale: float = Field(4.5, gt=0, description="Soft-L1 scale in millimeters")
    normal_threshold: float = Field(0.7, ge=-1, le=1, description="Minimum normal agreement kept in stage 2")
    max_inner_evaluations: int = Field(10, ge=1, description="Solver evaluations per outer iteration")
    reject_mean_residual: float = Field(10.0, gt=0, description="Final mean residual (mm) above which the pose is rejected")
    seed: int = Field(0, ge=0)


class IcpConfig(_Config):
    """Sim(3) ICP settings"""

    max_iterations: int = Field(50, ge=1)
    convergence_tol: float = Field(1e-4, gt=0, description="RMS change (mm) that ends the iteration")
    restarts: int = Field(3, ge=1, description="Independent runs; the lowest RMS wins")
    restart_rotation_deg: float = Field(10.0, ge=0)
    restart_translation_fraction: float = Field(0.05, ge=0, description="Fraction of the source diameter")
    restart_log_scale: float = Field(0.1, ge=0)
    sample_count: int = Field(2000, ge=3)
    estimate_scale: bool = True
    seed: int = Field(0, ge=0)


class ContactConfig(_Config):
    """Contact and penetration measurement settings"""

    threshold: float = Field(2.5, gt=0, description="Contact distance in millimeters")
    samples_per_mm2: float = Field(4.0, gt=0)
    voxel_size: float = Field(1.0, gt=0, description="Penetration broad-phase voxel size (mm)")
    facing_cosine: float = Field(0.5, ge=-1, le=1, description="Required opposition of contacting normals")
    surface_tolerance: float = Field(0.05, ge=0, description="Distance (mm) below which a sample counts as on the surface")
    seed: int = Field(0, ge=0)


class LossWeights(_Config):
    """Weights of the combined supervision objective"""

    w_cd: float = Field(0.1, ge=0)
    w_t: float = Field(100.0, ge=0)
    w_s: float = Field(100.0, ge=0)
    w_ip: float = Field(10.0, ge=0)


class ReconConfig(_Config):
    """Reconstruction metric settings"""

    resolution: int = Field(64, ge=2, description="Voxels along the longest axis of the joint bounding box")
    sample_count: int = Field(2000, ge=1, description="Surface samples per object for Chamfer distance")
    weights: LossWeights = Field(default_factory=LossWeights)
    seed: int = Field(0, ge=0)


class RenderConfig(_Config):
    """Resolution and field of view of rendered views"""

    width: int = Field(64, ge=1)
    height: int = Field(48, ge=1)
    fov_deg: float = Field(60.0, gt=0, lt=180)


class SceneGenConfig(_Config):
    """Synthetic scene generation settings"""

    views_per_scene: int = Field(10, ge=1)
    radius_factor: float = Field(2.5, gt=1, description="Camera distance in scene bounding radii")
    upright_probability: float = Field(0.5, ge=0, le=1)
    stack_factor: float = Field(0.5, gt=0, description="Top volume limit relative to support area times height")
    nest_factor: float = Field(0.8, gt=0, description="Inner volume limit relative to the container opening")
    max_rejections: int = Field(200, ge=1)
    max_attempts: int = Field(10, ge=1)
    ratio_gate: float = Field(0.2, gt=0, description="Largest accepted penetration to contact ratio")
    jitter_easy: float = Field(110.0, ge=0, description="Half-width (mm) of the base placement square")
    jitter_medium: float = Field(80.0, ge=0)
    jitter_hard: float = Field(70.0, ge=0)
    contact_density: float = Field(0.5, gt=0, description="Samples per mm² for the acceptance gate")


def default_threads() -> int:
    value = os.environ.get(THREADS_ENV)
    if not value:
        return 1
    try:
        return max(1, int(value))
    except ValueError:
        logger.warning("Ignoring non-integer %s=%r", THREADS_ENV, value)
        return 1


class RunConfig(_Config):
    """Everything a command needs to reproduce its output"""

    seed: int = Field(0, ge=0)
    threads: int = Field(default_factory=default_threads, ge=1)
    registration: RegistrationConfig = Field(default_factory=RegistrationConfig)
    icp: IcpConfig = Field(default_factory=IcpConfig)
    contact: ContactConfig = Field(default_factory=ContactConfig)
    recon: ReconConfig = Field(default_factory=ReconConfig)
    render: RenderConfig = Field(default_factory=RenderConfig)
    scenegen: SceneGenConfig = Field(default_factory=SceneGenConfig)

    def seeded(self) -> "RunConfig":
        """Copy where every sub-config without an explicit seed uses the run seed"""
        update = {}
        for name in ("registration", "icp", "contact", "recon"):
            sub = getattr(self, name)
            if "seed" not in sub.model_fields_set:
                update[name] = sub.model_copy(update={"seed": self.seed})
        return self.model_copy(update=update)


def deep_merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config_file(path: str) -> Dict[str, Any]:
    """Read a JSON config file, applying its ``defaults`` section first"""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            config = json.load(f)
        except json.JSONDecodeError as e:
            raise CommandUsageError(f"Config file {path} is not valid JSON: {e}")
    if not isinstance(config, dict):
        raise CommandUsageError(f"Config file {path} must contain an object")
    defaults = config.pop("defaults", {}) or {}
    return deep_merge(defaults, config)


def resolve_run_config(
    config_file: Optional[str] = None,
    overrides: Optional[str] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
) -> RunConfig:
    """
    Build a validated RunConfig

    Args:
        config_file: JSON file with an optional ``defaults`` section
        overrides: Structured override string (JSON, Python dict, or dotted assignments)
        seed: Explicit seed flag
        threads: Explicit worker count flag

    Raises:
        CommandUsageError: If any layer is malformed or fails validation
    """
    data: Dict[str, Any] = {}
    if config_file:
        data = load_config_file(config_file)
    if overrides:
        try:
            data = deep_merge(data, parse(overrides))
        except ParserError as e:
            raise CommandUsageError(f"Invalid --overrides: {e}")
    if seed is not None:
        data["seed"] = seed
    if threads is not None:
        data["threads"] = threads
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        raise CommandUsageError(f"Invalid configuration: {e}")
    return config.seeded()


def dump_json(payload: Any) -> str:
    """Canonical JSON text used for every written file and report"""
    return json.dumps(payload, indent=2, ensure_ascii=False, separators=(",", ": ")) + "\n"


def write_json(path, payload: Any) -> None:
    Path(path).write_text(dump_json(payload), encoding="utf-8")
