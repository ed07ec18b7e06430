"""Report models written by the command line, and their CSV tables

Every report embeds the resolved :class:`~scenereg.config.RunConfig` and seed.
The CSV tables use the column names of the usual benchmark tables:
depth error (μ|δ|, med|δ|, σδ), physical plausibility (C.Area, P.Area, Ratio)
and reconstruction (IoU, CD).
"""

import csv
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Type, Union

from pydantic import BaseModel, Field

from .config import RunConfig, dump_json
from .physical_metrics import ContactReport, DepthErrorStats
from .pose import PoseModel
from .recon_metrics import ReconScore

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DEPTH_COLUMNS = ["scene", "μ|δ|", "med|δ|", "σδ", "pixels"]
CONTACT_COLUMNS = ["scene", "C.Area", "P.Area", "Ratio"]
RECON_COLUMNS = ["scene", "level", "IoU", "CD"]


class _Report(BaseModel):
    seed: int
    config: RunConfig

    def dumps(self) -> str:
        return dump_json(self.model_dump(mode="json"))

    def save(self, path: PathLike) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps(), encoding="utf-8")


class ObjectRegistration(BaseModel):
    id: str
    status: Literal["ok", "failed"]
    error: Optional[str] = None
    stage1_cost: Optional[float] = None
    final_cost: Optional[float] = None
    mean_residual_mm: Optional[float] = None
    inlier_fraction: Optional[float] = None
    stage1_inlier_fraction: Optional[float] = None
    cost_history: List[float] = Field(default_factory=list)
    pose: PoseModel
    stage1_pose: Optional[PoseModel] = None


class RegistrationReport(_Report):
    """Per-object outcome of registering a manifest into its scan"""

    command: Literal["register"] = "register"
    manifest: str
    out: str
    stage: Literal["full", "distance-only"]
    objects: List[ObjectRegistration]
    failed: int


class SupervisionEntry(BaseModel):
    pred_id: str
    gt_id: str
    pose: PoseModel = Field(description="Displacement of the prediction relative to the ground truth")
    target_pose: PoseModel = Field(description="Pose placing the predicted mesh onto the ground truth")
    rms_mm: float


class SupervisionReport(_Report):
    """Ground-truth pose targets for a predicted scene"""

    command: Literal["supervise"] = "supervise"
    pred: str
    gt: str
    global_transform: PoseModel
    global_rms_mm: float
    pairs: List[SupervisionEntry]
    unmatched_pred: List[str]
    unmatched_gt: List[str]
    loss: Dict[str, float]


class MetricsReport(_Report):
    """Physical and reconstruction metrics of one manifest"""

    command: Literal["metrics"] = "metrics"
    manifest: str
    contacts: Optional[Dict[str, Any]] = None
    depth: Optional[Dict[str, Any]] = None
    recon: Optional[Dict[str, Any]] = None


class GenerationReport(_Report):
    """Scenes written by the generator with per-difficulty contact statistics"""

    command: Literal["genscene"] = "genscene"
    out: str
    count: int
    difficulties: List[str]
    scenes: List[Dict[str, Any]]
    summary: Dict[str, Dict[str, Any]]
    failures: List[Dict[str, str]]


class RefinementReport(_Report):
    """Poses re-positioned by one multi-object decoder pass"""

    command: Literal["mod"] = "mod"
    poses: List[PoseModel]
    residuals: List[Dict[str, Any]]


REPORT_MODELS: Dict[str, Type[BaseModel]] = {
    "RegistrationReport": RegistrationReport,
    "SupervisionReport": SupervisionReport,
    "MetricsReport": MetricsReport,
    "GenerationReport": GenerationReport,
    "RefinementReport": RefinementReport,
}


# CSV ---------------------------------------------------------------------


def _write_csv(path: Path, fields: Sequence[str], rows: Sequence[Dict[str, Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(fields))
        writer.writeheader()
        for row in rows:
            writer.writerow({key: "" if value is None else value for key, value in row.items()})


def depth_row(scene: str, stats: DepthErrorStats) -> Dict[str, Any]:
    return {
        "scene": scene,
        "μ|δ|": stats.mean_abs,
        "med|δ|": stats.median_abs,
        "σδ": stats.std,
        "pixels": stats.pixel_count,
    }


def contact_row(scene: str, report: ContactReport) -> Dict[str, Any]:
    return {
        "scene": scene,
        "C.Area": report.contact_area,
        "P.Area": report.penetration_area,
        "Ratio": report.ratio,
    }


def recon_rows(scene: str, score: ReconScore) -> List[Dict[str, Any]]:
    return [
        {"scene": scene, "level": "object", "IoU": score.object_iou, "CD": score.object_cd},
        {"scene": scene, "level": "scene", "IoU": score.scene_iou, "CD": score.scene_cd},
    ]


def write_metric_tables(
    directory: PathLike,
    scene: str,
    depth: Optional[DepthErrorStats] = None,
    contacts: Optional[ContactReport] = None,
    recon: Optional[ReconScore] = None,
) -> List[Path]:
    """Write one CSV per evaluated metric family into ``directory``; undefined values are left blank"""
    directory = Path(directory)
    written = []
    if depth is not None:
        written.append(directory / "depth.csv")
        _write_csv(written[-1], DEPTH_COLUMNS, [depth_row(scene, depth)])
    if contacts is not None:
        written.append(directory / "contacts.csv")
        _write_csv(written[-1], CONTACT_COLUMNS, [contact_row(scene, contacts)])
    if recon is not None:
        written.append(directory / "recon.csv")
        _write_csv(written[-1], RECON_COLUMNS, recon_rows(scene, recon))
    logger.info("Wrote %d metric table(s) to %s", len(written), directory)
    return written
