"""Pipeline commands: register, metrics, supervise, genscene and mod"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Iterable, List, Optional, Tuple, TypeVar

from pydantic import TypeAdapter, ValidationError

from ...alignment import gt_pose_supervision
from ...config import RunConfig
from ...decoder import apply_residual, mod_forward, read_modw
from ...errors import (
    EXIT_PARTIAL,
    CommandUsageError,
    GenerationFailed,
    ManifestError,
    ParseError,
    RegistrationError,
    ShapeMismatch,
)
from ...geometry.bvh import MeshBVH
from ...geometry.mesh import sample_surface
from ...geometry.render import Camera
from ...manifest import CameraModel, SceneManifest
from ...physical_metrics import contact_report, depth_error
from ...pose import Pose7DoF, PoseModel
from ...recon_metrics import combined_loss, scene_score
from ...registration import Stage, register
from ...reports import (
    GenerationReport,
    MetricsReport,
    ObjectRegistration,
    RefinementReport,
    RegistrationReport,
    SupervisionEntry,
    SupervisionReport,
    write_metric_tables,
)
from ...scenegen import DIFFICULTIES, Difficulty, ObjectCatalog, generate_batch
from ..core import CommandOutcome

if TYPE_CHECKING:
    from ..core import PipelineCli

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def _ordered_map(fn: Callable[[T], R], items: Iterable[T], threads: int) -> List[R]:
    """Map over a worker pool; results keep input order"""
    items = list(items)
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _read_json(path: str):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON: {e}")


def _load_list(path: str, key: str, item_type) -> list:
    """A JSON list of ``item_type``, either bare or under ``key`` of an object"""
    data = _read_json(path)
    if isinstance(data, dict):
        data = data.get(key)
    try:
        return TypeAdapter(List[item_type]).validate_python(data)
    except ValidationError as e:
        raise ParseError(f"{path}: {e}")


def load_cameras(path: str) -> List[Camera]:
    """Cameras from a JSON list or from the ``cameras`` field of a manifest"""
    return [camera.to_camera() for camera in _load_list(path, "cameras", CameraModel)]


def load_poses(path: str) -> List[Pose7DoF]:
    """Poses from a JSON list or from the ``poses`` field of a refinement report"""
    return [pose.to_pose() for pose in _load_list(path, "poses", PoseModel)]


def _scene_name(manifest: str) -> str:
    path = Path(manifest)
    return path.resolve().parent.name if path.stem == "manifest" else path.stem


# register ---------------------------------------------------------------------


def cmd_register(
    manifest: str,
    out: str,
    run_config: RunConfig,
    stage: Stage = "full",
    report: Optional[str] = None,
) -> CommandOutcome:
    """Register every object of a manifest into the manifest's scan

    Args:
        manifest: Scene manifest with a scan and an init_pose for every object
        out: Path of the manifest written with the refined poses
        stage: 'full' runs the distance and normal-aware stages, 'distance-only' stops after the first
        report: Also write the JSON report to this path

    Returns:
        Registration report; exit code 2 when any object failed
    """
    scene = SceneManifest.load(manifest)
    try:
        scene.init_poses()
    except ManifestError as e:
        raise CommandUsageError(str(e))
    if scene.scan is None:
        raise CommandUsageError(f"{manifest}: registration needs a scan")
    scan = MeshBVH(scene.load_scan())
    meshes = [scene.mesh(index) for index in range(len(scene.objects))]
    cfg = run_config.registration

    def one(index: int) -> ObjectRegistration:
        entry = scene.objects[index]
        try:
            result = register(meshes[index], scan, entry.init_pose.to_rigid(), cfg, stage)
        except RegistrationError as e:
            logger.warning("Registration of %s failed: %s", entry.id, e)
            return ObjectRegistration(id=entry.id, status="failed", error=f"{type(e).__name__}: {e}", pose=entry.init_pose)
        logger.info("Registered %s: mean residual %.4f mm", entry.id, result.mean_residual)
        return ObjectRegistration(id=entry.id, status="ok", **result.to_dict())

    results = _ordered_map(one, range(len(scene.objects)), run_config.threads)
    scene.with_poses([result.pose.to_pose() for result in results]).save(out)

    failed = sum(result.status == "failed" for result in results)
    payload = RegistrationReport(
        seed=run_config.seed,
        config=run_config,
        manifest=str(manifest),
        out=str(out),
        stage=stage,
        objects=results,
        failed=failed,
    )
    if report:
        payload.save(report)
    return CommandOutcome(payload.model_dump(mode="json"), EXIT_PARTIAL if failed else 0)


# metrics ----------------------------------------------------------------------


def cmd_metrics(
    manifest: str,
    run_config: RunConfig,
    contacts: bool = False,
    depth: bool = False,
    recon: Optional[str] = None,
    cameras: Optional[str] = None,
    csv: Optional[str] = None,
    out: Optional[str] = None,
) -> dict:
    """Evaluate contact, depth and reconstruction metrics of a manifest

    Args:
        manifest: Scene manifest to evaluate
        contacts: Report contact and penetration areas and their ratio
        depth: Report depth error of the posed objects against the scan
        recon: Ground-truth manifest to score the reconstruction against
        cameras: JSON camera list used when the manifest has no cameras
        csv: Directory receiving depth.csv, contacts.csv and recon.csv
        out: Also write the JSON report to this path

    Returns:
        Metrics report
    """
    if not (contacts or depth or recon):
        raise CommandUsageError("Nothing to evaluate: pass --contacts, --depth or --recon <gt manifest>")
    scene = SceneManifest.load(manifest)
    camera_list: List[Camera] = []
    if depth:
        camera_list = load_cameras(cameras) if cameras else scene.camera_list()
        if not camera_list:
            raise CommandUsageError("--depth needs cameras in the manifest or a --cameras file")
        if scene.scan is None:
            raise CommandUsageError("--depth needs a scan in the manifest")
    gt = SceneManifest.load(recon) if recon else None

    objects = scene.load_objects()
    threads = run_config.threads
    contact = contact_report(objects, run_config.contact, threads) if contacts else None
    depth_stats = depth_error(objects, scene.load_scan(), camera_list, threads=threads) if depth else None
    score = None
    if gt is not None:
        score = scene_score(objects, gt.load_objects(), run_config.recon, run_config.icp, threads)

    if csv:
        write_metric_tables(csv, _scene_name(manifest), depth_stats, contact, score)
    report = MetricsReport(
        seed=run_config.seed,
        config=run_config,
        manifest=str(manifest),
        contacts=contact.to_dict() if contact else None,
        depth=depth_stats.to_dict() if depth_stats else None,
        recon=score.to_dict() if score else None,
    )
    if out:
        report.save(out)
    return report.model_dump(mode="json")


# supervise --------------------------------------------------------------------


def cmd_supervise(pred: str, gt: str, run_config: RunConfig, out: Optional[str] = None) -> dict:
    """Extract ground-truth pose targets for a predicted scene

    Args:
        pred: Manifest of the predicted scene
        gt: Manifest of the ground-truth scene
        out: Also write the JSON report to this path

    Returns:
        Supervision report with per-object targets and the combined loss of the prediction
    """
    pred_scene = SceneManifest.load(pred)
    gt_scene = SceneManifest.load(gt)
    pred_objects = pred_scene.load_objects()
    gt_objects = gt_scene.load_objects()
    if not pred_objects or not gt_objects:
        raise CommandUsageError("Both manifests need at least one object")

    supervision = gt_pose_supervision(pred_objects, gt_objects, run_config.icp, run_config.threads)
    global_transform = supervision.global_transform
    recon = run_config.recon

    # Loss of the globally aligned prediction against the re-positioned prediction
    predicted, targets = [], []
    for pair in supervision.pairs:
        mesh, pose = pred_objects[pair.pred_index]
        local = sample_surface(mesh, recon.sample_count, recon.seed).points
        current = global_transform.compose(pose)
        predicted.append((current.apply(local), current))
        targets.append((pair.target_pose.apply(local), pair.target_pose))
    loss = combined_loss(predicted, targets, recon.weights)

    report = SupervisionReport(
        seed=run_config.seed,
        config=run_config,
        pred=str(pred),
        gt=str(gt),
        global_transform=PoseModel.from_transform(global_transform),
        global_rms_mm=supervision.global_rms,
        pairs=[
            SupervisionEntry(
                pred_id=pred_scene.objects[pair.pred_index].id,
                gt_id=gt_scene.objects[pair.gt_index].id,
                pose=PoseModel.from_transform(pair.pose),
                target_pose=PoseModel.from_transform(pair.target_pose),
                rms_mm=pair.rms,
            )
            for pair in supervision.pairs
        ],
        unmatched_pred=[pred_scene.objects[i].id for i in supervision.unmatched_pred],
        unmatched_gt=[gt_scene.objects[j].id for j in supervision.unmatched_gt],
        loss=loss.to_dict(),
    )
    if out:
        report.save(out)
    return report.model_dump(mode="json")


# genscene ---------------------------------------------------------------------


def cmd_genscene(
    out: str,
    run_config: RunConfig,
    difficulty: Tuple[Difficulty, ...] = DIFFICULTIES,
    count: int = 1,
    catalog: Optional[str] = None,
) -> CommandOutcome:
    """Generate contact-rich synthetic scenes with depth and instance maps

    Args:
        out: Directory receiving one sub-directory per scene and summary.json
        difficulty: Difficulty to generate; repeat the option for several
        count: Scenes per difficulty
        catalog: Catalog JSON file; the bundled primitive catalog when omitted

    Returns:
        Generation summary; nonzero exit when a scene could not be generated
    """
    if count < 1:
        raise CommandUsageError("--count must be at least 1")
    difficulties = list(dict.fromkeys(difficulty))
    objects = ObjectCatalog.load(catalog) if catalog else None
    batch = generate_batch(
        difficulties,
        count,
        run_config.seed,
        out,
        catalog=objects,
        cfg=run_config.scenegen,
        render=run_config.render,
        threads=run_config.threads,
    )
    report = GenerationReport(
        seed=run_config.seed,
        config=run_config,
        out=str(out),
        count=count,
        difficulties=difficulties,
        scenes=batch["scenes"],
        summary=batch["summary"],
        failures=batch["failures"],
    )
    report.save(Path(out) / "summary.json")
    exit_code = 0
    if batch["failures"]:
        exit_code = EXIT_PARTIAL if batch["scenes"] else GenerationFailed.exit_code
    return CommandOutcome(report.model_dump(mode="json"), exit_code)


# mod --------------------------------------------------------------------------


def cmd_mod(tokens: str, weights: str, poses: str, run_config: RunConfig, out: Optional[str] = None) -> dict:
    """Re-position poses with one multi-object decoder pass

    Args:
        tokens: MODW v1 file holding the pose and shape tokens
        weights: MODW v1 file holding the decoder weights
        poses: JSON list of the poses to refine, one per object
        out: Also write the JSON report to this path

    Returns:
        Refined poses and the residuals that produced them
    """
    token_set, _ = read_modw(tokens)
    _, mod_weights = read_modw(weights)
    if token_set is None:
        raise CommandUsageError(f"{tokens} holds no token set")
    if mod_weights is None:
        raise CommandUsageError(f"{weights} holds no decoder weights")
    initial = load_poses(poses)
    if len(initial) != token_set.objects:
        raise ShapeMismatch(f"{len(initial)} poses for {token_set.objects} objects")

    residuals = mod_forward(token_set, mod_weights)
    refined = [apply_residual(pose, residual) for pose, residual in zip(initial, residuals)]
    report = RefinementReport(
        seed=run_config.seed,
        config=run_config,
        poses=[PoseModel.from_transform(pose) for pose in refined],
        residuals=[residual.to_dict() for residual in residuals],
    )
    if out:
        report.save(out)
    return report.model_dump(mode="json")


def add_pipeline_commands(cli: "PipelineCli") -> None:
    cli.register(cmd_register, name="register", shortcuts={"manifest": "m", "out": "o"})
    cli.register(cmd_metrics, name="metrics", shortcuts={"manifest": "m", "out": "o"})
    cli.register(cmd_supervise, name="supervise", shortcuts={"out": "o"})
    cli.register(cmd_genscene, name="genscene", shortcuts={"out": "o", "difficulty": "d", "count": "n"})
    cli.register(cmd_mod, name="mod", shortcuts={"out": "o"})
