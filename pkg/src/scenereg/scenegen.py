"""
Procedural contact-rich tabletop scenes

Base objects are dropped onto the z=0 plane with rejection of any
interpenetrating placement; medium and hard scenes slide the bases together,
stack objects onto flat-topped supports and, for hard scenes, nest objects
inside containers. Physics is replaced by a contact-directed drop: an object
moves along a direction until the first surface contact, found by casting
rays from the moving object and from the obstacles against the motion.
"""

import logging
import math
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationError, field_validator

from .config import ContactConfig, RenderConfig, SceneGenConfig, write_json
from .errors import GenerationFailed, NoCompatiblePair, ParseError, PlacementExhausted, SceneGenError
from .geometry import primitives
from .geometry.bvh import MeshBVH
from .geometry.mesh import TriangleMesh, sample_surface
from .geometry.mesh_io import load_mesh, save_obj
from .geometry.render import Camera, look_at, render_views, save_depth, save_instances
from .manifest import CameraModel, ObjectEntry, SceneManifest
from .physical_metrics import ContactReport, PosedBody, contact_report, penetration_mask
from .pose import Pose7DoF, PoseModel, RigidTransform, quat_from_rotvec, random_rotation
from .rng import child_seed, make_rng

logger = logging.getLogger(__name__)

Difficulty = Literal["easy", "medium", "hard"]
DIFFICULTIES: Tuple[str, ...] = ("easy", "medium", "hard")
PathLike = Union[str, Path]

CONTACT_GAP = 0.02
PLACEMENT_VOXEL = 2.0
DROP_SAMPLES = 2000


# Catalog -------------------------------------------------------------------


class CatalogEntry(BaseModel):
    """One catalog object; sizes are taken with the object upright"""

    model_config = ConfigDict(extra="forbid")

    id: str = Field(min_length=1)
    mesh: str = Field(description="Mesh path relative to the catalog file")
    top_area: float = Field(gt=0, description="Upright top-face bounding box area (mm²)")
    volume: float = Field(gt=0, description="Solid volume (mm³)")
    height: float = Field(gt=0)
    radius: float = Field(gt=0, description="Horizontal bounding radius around the vertical axis")
    stackable: bool = Field(True, description="May be placed on top of another object")
    support: bool = Field(False, description="Flat top that can carry another object")
    open_volume: Optional[float] = Field(None, gt=0, description="Cavity volume of a container (mm³)")
    cavity_radius: Optional[float] = Field(None, gt=0, description="Horizontal clearance inside the cavity")

    @property
    def is_container(self) -> bool:
        return self.open_volume is not None


class ObjectCatalog(BaseModel):
    model_config = ConfigDict(extra="forbid")

    entries: List[CatalogEntry]

    _base_dir: Path = PrivateAttr(default_factory=Path.cwd)
    _meshes: Dict[str, TriangleMesh] = PrivateAttr(default_factory=dict)

    @field_validator("entries")
    @classmethod
    def _unique(cls, entries: List[CatalogEntry]) -> List[CatalogEntry]:
        ids = [entry.id for entry in entries]
        if len(set(ids)) != len(ids):
            raise ValueError("Catalog ids must be unique")
        return entries

    @classmethod
    def load(cls, path: PathLike) -> "ObjectCatalog":
        path = Path(path)
        try:
            catalog = cls.model_validate_json(path.read_text(encoding="utf-8"))
        except ValidationError as e:
            raise ParseError(f"{path}: {e}")
        catalog._base_dir = path.parent.resolve()
        return catalog

    def save(self, path: PathLike) -> None:
        path = Path(path)
        write_json(path, self.model_dump(mode="json", exclude_none=True))
        self._base_dir = path.parent.resolve()

    def entry(self, entry_id: str) -> CatalogEntry:
        for entry in self.entries:
            if entry.id == entry_id:
                return entry
        raise KeyError(entry_id)

    def mesh(self, entry_id: str) -> TriangleMesh:
        if entry_id not in self._meshes:
            self._meshes[entry_id] = load_mesh(self._base_dir / self.entry(entry_id).mesh)
        return self._meshes[entry_id]

    def ids(self) -> List[str]:
        return [entry.id for entry in self.entries]


@dataclass(frozen=True)
class _Primitive:
    build: Callable[[], TriangleMesh]
    stackable: bool = True
    support: bool = False
    cavity: Optional[Tuple[float, float, float]] = None  # clearance radius, floor z, rim z
    square_cavity: bool = False


BUILTIN_PRIMITIVES: Dict[str, _Primitive] = {
    "cube_large": _Primitive(lambda: primitives.box((70, 70, 70), (0, 0, 35)), support=True),
    "cube_medium": _Primitive(lambda: primitives.box((50, 50, 50), (0, 0, 25)), support=True),
    "cube_small": _Primitive(lambda: primitives.box((30, 30, 30), (0, 0, 15)), support=True),
    "block_flat": _Primitive(lambda: primitives.box((100, 60, 30), (0, 0, 15)), support=True),
    "brick": _Primitive(lambda: primitives.box((60, 30, 20), (0, 0, 10)), support=True),
    "can": _Primitive(lambda: primitives.cylinder(25, 80), support=True),
    "puck": _Primitive(lambda: primitives.cylinder(35, 25), support=True),
    "ball": _Primitive(lambda: primitives.uv_sphere(22, center=(0, 0, 22)), stackable=False),
    "bowl": _Primitive(lambda: primitives.bowl(65, 4), stackable=False, cavity=(61.0, 4.0, 65.0)),
    "cup": _Primitive(lambda: primitives.cup(35, 80, 3), stackable=False, cavity=(32.0, 3.0, 80.0)),
    "tray": _Primitive(
        lambda: primitives.open_box((120, 120, 40), 4), stackable=False, cavity=(56.0, 4.0, 40.0), square_cavity=True
    ),
    "pitcher": _Primitive(lambda: primitives.pitcher(40, 150, 3), stackable=False),
}


def _open_volume(primitive: _Primitive) -> Optional[float]:
    if primitive.cavity is None:
        return None
    radius, floor, rim = primitive.cavity
    depth = rim - floor
    if primitive.square_cavity:
        return (2.0 * radius) ** 2 * depth
    if depth >= radius - 1e-9:
        # hemispherical cavity
        return 2.0 / 3.0 * math.pi * radius**3
    return math.pi * radius**2 * depth


def describe_mesh(entry_id: str, mesh_path: str, mesh: TriangleMesh, primitive: _Primitive) -> CatalogEntry:
    lo, hi = mesh.bounds
    return CatalogEntry(
        id=entry_id,
        mesh=mesh_path,
        top_area=float((hi[0] - lo[0]) * (hi[1] - lo[1])),
        volume=float(mesh.volume()),
        height=float(hi[2] - lo[2]),
        radius=float(np.linalg.norm(mesh.vertices[:, :2], axis=1).max()),
        stackable=primitive.stackable,
        support=primitive.support,
        open_volume=_open_volume(primitive),
        cavity_radius=primitive.cavity[0] if primitive.cavity else None,
    )


def builtin_catalog(directory: PathLike) -> ObjectCatalog:
    """Write the bundled primitive meshes and ``catalog.json`` into ``directory``"""
    directory = Path(directory)
    (directory / "meshes").mkdir(parents=True, exist_ok=True)
    entries = []
    for entry_id, primitive in BUILTIN_PRIMITIVES.items():
        mesh = primitive.build()
        relative = f"meshes/{entry_id}.obj"
        save_obj(mesh, directory / relative)
        entries.append(describe_mesh(entry_id, relative, mesh, primitive))
    catalog = ObjectCatalog(entries=entries)
    catalog.save(directory / "catalog.json")
    return catalog


# Recipes -------------------------------------------------------------------


class SceneRecipe(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    difficulty: Difficulty = "easy"
    base_count: int = Field(4, ge=1)
    stacked_count: int = Field(0, ge=0)
    nested_count: int = Field(0, ge=0)
    jitter: float = Field(110.0, ge=0, description="Half-width (mm) of the base placement square")
    seed: int = Field(0, ge=0)

    @property
    def object_count(self) -> int:
        return self.base_count + self.stacked_count + self.nested_count

    @property
    def compact(self) -> bool:
        return self.difficulty != "easy"

    @classmethod
    def for_difficulty(cls, difficulty: Difficulty, seed: int = 0, cfg: Optional[SceneGenConfig] = None) -> "SceneRecipe":
        cfg = cfg or SceneGenConfig()
        counts = {"easy": (4, 0, 0), "medium": (4, 2, 0), "hard": (4, 2, 2)}[difficulty]
        jitter = {"easy": cfg.jitter_easy, "medium": cfg.jitter_medium, "hard": cfg.jitter_hard}[difficulty]
        return cls(
            difficulty=difficulty,
            base_count=counts[0],
            stacked_count=counts[1],
            nested_count=counts[2],
            jitter=jitter,
            seed=seed,
        )


# Scene under construction ----------------------------------------------------


@dataclass
class Placement:
    entry_id: str
    pose: Pose7DoF
    role: Literal["base", "stacked", "nested"] = "base"
    upright: bool = True
    parent: Optional[int] = None


class SceneDraft:
    """Placed objects with their query structures, in placement order"""

    def __init__(self, catalog: ObjectCatalog, cfg: SceneGenConfig, seed: int = 0):
        self.catalog = catalog
        self.cfg = cfg
        self.placements: List[Placement] = []
        self.bodies: List[PosedBody] = []
        self._seed = seed
        self._check = ContactConfig(samples_per_mm2=cfg.contact_density, voxel_size=PLACEMENT_VOXEL, seed=seed)

    def __len__(self) -> int:
        return len(self.placements)

    def body(self, entry_id: str, pose: Pose7DoF) -> PosedBody:
        seed = child_seed(self._seed, len(self.placements))
        return PosedBody(self.catalog.mesh(entry_id), pose, self._check.samples_per_mm2, seed)

    def penetrates(self, candidate: PosedBody, skip: Optional[int] = None) -> bool:
        """Whether the candidate interpenetrates any placed object"""
        for index, other in enumerate(self.bodies):
            if index == skip:
                continue
            if np.any(candidate.hi < other.lo) or np.any(other.hi < candidate.lo):
                continue
            if penetration_mask(candidate, other, self._check).any():
                return True
            if penetration_mask(other, candidate, self._check).any():
                return True
        return False

    def add(self, placement: Placement, body: PosedBody) -> None:
        self.placements.append(placement)
        self.bodies.append(body)

    def replace(self, index: int, pose: Pose7DoF) -> None:
        placement = self.placements[index]
        placement.pose = pose
        self.bodies[index] = PosedBody(
            self.catalog.mesh(placement.entry_id), pose, self._check.samples_per_mm2, child_seed(self._seed, index)
        )

    def obstacles(self, skip: Optional[int] = None) -> Optional[TriangleMesh]:
        meshes = [body.mesh for index, body in enumerate(self.bodies) if index != skip]
        return TriangleMesh.concatenate(meshes) if meshes else None

    def top(self) -> float:
        return max((float(body.hi[2]) for body in self.bodies), default=0.0)

    def objects(self) -> List[Tuple[TriangleMesh, Pose7DoF]]:
        return [(self.catalog.mesh(p.entry_id), p.pose) for p in self.placements]


# Motion ----------------------------------------------------------------------


def _surface_points(mesh: TriangleMesh) -> np.ndarray:
    return np.vstack([mesh.vertices, sample_surface(mesh, DROP_SAMPLES, 0).points])


def drop_until_contact(
    moving: TriangleMesh,
    obstacles: Optional[TriangleMesh],
    direction,
    max_travel: Optional[float] = None,
    plane_z: Optional[float] = 0.0,
    gap: float = CONTACT_GAP,
) -> Optional[float]:
    """
    Distance ``moving`` can travel along ``direction`` before touching anything

    Contacts are found by rays from the moving surface along the motion and
    from the obstacle surface against it; the z = ``plane_z`` plane bounds
    any downward motion. The result stops ``gap`` short of the contact and is
    capped at ``max_travel``. Returns None when nothing is in the way and no
    cap is given.
    """
    direction = np.asarray(direction, dtype=np.float64)
    direction = direction / np.linalg.norm(direction)
    limits = []
    if obstacles is not None and not obstacles.is_empty:
        forward = MeshBVH(obstacles).raycast_many(_surface_points(moving), direction)
        if np.any(forward.hit):
            limits.append(float(forward.t[forward.hit].min()))
        backward = MeshBVH(moving).raycast_many(_surface_points(obstacles), -direction)
        if np.any(backward.hit):
            limits.append(float(backward.t[backward.hit].min()))
    if plane_z is not None and direction[2] < -1e-12:
        lowest = float(moving.bounds[0][2])
        limits.append((lowest - plane_z) / -direction[2])
    if not limits:
        return max_travel
    travel = max(0.0, min(limits) - gap)
    if max_travel is not None:
        travel = min(travel, max_travel)
    return travel


def draw_orientation(rng: np.random.Generator, upright_probability: float, force_upright: bool = False):
    """Random yaw when upright, otherwise a uniform rotation; returns (q, upright)"""
    roll = rng.random()
    yaw = rng.uniform(0.0, 2.0 * math.pi)
    upright = force_upright or roll < upright_probability
    if upright:
        return quat_from_rotvec([0.0, 0.0, yaw]), True
    return random_rotation(rng), False


def _resting_pose(mesh: TriangleMesh, q, x: float, y: float) -> Pose7DoF:
    rotated = Pose7DoF(q, np.zeros(3)).apply(mesh.vertices)
    return Pose7DoF(q, np.array([x, y, -rotated[:, 2].min()]))


def _translated(pose: Pose7DoF, offset) -> Pose7DoF:
    return Pose7DoF(pose.q, pose.t + np.asarray(offset, dtype=np.float64), pose.sigma)


# Placement operations ----------------------------------------------------------


def place_base(
    draft: SceneDraft,
    recipe: SceneRecipe,
    rng: np.random.Generator,
    required: Sequence[str] = (),
) -> List[Placement]:
    """
    Drop ``recipe.base_count`` objects onto the plane at jittered positions

    ``required`` entries are placed first and kept upright; the rest are
    drawn from the catalog and are upright with the configured probability.

    Raises:
        PlacementExhausted: If an object cannot be placed without penetration
    """
    cfg = draft.cfg
    catalog_ids = draft.catalog.ids()
    placed = []
    for k in range(recipe.base_count):
        forced = k < len(required)
        entry_id = required[k] if forced else catalog_ids[int(rng.integers(len(catalog_ids)))]
        mesh = draft.catalog.mesh(entry_id)
        for rejection in range(cfg.max_rejections + 1):
            if rejection == cfg.max_rejections:
                raise PlacementExhausted(
                    f"Could not place '{entry_id}' after {cfg.max_rejections} rejected positions"
                )
            q, upright = draw_orientation(rng, cfg.upright_probability, forced)
            x, y = rng.uniform(-recipe.jitter, recipe.jitter, 2)
            pose = _resting_pose(mesh, q, x, y)
            body = draft.body(entry_id, pose)
            if draft.penetrates(body):
                logger.debug("Rejected placement %d of '%s'", rejection, entry_id)
                continue
            placement = Placement(entry_id, pose, "base", upright)
            draft.add(placement, body)
            placed.append(placement)
            break
    return placed


def compact_bases(draft: SceneDraft) -> None:
    """Slide every base object horizontally towards the scene centre until it touches something"""
    bases = [i for i, p in enumerate(draft.placements) if p.role == "base"]
    if len(bases) < 2:
        return
    center = np.mean([draft.placements[i].pose.t[:2] for i in bases], axis=0)
    for index in bases:
        pose = draft.placements[index].pose
        offset = center - pose.t[:2]
        distance = float(np.linalg.norm(offset))
        if distance < 1e-6:
            continue
        direction = np.array([offset[0], offset[1], 0.0]) / distance
        travel = drop_until_contact(
            draft.bodies[index].mesh, draft.obstacles(skip=index), direction, max_travel=distance, plane_z=None
        )
        if not travel:
            continue
        moved = _translated(pose, direction * travel)
        previous = draft.placements[index].pose
        draft.replace(index, moved)
        if draft.penetrates(draft.bodies[index], skip=index):
            draft.replace(index, previous)


def _drop_from_above(draft: SceneDraft, entry_id: str, q, xy) -> Optional[Pose7DoF]:
    mesh = draft.catalog.mesh(entry_id)
    start = _resting_pose(mesh, q, xy[0], xy[1])
    start = _translated(start, (0.0, 0.0, draft.top() + 1.0))
    travel = drop_until_contact(mesh.transformed(start), draft.obstacles(), (0.0, 0.0, -1.0))
    if travel is None:
        return None
    return _translated(start, (0.0, 0.0, -travel))


def _compatible_toppers(draft: SceneDraft, support: CatalogEntry) -> List[CatalogEntry]:
    limit = draft.cfg.stack_factor * support.top_area * support.height
    return [e for e in draft.catalog.entries if e.stackable and e.volume <= limit]


def stackable_supports(catalog: ObjectCatalog, cfg: SceneGenConfig) -> List[str]:
    """Support entries that at least one stackable entry can be placed on"""
    result = []
    for support in catalog.entries:
        if not support.support:
            continue
        limit = cfg.stack_factor * support.top_area * support.height
        if any(e.stackable and e.volume <= limit for e in catalog.entries):
            result.append(support.id)
    return result


def stack_objects(draft: SceneDraft, recipe: SceneRecipe, rng: np.random.Generator) -> List[Placement]:
    """
    Lower ``recipe.stacked_count`` objects onto upright flat-topped objects

    Raises:
        NoCompatiblePair: If no topper/support combination can be placed
    """
    placed = []
    used_supports = set()
    for _ in range(recipe.stacked_count):
        pairs = []
        for index, placement in enumerate(draft.placements):
            support = draft.catalog.entry(placement.entry_id)
            if not (support.support and placement.upright) or index in used_supports:
                continue
            pairs += [(index, topper.id) for topper in _compatible_toppers(draft, support)]
        if not pairs:
            pairs = [
                (index, topper.id)
                for index, placement in enumerate(draft.placements)
                if draft.catalog.entry(placement.entry_id).support and placement.upright
                for topper in _compatible_toppers(draft, draft.catalog.entry(placement.entry_id))
            ]
        success = None
        for choice in rng.permutation(len(pairs)):
            index, topper_id = pairs[int(choice)]
            support = draft.placements[index]
            q, _ = draw_orientation(rng, 1.0, True)
            spread = 0.1 * draft.catalog.entry(support.entry_id).radius
            xy = support.pose.t[:2] + rng.uniform(-spread, spread, 2)
            pose = _drop_from_above(draft, topper_id, q, xy)
            if pose is None:
                continue
            body = draft.body(topper_id, pose)
            if body.lo[2] < draft.bodies[index].hi[2] - 1.0 or draft.penetrates(body):
                continue
            success = Placement(topper_id, pose, "stacked", True, index)
            draft.add(success, body)
            used_supports.add(index)
            break
        if success is None:
            raise NoCompatiblePair("No stackable object fits on any upright support")
        placed.append(success)
    return placed


def _compatible_inner(draft: SceneDraft, container: CatalogEntry) -> List[CatalogEntry]:
    limit = draft.cfg.nest_factor * container.open_volume
    return [
        e
        for e in draft.catalog.entries
        if not e.is_container and e.volume <= limit and e.radius < container.cavity_radius
    ]


def nest_objects(draft: SceneDraft, recipe: SceneRecipe, rng: np.random.Generator) -> List[Placement]:
    """
    Lower ``recipe.nested_count`` objects into upright containers, one per container

    Raises:
        NoCompatiblePair: If no inner/container combination can be placed
    """
    placed = []
    filled = set()
    for _ in range(recipe.nested_count):
        pairs = []
        for index, placement in enumerate(draft.placements):
            container = draft.catalog.entry(placement.entry_id)
            if not container.is_container or not placement.upright or index in filled:
                continue
            pairs += [(index, inner.id) for inner in _compatible_inner(draft, container)]
        success = None
        for choice in rng.permutation(len(pairs)):
            index, inner_id = pairs[int(choice)]
            container = draft.placements[index]
            q, _ = draw_orientation(rng, 1.0, True)
            pose = _drop_from_above(draft, inner_id, q, container.pose.t[:2])
            if pose is None:
                continue
            body = draft.body(inner_id, pose)
            if draft.penetrates(body):
                continue
            success = Placement(inner_id, pose, "nested", True, index)
            draft.add(success, body)
            filled.add(index)
            break
        if success is None:
            raise NoCompatiblePair("No object fits inside any upright container")
        placed.append(success)
    return placed


# Cameras ------------------------------------------------------------------------


def sample_cameras(
    objects: Sequence[Tuple[TriangleMesh, Pose7DoF]],
    count: int,
    seed,
    render: Optional[RenderConfig] = None,
    radius_factor: float = 2.5,
) -> List[Camera]:
    """
    Cameras on a sphere around the scene looking at its centre

    Azimuth is uniform in [0, 2π] and elevation uniform in [π/4, π/2]; the
    sphere radius is ``radius_factor`` times the scene bounding radius.
    """
    render = render or RenderConfig()
    merged = TriangleMesh.concatenate([mesh.transformed(pose) for mesh, pose in objects])
    lo, hi = merged.bounds
    center = 0.5 * (lo + hi)
    radius = radius_factor * float(np.linalg.norm(merged.vertices - center, axis=1).max())
    rng = make_rng(seed)
    cameras = []
    for _ in range(count):
        azimuth = rng.uniform(0.0, 2.0 * math.pi)
        elevation = rng.uniform(math.pi / 4, math.pi / 2)
        eye = center + radius * np.array(
            [math.cos(elevation) * math.cos(azimuth), math.cos(elevation) * math.sin(azimuth), math.sin(elevation)]
        )
        cameras.append(Camera.from_fov(render.width, render.height, render.fov_deg, look_at(eye, center)))
    return cameras


# Generation ---------------------------------------------------------------------


@dataclass
class GeneratedScene:
    name: str
    difficulty: str
    manifest_path: Path
    manifest: SceneManifest
    depth_paths: List[Path]
    instance_paths: List[Path]
    report: ContactReport
    attempts: int
    placements: List[Placement] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "difficulty": self.difficulty,
            "manifest": str(self.manifest_path),
            "objects": len(self.manifest.objects),
            "stacked": sum(p.role == "stacked" for p in self.placements),
            "nested": sum(p.role == "nested" for p in self.placements),
            "attempts": self.attempts,
            "contact_area_mm2": self.report.contact_area,
            "penetration_area_mm2": self.report.penetration_area,
            "ratio": self.report.ratio,
        }


def _pick(ids: List[str], count: int, rng) -> List[str]:
    picks = rng.choice(len(ids), count, replace=len(ids) < count)
    return [ids[int(i)] for i in picks]


def _required_bases(catalog: ObjectCatalog, recipe: SceneRecipe, cfg: SceneGenConfig, rng) -> List[str]:
    required = []
    if recipe.nested_count:
        containers = [e.id for e in catalog.entries if e.is_container]
        if not containers:
            raise NoCompatiblePair("Catalog has no containers to nest into")
        required += _pick(containers, recipe.nested_count, rng)
    if recipe.stacked_count:
        supports = stackable_supports(catalog, cfg)
        if not supports:
            raise NoCompatiblePair("Catalog has no support that any stackable object fits on")
        required += _pick(supports, recipe.stacked_count, rng)
    return required[: recipe.base_count]


def build_scene(catalog: ObjectCatalog, recipe: SceneRecipe, cfg: SceneGenConfig, seed) -> SceneDraft:
    """Run the placement steps of one attempt"""
    rng = make_rng(seed)
    draft = SceneDraft(catalog, cfg, int(recipe.seed))
    place_base(draft, recipe, rng, _required_bases(catalog, recipe, cfg, rng))
    if recipe.compact:
        compact_bases(draft)
    if recipe.stacked_count:
        stack_objects(draft, recipe, rng)
    if recipe.nested_count:
        nest_objects(draft, recipe, rng)
    return draft


def _init_pose(pose: Pose7DoF, diameter: float, rng: np.random.Generator) -> Pose7DoF:
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    direction = rng.standard_normal(3)
    direction /= np.linalg.norm(direction)
    center = pose.t
    kick = RigidTransform(quat_from_rotvec(axis * math.radians(5.0)), np.zeros(3))
    step = RigidTransform(kick.q, center - kick.apply(center) + 0.05 * diameter * direction)
    return Pose7DoF.from_transform(step.compose(pose))


def generate(
    recipe: SceneRecipe,
    catalog: ObjectCatalog,
    out_dir: PathLike,
    cfg: Optional[SceneGenConfig] = None,
    render: Optional[RenderConfig] = None,
    threads: int = 1,
) -> GeneratedScene:
    """
    Generate one scene and write it to ``out_dir``

    The directory receives ``manifest.json``, ``scan.obj`` (all objects
    merged), one mesh per catalog entry used and a depth map plus instance
    map per view. Attempts whose penetration to contact ratio reaches the
    gate, or whose placement fails, are regenerated.

    Raises:
        GenerationFailed: If no attempt passes within ``cfg.max_attempts``
    """
    cfg = cfg or SceneGenConfig()
    render = render or RenderConfig()
    out_dir = Path(out_dir)
    difficulty_key = DIFFICULTIES.index(recipe.difficulty)
    gate = ContactConfig(samples_per_mm2=cfg.contact_density, seed=recipe.seed)

    draft = report = None
    last_error: Optional[SceneGenError] = None
    attempt = 0
    for attempt in range(1, cfg.max_attempts + 1):
        try:
            candidate = build_scene(catalog, recipe, cfg, child_seed(recipe.seed, difficulty_key, attempt))
        except (PlacementExhausted, NoCompatiblePair) as e:
            logger.warning("Attempt %d for %s scene failed: %s", attempt, recipe.difficulty, e)
            last_error = e
            continue
        candidate_report = contact_report(candidate.objects(), gate, threads)
        if candidate_report.ratio is not None and candidate_report.ratio >= cfg.ratio_gate:
            logger.warning(
                "Attempt %d rejected: penetration ratio %.3f >= %.3f", attempt, candidate_report.ratio, cfg.ratio_gate
            )
            continue
        draft, report = candidate, candidate_report
        break
    if draft is None:
        message = f"No acceptable {recipe.difficulty} scene after {cfg.max_attempts} attempts"
        if last_error is not None:
            message += f" (last error: {last_error})"
        raise GenerationFailed(message)

    objects = draft.objects()
    cameras = sample_cameras(
        objects, cfg.views_per_scene, child_seed(recipe.seed, difficulty_key, 0), render, cfg.radius_factor
    )
    views = render_views(objects, cameras, threads)

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "meshes").mkdir(exist_ok=True)
    (out_dir / "views").mkdir(exist_ok=True)
    for entry_id in sorted({p.entry_id for p in draft.placements}):
        save_obj(catalog.mesh(entry_id), out_dir / "meshes" / f"{entry_id}.obj")
    save_obj(TriangleMesh.concatenate([mesh.transformed(pose) for mesh, pose in objects]), out_dir / "scan.obj")

    depth_paths, instance_paths = [], []
    for k, (depth, instances) in enumerate(views):
        depth_path = out_dir / "views" / f"view_{k:02d}.depth"
        instance_path = out_dir / "views" / f"view_{k:02d}.pgm"
        save_depth(depth, depth_path)
        save_instances(instances, instance_path)
        depth_paths.append(depth_path)
        instance_paths.append(instance_path)

    init_rng = make_rng(child_seed(recipe.seed, difficulty_key, 0, 1))
    entries = []
    for index, placement in enumerate(draft.placements):
        diameter = catalog.mesh(placement.entry_id).diameter
        entries.append(
            ObjectEntry(
                id=f"{index:02d}_{placement.entry_id}",
                mesh=f"meshes/{placement.entry_id}.obj",
                pose=PoseModel.from_transform(placement.pose),
                init_pose=PoseModel.from_transform(_init_pose(placement.pose, diameter, init_rng)),
            )
        )
    manifest = SceneManifest(
        scan="scan.obj",
        objects=entries,
        cameras=[CameraModel.from_camera(camera) for camera in cameras],
    )
    manifest_path = out_dir / "manifest.json"
    manifest.save(manifest_path)
    logger.info(
        "Generated %s scene %s: %d objects, contact %.1f mm², attempts %d",
        recipe.difficulty,
        out_dir.name,
        len(entries),
        report.contact_area,
        attempt,
    )
    return GeneratedScene(
        name=out_dir.name,
        difficulty=recipe.difficulty,
        manifest_path=manifest_path,
        manifest=manifest,
        depth_paths=depth_paths,
        instance_paths=instance_paths,
        report=report,
        attempts=attempt,
        placements=list(draft.placements),
    )


def generate_batch(
    difficulties: Sequence[Difficulty],
    count: int,
    seed: int,
    out_dir: PathLike,
    catalog: Optional[ObjectCatalog] = None,
    cfg: Optional[SceneGenConfig] = None,
    render: Optional[RenderConfig] = None,
    threads: int = 1,
) -> dict:
    """
    Generate ``count`` scenes per difficulty and summarize their contact statistics

    A scene that fails is removed from disk and recorded in the summary.
    """
    out_dir = Path(out_dir)
    cfg = cfg or SceneGenConfig()
    if catalog is None:
        catalog = builtin_catalog(out_dir / "catalog")
    scenes: List[GeneratedScene] = []
    failures = []
    for difficulty in difficulties:
        for k in range(count):
            name = f"{difficulty}_{k:03d}"
            recipe = SceneRecipe.for_difficulty(difficulty, seed + k, cfg)
            try:
                scenes.append(generate(recipe, catalog, out_dir / name, cfg, render, threads))
            except GenerationFailed as e:
                shutil.rmtree(out_dir / name, ignore_errors=True)
                failures.append({"name": name, "error": str(e)})
                logger.error("Scene %s failed: %s", name, e)
    summary = {}
    for difficulty in difficulties:
        group = [s for s in scenes if s.difficulty == difficulty]
        ratios = [s.report.ratio for s in group if s.report.ratio is not None]
        summary[difficulty] = {
            "scenes": len(group),
            "mean_contact_area_mm2": float(np.mean([s.report.contact_area for s in group])) if group else None,
            "mean_penetration_area_mm2": float(np.mean([s.report.penetration_area for s in group])) if group else None,
            "mean_ratio": float(np.mean(ratios)) if ratios else None,
        }
    return {"scenes": [s.to_dict() for s in scenes], "summary": summary, "failures": failures}
