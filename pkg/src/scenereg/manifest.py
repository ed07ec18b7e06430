"""Scene manifest: scan, posed objects and cameras of one scene (JSON, version v1)"""

import json
import logging
import os
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationError, field_validator

from .config import dump_json
from .errors import ManifestError
from .geometry.mesh import TriangleMesh
from .geometry.mesh_io import load_mesh
from .geometry.render import Camera
from .pose import Pose7DoF, PoseModel

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class CameraModel(BaseModel):
    """Pinhole camera; ``pose`` maps camera coordinates (z forward) to the scene"""

    model_config = ConfigDict(extra="forbid")

    fx: float = Field(gt=0)
    fy: float = Field(gt=0)
    cx: float
    cy: float
    width: int = Field(ge=1)
    height: int = Field(ge=1)
    pose: PoseModel

    @classmethod
    def from_camera(cls, camera: Camera) -> "CameraModel":
        return cls(
            fx=camera.fx,
            fy=camera.fy,
            cx=camera.cx,
            cy=camera.cy,
            width=camera.width,
            height=camera.height,
            pose=PoseModel.from_transform(camera.pose),
        )

    def to_camera(self) -> Camera:
        return Camera(self.fx, self.fy, self.cx, self.cy, self.width, self.height, self.pose.to_rigid())


class ObjectEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str = Field(min_length=1)
    mesh: str = Field(description="Mesh path relative to the manifest")
    pose: PoseModel = Field(default_factory=PoseModel)
    init_pose: Optional[PoseModel] = Field(None, description="Coarse pose registration starts from")


class SceneManifest(BaseModel):
    """
    One scene: an optional scan mesh, posed objects and optional cameras

    Paths are stored relative to the manifest file and resolved against the
    directory the manifest was loaded from (or saved to).
    """

    model_config = ConfigDict(extra="forbid")

    version: Literal["v1"] = "v1"
    units: Literal["mm"] = "mm"
    scan: Optional[str] = None
    objects: List[ObjectEntry] = Field(default_factory=list)
    cameras: Optional[List[CameraModel]] = None

    _base_dir: Optional[Path] = PrivateAttr(None)
    _meshes: Dict[str, TriangleMesh] = PrivateAttr(default_factory=dict)

    @field_validator("objects")
    @classmethod
    def _unique_ids(cls, objects: List[ObjectEntry]) -> List[ObjectEntry]:
        seen = set()
        for entry in objects:
            if entry.id in seen:
                raise ValueError(f"Duplicate object id '{entry.id}'")
            seen.add(entry.id)
        return objects

    @classmethod
    def load(cls, path: PathLike) -> "SceneManifest":
        """
        Read and validate a manifest

        Raises:
            ManifestError: If the file is not valid JSON or violates the schema
            FileNotFoundError: If the file does not exist
        """
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ManifestError(f"{path}: invalid JSON: {e}")
        try:
            manifest = cls.model_validate(data)
        except ValidationError as e:
            raise ManifestError(f"{path}: {e}")
        manifest._base_dir = path.parent.resolve()
        return manifest

    def dumps(self) -> str:
        return dump_json(self.model_dump(mode="json", exclude_none=True))

    def save(self, path: PathLike) -> None:
        """Write the manifest; relative paths are rewritten when the directory changes"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        target = path.parent.resolve()
        unchanged = self._base_dir is None or target == self._base_dir
        manifest = self if unchanged else self._rebased(target)
        path.write_text(manifest.dumps(), encoding="utf-8")
        if manifest is not self:
            self.scan = manifest.scan
            self.objects = manifest.objects
            self._meshes = {}
        self._base_dir = target

    def _rebased(self, directory: Path) -> "SceneManifest":
        def move(relative: str) -> str:
            return Path(os.path.relpath(self.resolve(relative).resolve(), directory)).as_posix()

        objects = [entry.model_copy(update={"mesh": move(entry.mesh)}) for entry in self.objects]
        scan = move(self.scan) if self.scan is not None else None
        return self.model_copy(update={"objects": objects, "scan": scan})

    @property
    def base_dir(self) -> Path:
        """Directory relative paths resolve against; the working directory until loaded or saved"""
        return self._base_dir if self._base_dir is not None else Path.cwd()

    def resolve(self, relative: str) -> Path:
        return self.base_dir / relative

    def _mesh(self, relative: str) -> TriangleMesh:
        if relative not in self._meshes:
            self._meshes[relative] = load_mesh(self.resolve(relative))
        return self._meshes[relative]

    def mesh(self, index: int) -> TriangleMesh:
        return self._mesh(self.objects[index].mesh)

    def load_scan(self) -> TriangleMesh:
        if self.scan is None:
            raise ManifestError("Manifest has no scan")
        return self._mesh(self.scan)

    def load_objects(self) -> List[Tuple[TriangleMesh, Pose7DoF]]:
        """Every object mesh with its pose, in manifest order"""
        return [(self._mesh(entry.mesh), entry.pose.to_pose()) for entry in self.objects]

    def init_poses(self) -> List[Pose7DoF]:
        """
        Initial poses for registration

        Raises:
            ManifestError: If an object lacks ``init_pose``
        """
        missing = [entry.id for entry in self.objects if entry.init_pose is None]
        if missing:
            raise ManifestError(f"Objects without init_pose: {', '.join(missing)}")
        return [entry.init_pose.to_pose() for entry in self.objects]

    def camera_list(self) -> List[Camera]:
        return [camera.to_camera() for camera in self.cameras or []]

    def with_poses(self, poses: List[Pose7DoF]) -> "SceneManifest":
        """Copy with replaced object poses; paths keep resolving from the same directory"""
        objects = [
            entry.model_copy(update={"pose": PoseModel.from_transform(pose)})
            for entry, pose in zip(self.objects, poses, strict=True)
        ]
        copy = self.model_copy(update={"objects": objects})
        copy._base_dir = self._base_dir
        copy._meshes = self._meshes
        return copy
