"""Pinhole cameras and ray-cast depth / instance rendering

Cameras follow the OpenCV convention: +x right, +y down, +z forward, pixel
``(u, v)`` centered at integer coordinates. Depth is the camera-frame z of
the first hit in millimeters, 0 where nothing is hit.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ParseError
from ..pose import RigidTransform, Sim3Transform, matrix_to_quat
from .bvh import MeshBVH
from .mesh import TriangleMesh

logger = logging.getLogger(__name__)

SceneObjects = Sequence[Tuple[TriangleMesh, Sim3Transform]]
PathLike = Union[str, Path]

DEPTH_MAGIC = b"DEPTHMAP v1"


@dataclass(frozen=True, eq=False)
class Camera:
    """Pinhole intrinsics, resolution and camera-to-world pose"""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    pose: RigidTransform

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("Focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("Resolution must be at least 1x1")

    @classmethod
    def from_fov(cls, width: int, height: int, fov_deg: float, pose: RigidTransform) -> "Camera":
        """Square pixels, horizontal field of view, centered principal point"""
        f = 0.5 * width / math.tan(math.radians(fov_deg) / 2.0)
        return cls(f, f, (width - 1) / 2.0, (height - 1) / 2.0, width, height, pose)

    def pixel_rays(self) -> Tuple[np.ndarray, np.ndarray]:
        """World-frame origins and directions (z component 1 in camera frame), row-major"""
        v, u = np.mgrid[0 : self.height, 0 : self.width]
        d_cam = np.stack(
            [(u.ravel() - self.cx) / self.fx, (v.ravel() - self.cy) / self.fy, np.ones(u.size)], axis=1
        )
        directions = self.pose.rotate(d_cam)
        origins = np.broadcast_to(self.pose.t, directions.shape)
        return np.ascontiguousarray(origins), directions


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> RigidTransform:
    """Camera-to-world pose at ``eye`` looking at ``target``"""
    eye = np.asarray(eye, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - eye
    z /= np.linalg.norm(z)
    x = np.cross(z, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(x) < 1e-9:
        x = np.cross(z, np.array([0.0, 1.0, 0.0]))
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return RigidTransform(matrix_to_quat(np.column_stack([x, y, z])), eye)


@dataclass(frozen=True, eq=False)
class DepthMap:
    values: np.ndarray

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def height(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True, eq=False)
class InstanceMap:
    values: np.ndarray

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    def instance_ids(self) -> List[int]:
        return [int(i) for i in np.unique(self.values) if i > 0]


class SceneRenderer:
    """
    Merged BVH over posed objects, reusable across cameras

    Instance ids are 1-based positions in the object list.
    """

    def __init__(self, scene: SceneObjects):
        self.object_count = len(scene)
        if all(mesh.is_empty for mesh, _ in scene):
            self._bvh: Optional[MeshBVH] = None
            self._face_instance = np.zeros(0, dtype=np.int64)
            return
        posed = [mesh.transformed(pose) for mesh, pose in scene]
        self._face_instance = np.concatenate(
            [np.full(len(m.faces), i + 1, dtype=np.int64) for i, m in enumerate(posed)]
        )
        self._bvh = MeshBVH(TriangleMesh.concatenate(posed))

    def render(self, camera: Camera) -> Tuple[DepthMap, InstanceMap]:
        shape = (camera.height, camera.width)
        if self._bvh is None:
            return DepthMap(np.zeros(shape)), InstanceMap(np.zeros(shape, dtype=np.uint16))
        origins, directions = camera.pixel_rays()
        hits = self._bvh.raycast_many(origins, directions)
        depth = np.where(hits.hit, hits.t, 0.0)
        instance = np.zeros(len(depth), dtype=np.uint16)
        instance[hits.hit] = self._face_instance[hits.face_ids[hits.hit]]
        return DepthMap(depth.reshape(shape)), InstanceMap(instance.reshape(shape))


def render_depth(scene: SceneObjects, camera: Camera) -> Tuple[DepthMap, InstanceMap]:
    """Depth and instance maps of posed objects seen from one camera"""
    return SceneRenderer(scene).render(camera)


def render_views(
    scene: SceneObjects, cameras: Sequence[Camera], threads: int = 1
) -> List[Tuple[DepthMap, InstanceMap]]:
    """Render several cameras against one merged BVH, in camera order"""
    renderer = SceneRenderer(scene)
    if threads <= 1 or len(cameras) <= 1:
        return [renderer.render(camera) for camera in cameras]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(renderer.render, cameras))


# Files -------------------------------------------------------------------


def save_depth(depth: DepthMap, path: PathLike) -> None:
    header = DEPTH_MAGIC + f"\n{depth.width} {depth.height}\n".encode("ascii")
    Path(path).write_bytes(header + depth.values.astype("<f4").tobytes())


def load_depth(path: PathLike) -> DepthMap:
    data = Path(path).read_bytes()
    lines = data.split(b"\n", 2)
    if len(lines) < 3 or lines[0] != DEPTH_MAGIC:
        raise ParseError(f"{path}: not a DEPTHMAP v1 file")
    try:
        width, height = (int(x) for x in lines[1].split())
    except ValueError:
        raise ParseError(f"{path}: malformed resolution line")
    body = lines[2]
    if len(body) != 4 * width * height:
        raise ParseError(f"{path}: expected {4 * width * height} bytes of depth, found {len(body)}")
    return DepthMap(np.frombuffer(body, dtype="<f4").astype(np.float64).reshape(height, width))


def save_instances(instances: InstanceMap, path: PathLike) -> None:
    header = f"P5\n{instances.width} {instances.height}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + instances.values.astype(">u2").tobytes())


def load_instances(path: PathLike) -> InstanceMap:
    data = Path(path).read_bytes()
    fields, cursor = [], 0
    while len(fields) < 4:
        while cursor < len(data) and data[cursor : cursor + 1].isspace():
            cursor += 1
        end = cursor
        while end < len(data) and not data[end : end + 1].isspace():
            end += 1
        if end == cursor:
            raise ParseError(f"{path}: truncated PGM header")
        fields.append(data[cursor:end])
        cursor = end
    if fields[0] != b"P5" or fields[3] != b"65535":
        raise ParseError(f"{path}: not a 16-bit binary PGM")
    try:
        width, height = int(fields[1]), int(fields[2])
    except ValueError:
        raise ParseError(f"{path}: malformed PGM resolution")
    body = data[cursor + 1 :]
    if len(body) != 2 * width * height:
        raise ParseError(f"{path}: expected {2 * width * height} bytes of pixels, found {len(body)}")
    return InstanceMap(np.frombuffer(body, dtype=">u2").astype(np.uint16).reshape(height, width))
