"""Indexed triangle meshes and area-uniform surface sampling"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Sequence, Tuple

import numpy as np

from ..errors import DegenerateMesh, EmptyMesh
from ..rng import SeedLike, make_rng

logger = logging.getLogger(__name__)

MIN_FACE_AREA = 1e-12


def _face_cross(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    tri = vertices[faces]
    return np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """
    Triangle surface in millimeters

    Vertices are float64 ``(V, 3)``, faces int64 ``(F, 3)`` with
    counter-clockwise winding around the outward normal. Arrays are read-only
    once the mesh is built.
    """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        faces = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(faces):
            if faces.min() < 0 or faces.max() >= len(vertices):
                raise DegenerateMesh(f"Face index out of range for {len(vertices)} vertices")
            areas = 0.5 * np.linalg.norm(_face_cross(vertices, faces), axis=1)
            bad = np.flatnonzero(areas <= MIN_FACE_AREA)
            if len(bad):
                raise DegenerateMesh(f"{len(bad)} degenerate faces (first: {int(bad[0])})")
        vertices.setflags(write=False)
        faces.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "faces", faces)

    @classmethod
    def from_soup(cls, vertices, faces) -> "TriangleMesh":
        """Build a mesh, dropping zero-area faces instead of rejecting them"""
        vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
        faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        if len(faces):
            keep = 0.5 * np.linalg.norm(_face_cross(vertices, faces), axis=1) > MIN_FACE_AREA
            dropped = int(np.count_nonzero(~keep))
            if dropped:
                logger.warning("Dropped %d degenerate faces", dropped)
            faces = faces[keep]
        return cls(vertices, faces)

    @classmethod
    def concatenate(cls, meshes: Sequence["TriangleMesh"]) -> "TriangleMesh":
        vertices, faces, offset = [], [], 0
        for mesh in meshes:
            vertices.append(mesh.vertices)
            faces.append(mesh.faces + offset)
            offset += len(mesh.vertices)
        if not vertices:
            return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
        return cls(np.concatenate(vertices), np.concatenate(faces))

    def __len__(self) -> int:
        return len(self.faces)

    @property
    def is_empty(self) -> bool:
        return len(self.faces) == 0

    @property
    def triangles(self) -> np.ndarray:
        """Face corner coordinates ``(F, 3, 3)``"""
        return self.vertices[self.faces]

    @cached_property
    def _cross(self) -> np.ndarray:
        return _face_cross(self.vertices, self.faces)

    @cached_property
    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self._cross, axis=1)

    @cached_property
    def face_normals(self) -> np.ndarray:
        return self._cross / (2.0 * self.face_areas[:, None])

    @cached_property
    def face_centroids(self) -> np.ndarray:
        return self.triangles.mean(axis=1)

    @cached_property
    def vertex_normals(self) -> np.ndarray:
        """Area-weighted average of adjacent face normals"""
        acc = np.zeros_like(self.vertices)
        for corner in range(3):
            np.add.at(acc, self.faces[:, corner], self._cross)
        norm = np.linalg.norm(acc, axis=1, keepdims=True)
        return np.divide(acc, norm, out=np.zeros_like(acc), where=norm > 0)

    @property
    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        if len(self.vertices) == 0:
            raise EmptyMesh("Mesh has no vertices")
        used = self.vertices[np.unique(self.faces)] if len(self.faces) else self.vertices
        return used.min(axis=0), used.max(axis=0)

    @property
    def diameter(self) -> float:
        """Bounding-box diagonal"""
        lo, hi = self.bounds
        return float(np.linalg.norm(hi - lo))

    def surface_area(self) -> float:
        return float(self.face_areas.sum())

    def volume(self) -> float:
        """Signed enclosed volume; positive for closed meshes with outward normals"""
        tri = self.triangles
        return float(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])).sum() / 6.0)

    def surface_centroid(self) -> np.ndarray:
        """Area-weighted centroid of the surface"""
        if self.is_empty:
            raise EmptyMesh("Mesh has no faces")
        return (self.face_centroids * self.face_areas[:, None]).sum(axis=0) / self.surface_area()

    def transformed(self, transform) -> "TriangleMesh":
        """Copy with vertices mapped through a pose; faces unchanged"""
        return TriangleMesh(transform.apply(self.vertices), self.faces)

    def sample_surface(self, count: int, seed: SeedLike) -> "SurfaceSamples":
        return sample_surface(self, count, seed)


@dataclass(frozen=True)
class SurfaceSample:
    point: np.ndarray
    normal: np.ndarray
    face_id: int
    weight: float


@dataclass(frozen=True, eq=False)
class SurfaceSamples:
    """Columnar surface samples; ``weights`` sum to the sampled surface area"""

    points: np.ndarray
    normals: np.ndarray
    face_ids: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.points)

    def __getitem__(self, index: int) -> SurfaceSample:
        return SurfaceSample(
            point=self.points[index],
            normal=self.normals[index],
            face_id=int(self.face_ids[index]),
            weight=float(self.weights[index]),
        )

    def __iter__(self) -> Iterator[SurfaceSample]:
        return (self[i] for i in range(len(self)))

    def subset(self, mask) -> "SurfaceSamples":
        return SurfaceSamples(self.points[mask], self.normals[mask], self.face_ids[mask], self.weights[mask])

    def transformed(self, transform) -> "SurfaceSamples":
        """Samples carried through a pose; weights scale with sigma squared"""
        return SurfaceSamples(
            transform.apply(self.points),
            transform.rotate(self.normals),
            self.face_ids,
            self.weights * transform.sigma**2,
        )


def sample_surface(mesh: TriangleMesh, count: int, seed: SeedLike) -> SurfaceSamples:
    """
    Draw ``count`` area-uniform samples from the mesh surface

    Faces are picked with probability proportional to their area and points
    are uniform inside the face (reflected barycentric pair). Each sample
    carries the face normal and an equal share of the total area.
    """
    if count < 1:
        raise ValueError(f"Sample count must be at least 1, got {count}")
    if mesh.is_empty:
        raise EmptyMesh("Cannot sample a mesh without faces")

    rng = make_rng(seed)
    cdf = np.cumsum(mesh.face_areas)
    total = cdf[-1]
    face_ids = np.searchsorted(cdf, rng.random(count) * total, side="right")
    face_ids = np.minimum(face_ids, len(cdf) - 1)

    uv = rng.random((count, 2))
    flip = uv.sum(axis=1) > 1.0
    uv[flip] = 1.0 - uv[flip]

    tri = mesh.triangles[face_ids]
    points = tri[:, 0] + uv[:, :1] * (tri[:, 1] - tri[:, 0]) + uv[:, 1:] * (tri[:, 2] - tri[:, 0])
    normals = mesh.face_normals[face_ids]
    weights = np.full(count, total / count)
    return SurfaceSamples(points, normals, face_ids.astype(np.int64), weights)


def sample_by_density(mesh: TriangleMesh, density: float, seed: SeedLike, minimum: int = 1) -> SurfaceSamples:
    """Sample at ``density`` points per mm² of surface"""
    count = max(minimum, int(np.ceil(mesh.surface_area() * density)))
    return sample_surface(mesh, count, seed)
