"""Solid voxelization by scanline ray parity"""

import logging
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from ..errors import DegenerateMesh
from .bvh import MeshBVH
from .mesh import TriangleMesh

logger = logging.getLogger(__name__)

MeshLike = Union[TriangleMesh, MeshBVH]


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """
    Occupancy on a regular lattice

    ``occupancy[i, j, k]`` is the voxel whose center is
    ``origin + (i + 0.5, j + 0.5, k + 0.5) * voxel_size``.
    """

    origin: np.ndarray
    voxel_size: float
    occupancy: np.ndarray

    def __post_init__(self):
        if not self.voxel_size > 0:
            raise ValueError(f"Voxel size must be positive, got {self.voxel_size}")
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64).reshape(3))
        object.__setattr__(self, "occupancy", np.asarray(self.occupancy, dtype=bool))

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(d) for d in self.occupancy.shape)

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.occupancy))

    @property
    def volume(self) -> float:
        return self.count * self.voxel_size**3

    def bitset(self) -> bytes:
        """Occupancy packed row-major, eight voxels per byte"""
        return np.packbits(self.occupancy.ravel()).tobytes()

    def centers(self) -> np.ndarray:
        """Centers of the occupied voxels"""
        return self.origin + (np.argwhere(self.occupancy) + 0.5) * self.voxel_size

    def lookup(self, points) -> np.ndarray:
        """Occupancy of the voxel containing each point; False outside the grid"""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        idx = np.floor((points - self.origin) / self.voxel_size).astype(np.int64)
        valid = np.all((idx >= 0) & (idx < np.asarray(self.dims)), axis=1)
        result = np.zeros(len(points), dtype=bool)
        i, j, k = idx[valid].T
        result[valid] = self.occupancy[i, j, k]
        return result

    def with_occupancy(self, occupancy: np.ndarray) -> "VoxelGrid":
        return VoxelGrid(self.origin, self.voxel_size, occupancy)


def grid_for_bounds(lo, hi, voxel_size: float, padding: int = 0):
    """Origin and dims of a lattice covering ``[lo, hi]`` plus padding voxels"""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    extent = hi - lo
    dims = np.maximum(1, np.ceil(extent / voxel_size - 1e-9).astype(np.int64)) + 2 * padding
    origin = lo - padding * voxel_size
    return origin, tuple(int(d) for d in dims)


def voxelize_on_grid(target: MeshLike, origin, voxel_size: float, dims) -> VoxelGrid:
    """
    Occupancy of a mesh on a given lattice

    One ray per grid line and axis collects every surface crossing; a voxel is
    inside along that axis when an odd number of crossings precede its
    center. The three per-axis answers are combined by majority vote.
    """
    if not voxel_size > 0:
        raise ValueError(f"Voxel size must be positive, got {voxel_size}")
    bvh = target if isinstance(target, MeshBVH) else MeshBVH(target)
    origin = np.asarray(origin, dtype=np.float64).reshape(3)
    dims = tuple(int(d) for d in dims)
    lo, hi = bvh.mesh.bounds
    votes = np.zeros(dims, dtype=np.int8)

    for axis in range(3):
        b, c = [a for a in range(3) if a != axis]
        centers_b = origin[b] + (np.arange(dims[b]) + 0.5) * voxel_size
        centers_c = origin[c] + (np.arange(dims[c]) + 0.5) * voxel_size
        jb = np.flatnonzero((centers_b >= lo[b]) & (centers_b <= hi[b]))
        kc = np.flatnonzero((centers_c >= lo[c]) & (centers_c <= hi[c]))
        if len(jb) == 0 or len(kc) == 0:
            continue
        JB, KC = np.meshgrid(jb, kc, indexing="ij")
        JB, KC = JB.ravel(), KC.ravel()

        origins = np.zeros((len(JB), 3))
        origins[:, b] = centers_b[JB]
        origins[:, c] = centers_c[KC]
        origins[:, axis] = lo[axis] - voxel_size
        direction = np.zeros(3)
        direction[axis] = 1.0
        crossings = bvh.crossings(origins, direction)

        n_axis = dims[axis]
        position = origins[crossings.ray_ids, axis] + crossings.t
        first_after = np.floor((position - origin[axis]) / voxel_size - 0.5).astype(np.int64) + 1
        first_after = np.clip(first_after, 0, n_axis)
        toggles = np.zeros((len(JB), n_axis + 1), dtype=np.int32)
        np.add.at(toggles, (crossings.ray_ids, first_after), 1)
        parity = (np.cumsum(toggles[:, :n_axis], axis=1) % 2).astype(np.int8)

        index = [None, None, None]
        index[b] = JB[:, None]
        index[c] = KC[:, None]
        index[axis] = np.arange(n_axis)[None, :]
        votes[tuple(index)] += parity

    return VoxelGrid(origin, voxel_size, votes >= 2)


def voxelize_solid(target: MeshLike, voxel_size: float, padding: int = 0) -> VoxelGrid:
    """Solid voxelization on a lattice anchored at the mesh bounding box"""
    mesh = target.mesh if isinstance(target, MeshBVH) else target
    lo, hi = mesh.bounds
    if np.linalg.norm(hi - lo) <= 0:
        raise DegenerateMesh("Cannot voxelize a mesh with zero-extent bounding box")
    origin, dims = grid_for_bounds(lo, hi, voxel_size, padding)
    grid = voxelize_on_grid(target, origin, voxel_size, dims)
    logger.debug("Voxelized %d faces into %s grid, %d occupied", len(mesh.faces), dims, grid.count)
    return grid
