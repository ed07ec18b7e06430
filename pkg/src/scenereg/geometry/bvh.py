"""Bounding-volume hierarchy over mesh faces

The tree is stored as flat arrays. Queries are answered for whole batches at
once by advancing a frontier of (query, node) pairs one level per step, so
every kernel call is a vectorized numpy operation.
"""

import logging
from typing import NamedTuple, Optional

import numpy as np
from scipy.spatial import cKDTree

from ..errors import EmptyMesh
from .mesh import TriangleMesh
from .triangles import (
    RAY_EPSILON,
    closest_point_on_triangles,
    point_aabb_distance_sq,
    ray_aabb_intersect,
    ray_triangle_intersect,
)

logger = logging.getLogger(__name__)

DEFAULT_LEAF_SIZE = 8
QUERY_CHUNK = 4096


class ClosestPointResult(NamedTuple):
    points: np.ndarray
    face_ids: np.ndarray
    distances: np.ndarray


class ClosestPoint(NamedTuple):
    point: np.ndarray
    face_id: int
    distance: float


class RayHits(NamedTuple):
    """Nearest hit per ray; ``t`` is ``inf`` and ``face_ids`` -1 on a miss"""

    t: np.ndarray
    face_ids: np.ndarray

    @property
    def hit(self) -> np.ndarray:
        return np.isfinite(self.t)


class RayHit(NamedTuple):
    t: float
    face_id: int


class Crossings(NamedTuple):
    """All surface crossings of a batch of rays, sorted by ray then ``t``"""

    ray_ids: np.ndarray
    t: np.ndarray
    entering: np.ndarray


def _reduce_min(groups: np.ndarray, values: np.ndarray, faces: np.ndarray):
    """Per-group minimum of ``values``; ties resolved to the smallest face id"""
    order = np.lexsort((faces, values, groups))
    groups, values, faces = groups[order], values[order], faces[order]
    first = np.ones(len(groups), dtype=bool)
    first[1:] = groups[1:] != groups[:-1]
    return order[first], groups[first], values[first], faces[first]


class MeshBVH:
    """
    Median-split AABB tree over the faces of a mesh

    Args:
        mesh: Non-empty triangle mesh
        leaf_size: Maximum number of faces per leaf
    """

    def __init__(self, mesh: TriangleMesh, leaf_size: int = DEFAULT_LEAF_SIZE):
        if mesh.is_empty:
            raise EmptyMesh("Cannot build a BVH over an empty mesh")
        self.mesh = mesh
        self.leaf_size = max(1, int(leaf_size))
        tri = mesh.triangles
        self._a = np.ascontiguousarray(tri[:, 0])
        self._b = np.ascontiguousarray(tri[:, 1])
        self._c = np.ascontiguousarray(tri[:, 2])
        self._build(tri)
        self._centroid_tree = cKDTree(mesh.face_centroids)
        lo, hi = mesh.bounds
        self.scale = float(max(1.0, np.linalg.norm(hi - lo)))

    def _build(self, tri: np.ndarray) -> None:
        n_faces = len(tri)
        tri_min = tri.min(axis=1)
        tri_max = tri.max(axis=1)
        centroids = tri.mean(axis=1)
        lo, hi = tri_min.min(axis=0), tri_max.max(axis=0)
        pad = 1e-9 * max(1.0, float(np.linalg.norm(hi - lo)))

        order = np.arange(n_faces)
        node_min, node_max, left, right, start, count = [], [], [], [], [], []

        def build(begin: int, end: int) -> int:
            index = len(start)
            faces = order[begin:end]
            node_min.append(tri_min[faces].min(axis=0) - pad)
            node_max.append(tri_max[faces].max(axis=0) + pad)
            left.append(-1)
            right.append(-1)
            start.append(begin)
            count.append(end - begin)
            if end - begin <= self.leaf_size:
                return index
            c = centroids[faces]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            order[begin:end] = faces[np.argsort(c[:, axis], kind="stable")]
            mid = begin + (end - begin) // 2
            left[index] = build(begin, mid)
            right[index] = build(mid, end)
            count[index] = 0
            return index

        build(0, n_faces)
        self._order = order
        self.node_min = np.asarray(node_min)
        self.node_max = np.asarray(node_max)
        self._left = np.asarray(left, dtype=np.int64)
        self._right = np.asarray(right, dtype=np.int64)
        self._start = np.asarray(start, dtype=np.int64)
        self._count = np.asarray(count, dtype=np.int64)
        logger.debug("Built BVH: %d faces, %d nodes", n_faces, len(start))

    @property
    def node_count(self) -> int:
        return len(self._start)

    def leaves(self):
        """Face index arrays of every leaf, in node order"""
        for node in np.flatnonzero(self._left < 0):
            yield self._order[self._start[node] : self._start[node] + self._count[node]]

    def _expand_leaves(self, queries: np.ndarray, nodes: np.ndarray):
        counts = self._count[nodes]
        rep = np.repeat(queries, counts)
        base = np.repeat(self._start[nodes], counts)
        within = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        return rep, self._order[base + within]

    def _descend(self, queries: np.ndarray, nodes: np.ndarray):
        return np.concatenate([queries, queries]), np.concatenate([self._left[nodes], self._right[nodes]])

    # Closest point ---------------------------------------------------------

    def closest_points(self, queries) -> ClosestPointResult:
        """Closest surface point, face and distance for each query row"""
        queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        points = np.empty_like(queries)
        faces = np.empty(len(queries), dtype=np.int64)
        dist = np.empty(len(queries))
        for lo in range(0, len(queries), QUERY_CHUNK):
            chunk = slice(lo, lo + QUERY_CHUNK)
            points[chunk], faces[chunk], dist[chunk] = self._closest_chunk(queries[chunk])
        return ClosestPointResult(points, faces, dist)

    def _closest_chunk(self, q: np.ndarray):
        n = len(q)
        _, seed_face = self._centroid_tree.query(q)
        seed_face = np.asarray(seed_face, dtype=np.int64)
        best_point = closest_point_on_triangles(q, self._a[seed_face], self._b[seed_face], self._c[seed_face])
        best_d2 = np.einsum("ij,ij->i", q - best_point, q - best_point)
        best_face = seed_face.copy()

        fq = np.arange(n)
        fn = np.zeros(n, dtype=np.int64)
        while len(fq):
            d2 = point_aabb_distance_sq(q[fq], self.node_min[fn], self.node_max[fn])
            keep = d2 <= best_d2[fq]
            fq, fn = fq[keep], fn[keep]
            leaf = self._left[fn] < 0
            if np.any(leaf):
                rq, rf = self._expand_leaves(fq[leaf], fn[leaf])
                cand = closest_point_on_triangles(q[rq], self._a[rf], self._b[rf], self._c[rf])
                diff = q[rq] - cand
                cd2 = np.einsum("ij,ij->i", diff, diff)
                idx, groups, vals, gfaces = _reduce_min(rq, cd2, rf)
                better = (vals < best_d2[groups]) | ((vals == best_d2[groups]) & (gfaces < best_face[groups]))
                g = groups[better]
                best_d2[g] = vals[better]
                best_face[g] = gfaces[better]
                best_point[g] = cand[idx[better]]
            fq, fn = self._descend(fq[~leaf], fn[~leaf])
        return best_point, best_face, np.sqrt(best_d2)

    def closest_point(self, query) -> ClosestPoint:
        result = self.closest_points(np.asarray(query, dtype=np.float64).reshape(1, 3))
        return ClosestPoint(result.points[0], int(result.face_ids[0]), float(result.distances[0]))

    # Rays ------------------------------------------------------------------

    def raycast_many(self, origins, directions, t_min: float = RAY_EPSILON) -> RayHits:
        """Nearest intersection with ``t > t_min`` for each ray"""
        origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
        directions = np.broadcast_to(np.asarray(directions, dtype=np.float64), origins.shape)
        t = np.empty(len(origins))
        faces = np.empty(len(origins), dtype=np.int64)
        for lo in range(0, len(origins), QUERY_CHUNK):
            chunk = slice(lo, lo + QUERY_CHUNK)
            t[chunk], faces[chunk] = self._raycast_chunk(origins[chunk], directions[chunk], t_min)
        return RayHits(t, faces)

    def _raycast_chunk(self, o: np.ndarray, d: np.ndarray, t_min: float):
        n = len(o)
        with np.errstate(divide="ignore"):
            inv = 1.0 / d
        best_t = np.full(n, np.inf)
        best_face = np.full(n, -1, dtype=np.int64)

        fq = np.arange(n)
        fn = np.zeros(n, dtype=np.int64)
        while len(fq):
            keep = ray_aabb_intersect(o[fq], inv[fq], self.node_min[fn], self.node_max[fn], best_t[fq])
            fq, fn = fq[keep], fn[keep]
            leaf = self._left[fn] < 0
            if np.any(leaf):
                rq, rf = self._expand_leaves(fq[leaf], fn[leaf])
                th = ray_triangle_intersect(o[rq], d[rq], self._a[rf], self._b[rf], self._c[rf], t_min)
                hit = np.isfinite(th)
                if np.any(hit):
                    _, groups, vals, gfaces = _reduce_min(rq[hit], th[hit], rf[hit])
                    better = (vals < best_t[groups]) | ((vals == best_t[groups]) & (gfaces < best_face[groups]))
                    best_t[groups[better]] = vals[better]
                    best_face[groups[better]] = gfaces[better]
            fq, fn = self._descend(fq[~leaf], fn[~leaf])
        return best_t, best_face

    def raycast(self, origin, direction) -> Optional[RayHit]:
        direction = np.asarray(direction, dtype=np.float64).reshape(3)
        if not np.any(direction):
            raise ValueError("Ray direction must be non-zero")
        hits = self.raycast_many(np.asarray(origin, dtype=np.float64).reshape(1, 3), direction.reshape(1, 3))
        if not hits.hit[0]:
            return None
        return RayHit(float(hits.t[0]), int(hits.face_ids[0]))

    def crossings(self, origins, directions, merge_tol: Optional[float] = None) -> Crossings:
        """
        Every intersection of each ray with the surface

        Hits of one ray at the same depth and with the same orientation (a ray
        through a shared edge or vertex) are merged into one crossing.
        """
        origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
        directions = np.broadcast_to(np.asarray(directions, dtype=np.float64), origins.shape)
        merge_tol = 1e-9 * self.scale if merge_tol is None else merge_tol
        with np.errstate(divide="ignore"):
            inv = 1.0 / directions
        ray_ids, ts, faces = [], [], []

        fq = np.arange(len(origins))
        fn = np.zeros(len(origins), dtype=np.int64)
        unbounded = np.full(len(origins), np.inf)
        while len(fq):
            keep = ray_aabb_intersect(origins[fq], inv[fq], self.node_min[fn], self.node_max[fn], unbounded[fq])
            fq, fn = fq[keep], fn[keep]
            leaf = self._left[fn] < 0
            if np.any(leaf):
                rq, rf = self._expand_leaves(fq[leaf], fn[leaf])
                th = ray_triangle_intersect(origins[rq], directions[rq], self._a[rf], self._b[rf], self._c[rf])
                hit = np.isfinite(th)
                ray_ids.append(rq[hit])
                ts.append(th[hit])
                faces.append(rf[hit])
            fq, fn = self._descend(fq[~leaf], fn[~leaf])

        if not ray_ids:
            empty = np.zeros(0)
            return Crossings(empty.astype(np.int64), empty, empty.astype(bool))
        ray_ids = np.concatenate(ray_ids)
        ts = np.concatenate(ts)
        faces = np.concatenate(faces)
        entering = np.einsum("ij,ij->i", directions[ray_ids], self.mesh.face_normals[faces]) < 0

        order = np.lexsort((ts, entering, ray_ids))
        ray_ids, ts, entering = ray_ids[order], ts[order], entering[order]
        duplicate = np.zeros(len(ts), dtype=bool)
        duplicate[1:] = (
            (ray_ids[1:] == ray_ids[:-1]) & (entering[1:] == entering[:-1]) & (np.diff(ts) <= merge_tol)
        )
        ray_ids, ts, entering = ray_ids[~duplicate], ts[~duplicate], entering[~duplicate]
        order = np.lexsort((ts, ray_ids))
        return Crossings(ray_ids[order], ts[order], entering[order])

    def count_crossings(self, origins, directions) -> np.ndarray:
        origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
        result = self.crossings(origins, directions)
        return np.bincount(result.ray_ids, minlength=len(origins))

    def points_inside(self, points) -> np.ndarray:
        """Ray-parity inside test along +x, +y, +z with a majority vote"""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        votes = np.zeros(len(points), dtype=np.int64)
        for axis in range(3):
            direction = np.zeros(3)
            direction[axis] = 1.0
            votes += self.count_crossings(points, direction) % 2
        return votes >= 2


def closest_point(bvh: MeshBVH, query) -> ClosestPoint:
    return bvh.closest_point(query)


def raycast(bvh: MeshBVH, origin, direction) -> Optional[RayHit]:
    return bvh.raycast(origin, direction)


def points_inside(target, points) -> np.ndarray:
    """Inside test against a mesh or a prebuilt BVH"""
    bvh = target if isinstance(target, MeshBVH) else MeshBVH(target)
    return bvh.points_inside(points)
