"""Parametric watertight meshes (millimeters, outward normals)

Revolved shapes stand on the z=0 plane with their axis on z.
"""

import math
from typing import Sequence, Tuple

import numpy as np

from .mesh import TriangleMesh

_BOX_FACES = np.array(
    [
        [0, 2, 1], [1, 2, 3],
        [4, 5, 6], [5, 7, 6],
        [0, 1, 5], [0, 5, 4],
        [2, 6, 7], [2, 7, 3],
        [0, 4, 6], [0, 6, 2],
        [1, 3, 7], [1, 7, 5],
    ]
)


def box(extents: Sequence[float], center: Sequence[float] = (0.0, 0.0, 0.0)) -> TriangleMesh:
    """Axis-aligned box with 8 vertices and 12 faces"""
    extents = np.asarray(extents, dtype=np.float64)
    bits = np.array([[i & 1, (i >> 1) & 1, (i >> 2) & 1] for i in range(8)], dtype=np.float64)
    vertices = (bits - 0.5) * extents + np.asarray(center, dtype=np.float64)
    return TriangleMesh(vertices, _BOX_FACES)


def square(size: float, z: float = 0.0, center: Sequence[float] = (0.0, 0.0)) -> TriangleMesh:
    """Open square facing +z"""
    h = size / 2.0
    cx, cy = center
    vertices = [[cx - h, cy - h, z], [cx + h, cy - h, z], [cx + h, cy + h, z], [cx - h, cy + h, z]]
    return TriangleMesh(vertices, [[0, 1, 2], [0, 2, 3]])


def revolve(profile: Sequence[Tuple[float, float]], segments: int = 48, phase: float = 0.0) -> TriangleMesh:
    """
    Closed surface of revolution around the z axis

    ``profile`` is a polyline of (radius, z) pairs that starts and ends on
    the axis (radius 0); interior points must have positive radius.
    """
    profile = np.asarray(profile, dtype=np.float64)
    if len(profile) < 3 or profile[0, 0] != 0 or profile[-1, 0] != 0:
        raise ValueError("Profile must start and end on the axis")
    if np.any(profile[1:-1, 0] <= 0):
        raise ValueError("Interior profile points need a positive radius")

    angles = phase + 2.0 * math.pi * np.arange(segments) / segments
    ring_r = profile[1:-1, 0]
    ring_z = profile[1:-1, 1]
    rings = np.stack(
        [
            np.outer(ring_r, np.cos(angles)),
            np.outer(ring_r, np.sin(angles)),
            np.repeat(ring_z[:, None], segments, axis=1),
        ],
        axis=-1,
    ).reshape(-1, 3)
    bottom = len(rings)
    top = bottom + 1
    vertices = np.vstack([rings, [[0.0, 0.0, profile[0, 1]]], [[0.0, 0.0, profile[-1, 1]]]])

    n_rings = len(ring_r)
    j = np.arange(segments)
    jn = (j + 1) % segments
    faces = [np.stack([np.full(segments, bottom), jn, j], axis=1)]
    for k in range(n_rings - 1):
        a = k * segments + j
        b = k * segments + jn
        c = (k + 1) * segments + jn
        d = (k + 1) * segments + j
        faces.append(np.stack([a, b, c], axis=1))
        faces.append(np.stack([a, c, d], axis=1))
    last = (n_rings - 1) * segments
    faces.append(np.stack([last + j, last + jn, np.full(segments, top)], axis=1))
    faces = np.concatenate(faces)

    mesh = TriangleMesh(vertices, faces)
    if mesh.volume() < 0:
        mesh = TriangleMesh(vertices, faces[:, ::-1])
    return mesh


def uv_sphere(radius: float, segments: int = 48, rings: int = 24, center: Sequence[float] = (0.0, 0.0, 0.0)) -> TriangleMesh:
    """Sphere centered at ``center``"""
    theta = np.linspace(-math.pi / 2, math.pi / 2, rings + 1)
    profile = np.column_stack([radius * np.cos(theta), radius * np.sin(theta)])
    profile[0, 0] = profile[-1, 0] = 0.0
    mesh = revolve(profile, segments)
    return TriangleMesh(mesh.vertices + np.asarray(center, dtype=np.float64), mesh.faces)


def cylinder(radius: float, height: float, segments: int = 48) -> TriangleMesh:
    """Closed cylinder standing on z=0"""
    return revolve([(0.0, 0.0), (radius, 0.0), (radius, height), (0.0, height)], segments)


def cup(radius: float, height: float, wall: float, base: float = None, segments: int = 48) -> TriangleMesh:
    """Open-topped cylindrical cup with side wall ``wall`` and floor ``base``"""
    base = wall if base is None else base
    inner = radius - wall
    return revolve(
        [(0.0, 0.0), (radius, 0.0), (radius, height), (inner, height), (inner, base), (0.0, base)],
        segments,
    )


def open_box(extents: Sequence[float], wall: float, base: float = None) -> TriangleMesh:
    """Open-topped square tray; ``extents`` are outer (x, y, z) sizes, x = y"""
    base = wall if base is None else base
    half, height = extents[0] / 2.0, extents[2]
    outer = half * math.sqrt(2.0)
    inner = (half - wall) * math.sqrt(2.0)
    return revolve(
        [(0.0, 0.0), (outer, 0.0), (outer, height), (inner, height), (inner, base), (0.0, base)],
        segments=4,
        phase=math.pi / 4,
    )


def bowl(radius: float, wall: float, segments: int = 48, rings: int = 16) -> TriangleMesh:
    """Hemispherical shell, outer radius ``radius``, rim at z = radius"""
    inner = radius - wall
    theta = np.linspace(-math.pi / 2, 0.0, rings + 1)
    outer_arc = np.column_stack([radius * np.cos(theta), radius * np.sin(theta)])
    inner_arc = np.column_stack([inner * np.cos(theta[::-1]), inner * np.sin(theta[::-1])])
    profile = np.vstack([outer_arc, inner_arc])
    profile[0, 0] = profile[-1, 0] = 0.0
    profile[:, 1] += radius
    return revolve(profile, segments)


def plate(radius: float, height: float, thickness: float, segments: int = 48) -> TriangleMesh:
    """Shallow dish with a flat well and a raised rim"""
    well = 0.65 * radius
    return revolve(
        [
            (0.0, 0.0),
            (well, 0.0),
            (radius, height),
            (radius - thickness, height),
            (well - thickness, thickness),
            (0.0, thickness),
        ],
        segments,
    )


def pitcher(radius: float, height: float, wall: float, segments: int = 48) -> TriangleMesh:
    """Tall vessel with a narrowed neck and flared lip"""
    neck = 0.8 * radius
    lip = 0.95 * radius
    return revolve(
        [
            (0.0, 0.0),
            (radius, 0.0),
            (radius, 0.7 * height),
            (neck, 0.85 * height),
            (lip, height),
            (lip - wall, height),
            (neck - wall, 0.85 * height),
            (radius - wall, 0.7 * height),
            (radius - wall, wall),
            (0.0, wall),
        ],
        segments,
    )
