"""Vectorized per-triangle kernels

All functions take row-aligned arrays: query ``i`` is tested against triangle
``(a[i], b[i], c[i])``. Callers broadcast queries against candidate faces.
"""

import numpy as np

RAY_EPSILON = 1e-9


def _dot(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", u, v)


def closest_point_on_triangles(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """
    Closest point on each triangle to each query point

    Region tests follow Ericson's ClosestPtPointTriangle, evaluated for all
    rows at once; the first matching region wins (A, B, AB, C, AC, BC,
    interior).
    """
    p, a, b, c = (np.asarray(x, dtype=np.float64) for x in (p, a, b, c))
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = _dot(ab, ap)
    d2 = _dot(ac, ap)

    bp = p - b
    d3 = _dot(ab, bp)
    d4 = _dot(ac, bp)

    cp = p - c
    d5 = _dot(ab, cp)
    d6 = _dot(ac, cp)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    result = np.empty_like(p)
    done = np.zeros(len(p), dtype=bool)

    def assign(mask, values):
        nonlocal done
        take = mask & ~done
        if np.any(take):
            result[take] = values[take] if values.ndim == 2 else values
        done |= take

    with np.errstate(divide="ignore", invalid="ignore"):
        assign((d1 <= 0) & (d2 <= 0), a)
        assign((d3 >= 0) & (d4 <= d3), b)
        v_ab = d1 / (d1 - d3)
        assign((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v_ab[:, None] * ab)
        assign((d6 >= 0) & (d5 <= d6), c)
        w_ac = d2 / (d2 - d6)
        assign((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w_ac[:, None] * ac)
        w_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        assign((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), b + w_bc[:, None] * (c - b))

        # interior
        denom = 1.0 / (va + vb + vc)
        v = vb * denom
        w = vc * denom
        assign(np.ones(len(p), dtype=bool), a + v[:, None] * ab + w[:, None] * ac)
    return result


def ray_triangle_intersect(
    origins: np.ndarray,
    directions: np.ndarray,
    a: np.ndarray,
    b: np.ndarray,
    c: np.ndarray,
    t_min: float = RAY_EPSILON,
) -> np.ndarray:
    """
    Möller–Trumbore intersection for row-aligned rays and triangles

    Returns the ray parameter per row, ``inf`` where the ray misses or the hit
    lies at ``t <= t_min``.
    """
    e1 = b - a
    e2 = c - a
    pvec = np.cross(directions, e2)
    det = _dot(e1, pvec)
    scale = np.maximum(np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1), 1e-300)
    scale = scale * np.linalg.norm(directions, axis=1)
    parallel = np.abs(det) <= 1e-14 * scale

    with np.errstate(divide="ignore", invalid="ignore"):
        inv_det = 1.0 / det
        tvec = origins - a
        u = _dot(tvec, pvec) * inv_det
        qvec = np.cross(tvec, e1)
        v = _dot(directions, qvec) * inv_det
        t = _dot(e2, qvec) * inv_det

    hit = ~parallel & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > t_min)
    return np.where(hit, t, np.inf)


def ray_aabb_intersect(
    origins: np.ndarray,
    inv_directions: np.ndarray,
    box_min: np.ndarray,
    box_max: np.ndarray,
    t_max: np.ndarray,
) -> np.ndarray:
    """Slab test; NaN slab bounds (ray on a box plane) count as overlap"""
    with np.errstate(invalid="ignore"):
        t1 = (box_min - origins) * inv_directions
        t2 = (box_max - origins) * inv_directions
    lo = np.fmin(t1, t2)
    hi = np.fmax(t1, t2)
    lo = np.where(np.isnan(lo), -np.inf, lo)
    hi = np.where(np.isnan(hi), np.inf, hi)
    enter = np.max(lo, axis=1)
    leave = np.min(hi, axis=1)
    return (leave >= np.maximum(enter, 0.0)) & (enter <= t_max)


def point_aabb_distance_sq(points: np.ndarray, box_min: np.ndarray, box_max: np.ndarray) -> np.ndarray:
    gap = np.maximum(box_min - points, 0.0) + np.maximum(points - box_max, 0.0)
    return _dot(gap, gap)
