"""Triangle meshes, spatial queries, voxelization and rendering"""

from .bvh import ClosestPoint, ClosestPointResult, MeshBVH, RayHit, RayHits, closest_point, points_inside, raycast
from .mesh import SurfaceSample, SurfaceSamples, TriangleMesh, sample_by_density, sample_surface
from .mesh_io import load_mesh, save_mesh, save_obj, save_ply
from .render import (
    Camera,
    DepthMap,
    InstanceMap,
    SceneRenderer,
    load_depth,
    load_instances,
    look_at,
    render_depth,
    render_views,
    save_depth,
    save_instances,
)
from .voxel import VoxelGrid, grid_for_bounds, voxelize_on_grid, voxelize_solid

__all__ = [
    "Camera",
    "ClosestPoint",
    "ClosestPointResult",
    "DepthMap",
    "InstanceMap",
    "MeshBVH",
    "RayHit",
    "RayHits",
    "SceneRenderer",
    "SurfaceSample",
    "SurfaceSamples",
    "TriangleMesh",
    "VoxelGrid",
    "closest_point",
    "grid_for_bounds",
    "load_depth",
    "load_instances",
    "load_mesh",
    "look_at",
    "points_inside",
    "raycast",
    "render_depth",
    "render_views",
    "sample_by_density",
    "sample_surface",
    "save_depth",
    "save_instances",
    "save_mesh",
    "save_obj",
    "save_ply",
    "voxelize_on_grid",
    "voxelize_solid",
]
