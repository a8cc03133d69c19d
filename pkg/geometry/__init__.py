"""Mesh types, topology, normalization and file I/O."""

from geometry.io import load_surface_mesh, read_hexmesh_vtk, weld_corners, write_hexmesh_vtk, write_surface_obj
from geometry.mesh import (
    DegenerateBoundsError,
    HexMesh,
    MeshError,
    MeshParseError,
    NonManifoldError,
    OpenBoundaryError,
    TriMesh,
    box_surface,
    boundary_quads,
    mesh_genus,
    quads_to_trimesh,
    voxel_surface,
)
from geometry.normalization import NormalizationTransform, normalize_for_frame
from geometry.proximity import SurfaceProjector, closest_points, point_to_surface_distance

__all__ = [
    "TriMesh",
    "HexMesh",
    "MeshError",
    "MeshParseError",
    "NonManifoldError",
    "OpenBoundaryError",
    "DegenerateBoundsError",
    "mesh_genus",
    "voxel_surface",
    "box_surface",
    "boundary_quads",
    "quads_to_trimesh",
    "NormalizationTransform",
    "normalize_for_frame",
    "load_surface_mesh",
    "weld_corners",
    "write_hexmesh_vtk",
    "read_hexmesh_vtk",
    "write_surface_obj",
    "SurfaceProjector",
    "closest_points",
    "point_to_surface_distance",
]
