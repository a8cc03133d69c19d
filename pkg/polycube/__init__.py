"""Polycube extraction: smoothing, plane snapping, the complex and its validation."""

from polycube.complex import (
    ClassificationError,
    Facet,
    PolycubeComplex,
    PolycubeError,
    SmoothingError,
    VertexFacetAssignment,
    VoxelBoundaryError,
    assign_vertices,
    classify_normals,
    rectangle_distance,
)
from polycube.smoothing import laplacian_energy, volume_preserving_smooth
from polycube.snapping import cluster_planes, snap_to_polycube, winding_numbers
from polycube.validation import PolycubeReport, hausdorff_distance, validate_polycube

__all__ = [
    "PolycubeError",
    "ClassificationError",
    "VoxelBoundaryError",
    "SmoothingError",
    "Facet",
    "PolycubeComplex",
    "VertexFacetAssignment",
    "assign_vertices",
    "classify_normals",
    "rectangle_distance",
    "volume_preserving_smooth",
    "laplacian_energy",
    "cluster_planes",
    "winding_numbers",
    "snap_to_polycube",
    "PolycubeReport",
    "validate_polycube",
    "hausdorff_distance",
]
