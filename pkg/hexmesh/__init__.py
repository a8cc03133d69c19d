"""Polycube-based all-hex meshing: segmentation, parameterization, lattice, mapping and quality."""

from geometry.mesh import boundary_quads
from hexmesh.errors import HexMeshError, ParameterizationError, PillowError, PointLocationError, SegmentationError
from hexmesh.lattice import generate_hex_lattice
from hexmesh.mapping import locate_in_patch, map_to_physical, transfinite_block
from hexmesh.optimization import improve_quality
from hexmesh.parameterization import PatchParam, harmonic_parameterize, parameterize_all
from hexmesh.pillowing import pillow_boundary
from hexmesh.quality import QualityReport, corner_jacobians, render_histogram, scaled_jacobian
from hexmesh.segmentation import SegmentationLabels, segment_surface

__all__ = [
    "HexMeshError",
    "SegmentationError",
    "ParameterizationError",
    "PointLocationError",
    "PillowError",
    "SegmentationLabels",
    "segment_surface",
    "PatchParam",
    "harmonic_parameterize",
    "parameterize_all",
    "generate_hex_lattice",
    "locate_in_patch",
    "map_to_physical",
    "transfinite_block",
    "QualityReport",
    "corner_jacobians",
    "scaled_jacobian",
    "render_histogram",
    "pillow_boundary",
    "improve_quality",
    "boundary_quads",
]
