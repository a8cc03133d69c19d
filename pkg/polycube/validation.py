"""Structural checks on a polycube complex and distance helpers."""

import logging

import numpy as np
from pydantic import BaseModel, Field
from scipy.spatial import cKDTree

from geometry.mesh import MeshError, TriMesh, mesh_genus
from geometry.proximity import point_to_surface_distance
from polycube.complex import PolycubeComplex

logger = logging.getLogger(__name__)


class PolycubeReport(BaseModel):
    """Outcome of validate_polycube; violations are human-readable entries."""
    valid: bool
    cuboid_count: int
    facet_count: int
    genus: int | None = None
    violations: list[str] = Field(default_factory=list)


def _interval_overlap(lo_a, hi_a, lo_b, hi_b) -> np.ndarray:
    return np.minimum(hi_a, hi_b) - np.maximum(lo_a, lo_b)


def _check_cuboid_pairs(pc: PolycubeComplex) -> list[str]:
    violations = []
    cuboids = pc.cuboids
    for i in range(len(cuboids)):
        for j in range(i + 1, len(cuboids)):
            overlap = _interval_overlap(cuboids[i, 0], cuboids[i, 1], cuboids[j, 0], cuboids[j, 1])
            if np.all(overlap > 0):
                violations.append(f"interior overlap between cuboids {i} and {j}")
                continue
            touching = np.flatnonzero(overlap == 0)
            if len(touching) != 1 or np.any(np.delete(overlap, touching) <= 0):
                continue
            axis = int(touching[0])
            others = [a for a in range(3) if a != axis]
            same_face = all(
                cuboids[i, 0, a] == cuboids[j, 0, a] and cuboids[i, 1, a] == cuboids[j, 1, a] for a in others
            )
            if not same_face:
                violations.append(f"non-conforming contact between cuboids {i} and {j} on axis {'XYZ'[axis]}")
    return violations


def validate_polycube(pc: PolycubeComplex, expected_genus: int | None = None) -> PolycubeReport:
    """Check disjointness, face conformity, a closed manifold boundary and genus.

    Never raises for a malformed complex; every problem becomes a violation.
    """
    violations = _check_cuboid_pairs(pc)
    genus = None
    if len(pc.cuboids) == 0:
        violations.append("complex has no cuboids")
    else:
        boundary = pc.boundary_mesh()
        _, counts = boundary.edges()
        if np.any(counts == 1):
            violations.append(f"boundary has {int(np.sum(counts == 1))} open edges")
        if np.any(counts > 2):
            violations.append(f"boundary has {int(np.sum(counts > 2))} non-manifold edges")
        if np.all(counts == 2):
            try:
                result = mesh_genus(boundary)
            except MeshError as e:
                violations.append(f"genus undefined: {e}")
            else:
                if isinstance(result, list):
                    violations.append(f"boundary is disconnected into {len(result)} components")
                else:
                    genus = int(result)
        if expected_genus is not None and genus is not None and genus != expected_genus:
            violations.append(f"genus {genus} differs from expected {expected_genus}")

    report = PolycubeReport(valid=not violations, cuboid_count=len(pc.cuboids),
                            facet_count=len(pc.facets), genus=genus, violations=violations)
    if violations:
        logger.warning(f"Polycube validation found {len(violations)} violation(s): {violations[:3]}")
    return report


def _surface_samples(mesh: TriMesh) -> np.ndarray:
    corners = mesh.triangle_corners()
    edge_mids = (corners + np.roll(corners, -1, axis=1)) / 2.0
    return np.concatenate([mesh.vertices, corners.mean(axis=1), edge_mids.reshape(-1, 3)])


def hausdorff_distance(points, mesh: TriMesh) -> float:
    """Symmetric Hausdorff distance between a point set and a surface.

    Point-to-surface distances are exact; the surface-to-points direction is
    evaluated at vertices, edge midpoints and triangle centroids.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    forward = float(point_to_surface_distance(points, mesh).max())
    backward, _ = cKDTree(points).query(_surface_samples(mesh))
    return max(forward, float(np.max(backward)))
