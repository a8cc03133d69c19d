"""Snap a roughly axis-aligned surface onto an exact polycube complex."""

import logging
from dataclasses import dataclass

import numpy as np

from geometry.mesh import TriMesh
from polycube.complex import (
    ClassificationError,
    PolycubeComplex,
    VertexFacetAssignment,
    VoxelBoundaryError,
    assign_vertices,
    classify_normals,
)

logger = logging.getLogger(__name__)

# Configuration
DEFAULT_TOL = 0.04
# Clusters carrying less than this share of an axis' facing area are noise.
MIN_CLUSTER_SHARE = 0.02
WINDING_CHUNK = 256


@dataclass(frozen=True)
class PlaneCluster:
    value: float
    area: float
    count: int


def cluster_planes(values, weights, tol: float) -> tuple[list[PlaneCluster], np.ndarray]:
    """Split sorted coordinates wherever consecutive values differ by more than tol.

    Light clusters (below MIN_CLUSTER_SHARE of the total weight) are folded
    into the nearest heavy one.

    Returns:
        (clusters ordered by value, cluster index per input value)
    """
    values = np.asarray(values, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if len(values) == 0:
        return [], np.zeros(0, dtype=np.int64)
    order = np.argsort(values, kind="stable")
    breaks = np.flatnonzero(np.diff(values[order]) > tol) + 1
    raw = np.zeros(len(values), dtype=np.int64)
    raw[order] = np.searchsorted(breaks, np.arange(len(values)), side="right")

    n_raw = int(raw.max()) + 1
    area = np.bincount(raw, weights=weights, minlength=n_raw)
    weighted = np.bincount(raw, weights=weights * values, minlength=n_raw)
    counts = np.bincount(raw, minlength=n_raw)
    plain = np.bincount(raw, weights=values, minlength=n_raw) / np.maximum(counts, 1)
    centers = np.divide(weighted, area, out=plain.copy(), where=area > 0)

    heavy = np.flatnonzero(area >= MIN_CLUSTER_SHARE * area.sum())
    if len(heavy) == 0:
        heavy = np.array([int(np.argmax(counts))])
    nearest = heavy[np.argmin(np.abs(centers[:, None] - centers[heavy][None, :]), axis=1)]
    labels = nearest[raw]

    clusters, remap = [], np.full(n_raw, -1, dtype=np.int64)
    for new, old in enumerate(heavy):
        sel = labels == old
        w = weights[sel]
        value = float(np.average(values[sel], weights=w)) if w.sum() > 0 else float(values[sel].mean())
        clusters.append(PlaneCluster(value=value, area=float(w.sum()), count=int(sel.sum())))
        remap[old] = new
    return clusters, remap[labels]


def winding_numbers(mesh: TriMesh, queries) -> np.ndarray:
    """Generalized winding number of a closed surface at each query point."""
    queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    tri = mesh.triangle_corners()
    out = np.empty(len(queries))
    for start in range(0, len(queries), WINDING_CHUNK):
        q = queries[start:start + WINDING_CHUNK]
        a = tri[None, :, 0, :] - q[:, None, :]
        b = tri[None, :, 1, :] - q[:, None, :]
        c = tri[None, :, 2, :] - q[:, None, :]
        la = np.linalg.norm(a, axis=-1)
        lb = np.linalg.norm(b, axis=-1)
        lc = np.linalg.norm(c, axis=-1)
        det = np.einsum("qtk,qtk->qt", a, np.cross(b, c))
        denom = (la * lb * lc + np.einsum("qtk,qtk->qt", a, b) * lc
                 + np.einsum("qtk,qtk->qt", b, c) * la + np.einsum("qtk,qtk->qt", c, a) * lb)
        out[start:start + WINDING_CHUNK] = 2.0 * np.arctan2(det, denom).sum(axis=1) / (4.0 * np.pi)
    return out


def _axis_planes(coords, areas, tol: float, axis: int) -> tuple[list[PlaneCluster], np.ndarray]:
    clusters, labels = cluster_planes(coords, areas, tol)
    if len(clusters) < 2:
        raise ClassificationError(f"Axis {'XYZ'[axis]} has {len(clusters)} plane(s); need at least two")
    return clusters, labels


def snap_to_polycube(points, topology: TriMesh, tol: float = DEFAULT_TOL
                     ) -> tuple[PolycubeComplex, VertexFacetAssignment]:
    """Cluster face planes, quantize them to a lattice and fill the enclosed cells.

    1. Classify triangles by dominant normal (+-X, +-Y, +-Z).
    2. Per axis, cluster the centroid coordinates of the triangles facing
       that axis, weighted by area.
    3. h = the smallest gap between neighbouring planes on any axis; planes
       are rounded to integer multiples of h from the lowest plane.
    4. Cells come from the planes plus cuts at every multiple of the grid
       unit (the smallest bounding extent in lattice units); a cell is
       occupied when the surface winds around its center.
    5. Vertices are projected onto the facet facing their area-weighted
       normal.

    Args:
        points: (V, 3) smoothed positions
        topology: closed triangle connectivity for the points
        tol: plane gap threshold in the units of ``points``

    Raises:
        ClassificationError: an axis without two planes, or unusable normals
        VoxelBoundaryError: no occupied cell, or a non-manifold cell boundary
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    mesh = topology.with_vertices(points).oriented_outward()
    normals = mesh.vertex_normals()
    if np.any(np.linalg.norm(normals, axis=1) == 0.0):
        raise ClassificationError("Vertex without a dominant normal direction")
    axes, _ = classify_normals(mesh.face_normals())
    areas = mesh.triangle_areas()
    centroids = mesh.triangle_corners().mean(axis=1)

    plane_values = []
    for axis in range(3):
        sel = axes == axis
        clusters, _ = _axis_planes(centroids[sel, axis], areas[sel], tol, axis)
        plane_values.append(np.array([c.value for c in clusters]))

    h = float(min(np.diff(v).min() for v in plane_values))
    origin = np.array([v[0] for v in plane_values])
    lattice_planes = [np.unique(np.round((v - v[0]) / h).astype(np.int64)) for v in plane_values]
    grid_unit = int(min(p[-1] - p[0] for p in lattice_planes))
    cuts = []
    for p in lattice_planes:
        multiples = np.arange(p[0], p[-1] + 1, grid_unit)
        cuts.append(np.unique(np.concatenate([p, multiples, [p[-1]]])))
    logger.info(f"Snapped planes per axis {[len(c) for c in cuts]} with h={h:.6g}")

    centers = np.stack(np.meshgrid(*[(c[:-1] + c[1:]) / 2.0 for c in cuts], indexing="ij"), axis=-1)
    winding = winding_numbers(mesh, origin + h * centers.reshape(-1, 3))
    occupied = winding.reshape(centers.shape[:3]) > 0.5
    if not occupied.any():
        raise VoxelBoundaryError("No lattice cell lies inside the surface")

    cells = np.argwhere(occupied)
    cuboids = np.stack([
        np.stack([cuts[a][cells[:, a]] for a in range(3)], axis=1),
        np.stack([cuts[a][cells[:, a] + 1] for a in range(3)], axis=1),
    ], axis=1)
    complex_ = PolycubeComplex(h, origin, cuboids)
    _, counts = complex_.boundary_mesh().edges()
    if np.any(counts != 2):
        raise VoxelBoundaryError("Occupied cells touch along an edge only")

    assignment = assign_vertices(points, normals, complex_)
    return complex_, assignment

