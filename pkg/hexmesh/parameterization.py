"""Harmonic maps from surface patches onto their facet rectangles."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from geometry.mesh import TriMesh
from hexmesh.errors import ParameterizationError
from hexmesh.segmentation import SegmentationLabels

logger = logging.getLogger(__name__)

# Configuration
MIN_COTANGENT_WEIGHT = 1e-6
MAX_RELATIVE_RESIDUAL = 1e-10
COTANGENT = "cotangent"
MEAN_VALUE = "mean_value"


@dataclass(frozen=True)
class PatchParam:
    """Per-vertex (u, v) of one patch, in lattice units of its facet.

    Attributes:
        facet_id: owning facet
        vertices: (n,) mesh vertex ids of the patch
        uv: (n, 2) parameter positions, row-aligned with ``vertices``
        triangles: (m, 3) patch triangles as local indices into ``vertices``
        weights: which Laplace weights produced the map
        residual: relative residual of the interior solve
    """
    facet_id: int
    vertices: np.ndarray
    uv: np.ndarray
    triangles: np.ndarray
    weights: str = COTANGENT
    residual: float = 0.0

    def signed_areas(self) -> np.ndarray:
        tri = self.uv[self.triangles]
        d1, d2 = tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _flipped(areas: np.ndarray, orientation: int) -> int:
    return int(np.sum(areas * orientation <= 0.0))


# ============================================
# Laplace weights
# ============================================

def cotangent_weights(points: np.ndarray, triangles: np.ndarray) -> sparse.csr_matrix:
    """Symmetric cotangent weights; negative edge weights are clamped to a small positive value."""
    n = len(points)
    rows, cols, vals = [], [], []
    for k in range(3):
        i, j, o = triangles[:, (k + 1) % 3], triangles[:, (k + 2) % 3], triangles[:, k]
        a, b = points[i] - points[o], points[j] - points[o]
        cross = np.linalg.norm(np.cross(a, b), axis=1)
        dot = np.einsum("ij,ij->i", a, b)
        cot = np.divide(dot, cross, out=np.zeros_like(dot), where=cross > 0)
        rows += [i, j]
        cols += [j, i]
        vals += [cot / 2.0, cot / 2.0]
    weights = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    weights.sum_duplicates()
    negative = weights.data < 0
    if np.any(negative):
        logger.debug(f"Clamped {int(negative.sum() // 2)} negative cotangent weight(s)")
        weights.data[negative] = MIN_COTANGENT_WEIGHT
    return weights


def mean_value_weights(points: np.ndarray, triangles: np.ndarray) -> sparse.csr_matrix:
    """Row-wise mean value weights tan(a/2)/|e|; positive but not symmetric."""
    n = len(points)
    rows, cols, vals = [], [], []
    for k in range(3):
        i, j, l = triangles[:, k], triangles[:, (k + 1) % 3], triangles[:, (k + 2) % 3]
        a, b = points[j] - points[i], points[l] - points[i]
        la, lb = np.linalg.norm(a, axis=1), np.linalg.norm(b, axis=1)
        cosine = np.clip(np.einsum("ij,ij->i", a, b) / np.maximum(la * lb, 1e-300), -1.0, 1.0)
        half_tan = np.tan(np.arccos(cosine) / 2.0)
        rows += [i, i]
        cols += [j, l]
        vals += [half_tan / np.maximum(la, 1e-300), half_tan / np.maximum(lb, 1e-300)]
    weights = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    weights.sum_duplicates()
    return weights


def _solve_interior(weights: sparse.csr_matrix, fixed: np.ndarray, fixed_uv: np.ndarray
                    ) -> tuple[np.ndarray, float]:
    n = weights.shape[0]
    uv = np.zeros((n, 2))
    uv[fixed] = fixed_uv
    free = np.setdiff1d(np.arange(n), fixed)
    if len(free) == 0:
        return uv, 0.0
    degree = np.asarray(weights.sum(axis=1)).ravel()
    laplacian = (sparse.diags(degree) - weights).tocsr()
    system = laplacian[free][:, free].tocsc()
    rhs = np.asarray(weights[free][:, fixed] @ fixed_uv)
    solution = np.asarray(spsolve(system, rhs)).reshape(len(free), 2)
    residual = np.linalg.norm(system @ solution - rhs) / max(np.linalg.norm(rhs), 1e-300)
    uv[free] = solution
    return uv, float(residual)


# ============================================
# Boundary
# ============================================

def _boundary_uv(points: np.ndarray, loop: np.ndarray, corner_positions: np.ndarray,
                 corner_uv: np.ndarray) -> np.ndarray:
    """Chord-length placement of a loop onto the rectangle sides between its corners."""
    uv = np.empty((len(loop), 2))
    ends = list(corner_positions) + [len(loop)]
    for k in range(4):
        chain = np.arange(ends[k], ends[k + 1] + 1) % len(loop)
        steps = np.linalg.norm(np.diff(points[loop[chain]], axis=0), axis=1)
        length = np.concatenate([[0.0], np.cumsum(steps)])
        if length[-1] <= 0:
            raise ParameterizationError("Zero-length side between patch corners")
        t = (length / length[-1])[:-1, None]
        uv[chain[:-1]] = (1.0 - t) * corner_uv[k] + t * corner_uv[(k + 1) % 4]
    return uv


def harmonic_parameterize(mesh: TriMesh, labels: SegmentationLabels, facet_id: int) -> PatchParam:
    """Map a disk patch onto its facet rectangle.

    The boundary loop is split at the four vertices standing in for the facet
    corners and spread along the rectangle sides by chord length. Interior
    vertices solve the cotangent Laplace equation; if that map flips a
    triangle the solve is repeated with mean value weights.

    Raises:
        ParameterizationError: corners out of order on the loop, a solve
            whose residual exceeds the bound, or flips with both weightings
    """
    pc = labels.complex
    facet = pc.facets[facet_id]
    patch = labels.triangles[labels.patch(facet_id)]
    vertices, local = np.unique(patch, return_inverse=True)
    local = local.reshape(-1, 3)
    points = mesh.vertices[vertices]

    loop = np.searchsorted(vertices, labels.loops[facet_id])
    quad = pc.facet_quads[facet_id]
    corner_vertices = np.searchsorted(vertices, labels.corner_vertices[quad])
    positions = []
    for v in corner_vertices:
        hits = np.flatnonzero(loop == v)
        if len(hits) != 1:
            raise ParameterizationError(f"Facet {facet_id}: corner vertex not on the patch boundary")
        positions.append(int(hits[0]))
    loop = np.roll(loop, -positions[0])
    positions = [(p - positions[0]) % len(loop) for p in positions]
    if not all(a < b for a, b in zip(positions, positions[1:])):
        raise ParameterizationError(f"Facet {facet_id}: corners appear out of order along the boundary")

    corner_uv = pc.boundary_nodes[quad][:, list(facet.tangents)].astype(np.float64)
    boundary_uv = _boundary_uv(points, loop, positions, corner_uv)

    for name, builder in ((COTANGENT, cotangent_weights), (MEAN_VALUE, mean_value_weights)):
        uv, residual = _solve_interior(builder(points, local), loop, boundary_uv)
        if residual >= MAX_RELATIVE_RESIDUAL:
            logger.warning(f"Facet {facet_id}: {name} solve residual {residual:.3g}")
            continue
        param = PatchParam(facet_id, vertices, uv, local, weights=name, residual=residual)
        flips = _flipped(param.signed_areas(), facet.orientation)
        if flips == 0:
            if name != COTANGENT:
                logger.info(f"Facet {facet_id}: fell back to {name} weights")
            return param
        logger.warning(f"Facet {facet_id}: {flips} flipped triangle(s) with {name} weights")
    raise ParameterizationError(f"Facet {facet_id}: no bijective harmonic map found")


def parameterize_all(mesh: TriMesh, labels: SegmentationLabels) -> dict[int, PatchParam]:
    """Parameterize every patch; each solve is independent."""
    return {facet_id: harmonic_parameterize(mesh, labels, facet_id) for facet_id in sorted(labels.loops)}
