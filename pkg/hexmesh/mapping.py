"""Map a hex lattice from polycube space onto the input geometry."""

import logging
from collections.abc import Mapping

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from geometry.mesh import HEX_EDGES, HexMesh, TriMesh, boundary_quads
from hexmesh.errors import PointLocationError
from hexmesh.lattice import lattice_nodes
from hexmesh.parameterization import PatchParam
from polycube.complex import PolycubeComplex

logger = logging.getLogger(__name__)

# Configuration
LOCATION_TOL = 1e-9
LOCATE_CHUNK = 256


def locate_in_patch(uv, param: PatchParam, mesh: TriMesh) -> np.ndarray:
    """Invert a patch map: physical points for (u, v) queries.

    Each query goes to the parametric triangle with the largest minimum
    barycentric coordinate and is interpolated from the triangle's
    physical corners.

    Raises:
        PointLocationError: a query lies outside every triangle by more than LOCATION_TOL
    """
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    tri = param.uv[param.triangles]
    a = tri[:, 0]
    e1, e2 = tri[:, 1] - a, tri[:, 2] - a
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    physical = mesh.vertices[param.vertices][param.triangles]

    out = np.empty((len(uv), 3))
    for start in range(0, len(uv), LOCATE_CHUNK):
        q = uv[start:start + LOCATE_CHUNK]
        d = q[:, None, :] - a[None, :, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            l1 = (d[..., 0] * e2[:, 1] - d[..., 1] * e2[:, 0]) / det
            l2 = (e1[:, 0] * d[..., 1] - e1[:, 1] * d[..., 0]) / det
        bary = np.stack([1.0 - l1 - l2, l1, l2], axis=-1)
        score = np.nan_to_num(bary.min(axis=-1), nan=-np.inf, posinf=-np.inf)
        best = np.argmax(score, axis=1)
        rows = np.arange(len(q))
        if np.any(score[rows, best] < -LOCATION_TOL):
            worst = int(np.argmin(score[rows, best]))
            raise PointLocationError(
                f"Facet {param.facet_id}: (u, v) = {q[worst].tolist()} lies outside every parametric triangle"
            )
        weights = bary[rows, best]
        out[start:start + len(q)] = np.einsum("qk,qkd->qd", weights, physical[best])
    return out


def _map_boundary(fine: np.ndarray, n: int, boundary: np.ndarray, params: Mapping[int, PatchParam],
                  mesh: TriMesh, pc: PolycubeComplex) -> np.ndarray:
    positions = np.full((len(fine), 3), np.nan)
    pending = np.zeros(len(fine), dtype=bool)
    pending[boundary] = True
    for facet in pc.facets:
        if facet.index not in params:
            raise ValueError(f"No parameterization for facet {facet.index}")
        a, b = facet.tangents
        on = (pending & (fine[:, facet.axis] == facet.plane * n)
              & (fine[:, a] >= facet.lo[a] * n) & (fine[:, a] <= facet.hi[a] * n)
              & (fine[:, b] >= facet.lo[b] * n) & (fine[:, b] <= facet.hi[b] * n))
        ids = np.flatnonzero(on)
        if len(ids) == 0:
            continue
        positions[ids] = locate_in_patch(fine[ids][:, [a, b]] / n, params[facet.index], mesh)
        pending[ids] = False
    if np.any(pending):
        raise PointLocationError(f"{int(pending.sum())} boundary lattice nodes lie on no facet")
    return positions


def _harmonic_fill(lattice: HexMesh, positions: np.ndarray, fixed: np.ndarray) -> np.ndarray:
    """Uniform graph Laplace solve for the free nodes."""
    n = lattice.n_vertices
    free = np.setdiff1d(np.arange(n), fixed)
    if len(free) == 0:
        return positions
    edges = np.unique(np.sort(lattice.hexes[:, HEX_EDGES].reshape(-1, 2), axis=1), axis=0)
    adjacency = sparse.csr_matrix(
        (np.ones(2 * len(edges)), (np.concatenate([edges[:, 0], edges[:, 1]]),
                                   np.concatenate([edges[:, 1], edges[:, 0]]))),
        shape=(n, n),
    )
    degree = np.asarray(adjacency.sum(axis=1)).ravel()
    system = (sparse.diags(degree) - adjacency).tocsr()[free][:, free].tocsc()
    rhs = np.asarray(adjacency[free][:, fixed] @ positions[fixed])
    positions = positions.copy()
    positions[free] = np.asarray(spsolve(system, rhs)).reshape(len(free), 3)
    return positions


def _blend(block: np.ndarray, axis: int) -> np.ndarray:
    """Linear blend between the two end faces of a block along one axis."""
    m = block.shape[axis] - 1
    shape = [1] * block.ndim
    shape[axis] = m + 1
    t = np.linspace(0.0, 1.0, m + 1).reshape(shape)
    first = np.take(block, [0], axis=axis)
    last = np.take(block, [-1], axis=axis)
    return (1.0 - t) * first + t * last


def transfinite_block(block: np.ndarray) -> np.ndarray:
    """Boolean-sum trilinear blending of a (A+1, B+1, C+1, 3) block from its six faces."""
    pu, pv, pw = _blend(block, 0), _blend(block, 1), _blend(block, 2)
    puv, pvw, puw = _blend(pv, 0), _blend(pw, 1), _blend(pw, 0)
    puvw = _blend(pvw, 0)
    return pu + pv + pw - puv - pvw - puw + puvw


def map_to_physical(lattice: HexMesh, params: Mapping[int, PatchParam], mesh: TriMesh,
                    pc: PolycubeComplex) -> HexMesh:
    """Move lattice nodes from polycube space onto the input geometry.

    Boundary nodes invert the patch maps. Interior nodes first solve a
    uniform Laplace equation (this fixes nodes on faces shared by two
    cuboids), then every cuboid's strictly interior nodes are overwritten by
    transfinite blending of its six faces.

    Args:
        lattice: output of generate_hex_lattice for ``pc``
        params: PatchParam per facet id
        mesh: the parameterized input surface
        pc: polycube complex

    Raises:
        PointLocationError: a boundary node cannot be located in its patch
        ValueError: a facet without a parameterization
    """
    fine, n = lattice_nodes(lattice, pc)
    boundary = np.unique(boundary_quads(lattice))
    positions = _map_boundary(fine, n, boundary, params, mesh, pc)
    positions = _harmonic_fill(lattice, positions, boundary)

    low = fine.min(axis=0)
    index = np.full(tuple(fine.max(axis=0) - low + 1), -1, dtype=np.int64)
    index[tuple((fine - low).T)] = np.arange(len(fine))
    for lo, hi in pc.cuboids:
        start, stop = lo * n - low, hi * n - low + 1
        ids = index[start[0]:stop[0], start[1]:stop[1], start[2]:stop[2]]
        if min(ids.shape) < 3:
            continue
        blended = transfinite_block(positions[ids])
        positions[ids[1:-1, 1:-1, 1:-1].reshape(-1)] = blended[1:-1, 1:-1, 1:-1].reshape(-1, 3)

    logger.info(f"Mapped {len(boundary)} boundary and {lattice.n_vertices - len(boundary)} interior nodes")
    return lattice.with_vertices(positions)
