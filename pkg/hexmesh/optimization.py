"""Hex mesh quality improvement: smoothing, projection and energy descent."""

import dataclasses
import logging

import numpy as np
from scipy import sparse

from config import QualityConfig
from geometry.mesh import HEX_EDGES, HexMesh, TriMesh, boundary_quads
from geometry.proximity import SurfaceProjector
from hexmesh.quality import HEX_CORNER_NEIGHBORS, QualityReport, corner_edges, corner_jacobians, scaled_jacobian

logger = logging.getLogger(__name__)

# Configuration
STEP_FRACTION = 0.1
MAX_HALVINGS = 10
MAX_REVERT_ROUNDS = 20
GRADIENT_FLOOR = 1e-12


def _adjacency(pairs: np.ndarray, n: int) -> sparse.csr_matrix:
    pairs = np.unique(np.sort(pairs, axis=1), axis=0)
    rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
    cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
    return sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))


def _neighbour_mean(adjacency: sparse.csr_matrix, points: np.ndarray) -> np.ndarray:
    degree = np.asarray(adjacency.sum(axis=1)).ravel()
    total = adjacency @ points
    return np.divide(total, degree[:, None], out=points.copy(), where=degree[:, None] > 0)


class _MeshState:
    """Connectivity shared by every pass of one improve_quality call."""

    def __init__(self, mesh: HexMesh, surface: TriMesh):
        n = mesh.n_vertices
        self.hexes = mesh.hexes
        quads = boundary_quads(mesh)
        self.boundary = np.unique(quads)
        self.interior = np.setdiff1d(np.arange(n), self.boundary)
        self.volume_adjacency = _adjacency(mesh.hexes[:, HEX_EDGES].reshape(-1, 2), n)
        quad_edges = np.stack([quads, np.roll(quads, -1, axis=1)], axis=-1).reshape(-1, 2)
        self.surface_adjacency = _adjacency(quad_edges, n)
        self.projector = SurfaceProjector(surface)
        self.flat_hexes = mesh.hexes.reshape(-1)
        lengths = np.linalg.norm(mesh.vertices[mesh.hexes[:, HEX_EDGES[:, 0]]]
                                 - mesh.vertices[mesh.hexes[:, HEX_EDGES[:, 1]]], axis=-1)
        self.mean_edge = float(lengths.mean())

    def hex_min(self, points: np.ndarray) -> np.ndarray:
        values, _ = corner_jacobians(points, self.hexes)
        return values.min(axis=1)

    def local_min(self, points: np.ndarray) -> np.ndarray:
        """Minimum over the hexes incident to each vertex (inf for loose vertices)."""
        local = np.full(len(points), np.inf)
        np.minimum.at(local, self.flat_hexes, np.repeat(self.hex_min(points), 8))
        return local

    def accept(self, points: np.ndarray, candidate: np.ndarray, movable: np.ndarray) -> np.ndarray:
        """Apply candidate moves whose local minimum scaled Jacobian does not drop.

        Moves are applied together; vertices whose local minimum decreased
        under the joint update are reverted until none is left.
        """
        before = self.local_min(points)
        moving = np.zeros(len(points), dtype=bool)
        moving[movable] = True
        moving &= np.all(np.isfinite(candidate), axis=1)
        for _ in range(MAX_REVERT_ROUNDS):
            trial = np.where(moving[:, None], candidate, points)
            worse = moving & (self.local_min(trial) < before)
            if not worse.any():
                return trial
            moving &= ~worse
        return points

    def fit_residual(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        closest, _, _ = self.projector.query(points[self.boundary])
        return closest, points[self.boundary] - closest


# ============================================
# Passes
# ============================================

def _smooth_interior(state: _MeshState, points: np.ndarray) -> np.ndarray:
    return state.accept(points, _neighbour_mean(state.volume_adjacency, points), state.interior)


def _smooth_boundary(state: _MeshState, points: np.ndarray) -> np.ndarray:
    candidate = points.copy()
    mean = _neighbour_mean(state.surface_adjacency, points)
    candidate[state.boundary], _, _ = state.projector.query(mean[state.boundary])
    return state.accept(points, candidate, state.boundary)


def quality_energy(state: _MeshState, points: np.ndarray, w_fit: float, w_shape: float,
                   with_gradient: bool = True) -> tuple[float, np.ndarray | None]:
    """E = w_fit * sum boundary dist^2 + w_shape * sum over corners (1 - SJ)^2, and dE/dx."""
    _, residual = state.fit_residual(points)
    edges = corner_edges(points[state.hexes])
    lengths = np.linalg.norm(edges, axis=-1)
    valid = np.all(lengths > 0, axis=-1)
    safe = np.where(lengths > 0, lengths, 1.0)
    e1, e2, e3 = edges[..., 0, :], edges[..., 1, :], edges[..., 2, :]
    product = safe.prod(axis=-1)
    c23, c31, c12 = np.cross(e2, e3), np.cross(e3, e1), np.cross(e1, e2)
    sj = np.where(valid, np.einsum("...i,...i->...", e1, c23) / product, 0.0)
    energy = w_fit * float(np.sum(residual ** 2)) + w_shape * float(np.sum((1.0 - sj) ** 2))
    if not with_gradient:
        return energy, None

    gradient = np.zeros_like(points)
    gradient[state.boundary] += 2.0 * w_fit * residual
    scale = np.where(valid, -2.0 * w_shape * (1.0 - sj), 0.0)[..., None]
    grads = [
        scale * (c23 / product[..., None] - sj[..., None] * e1 / safe[..., 0:1] ** 2),
        scale * (c31 / product[..., None] - sj[..., None] * e2 / safe[..., 1:2] ** 2),
        scale * (c12 / product[..., None] - sj[..., None] * e3 / safe[..., 2:3] ** 2),
    ]
    neighbours = state.hexes[:, HEX_CORNER_NEIGHBORS]
    for k, g in enumerate(grads):
        np.add.at(gradient, neighbours[..., k].reshape(-1), g.reshape(-1, 3))
        np.add.at(gradient, state.hexes.reshape(-1), -g.reshape(-1, 3))
    return energy, gradient


def _descend(state: _MeshState, points: np.ndarray, config: QualityConfig) -> np.ndarray:
    """Gradient descent on quality_energy with a backtracking step."""
    for _ in range(config.descent_steps):
        energy, gradient = quality_energy(state, points, config.w_fit, config.w_shape)
        peak = float(np.max(np.linalg.norm(gradient, axis=1)))
        if peak <= GRADIENT_FLOOR:
            break
        step = STEP_FRACTION * state.mean_edge / peak
        for _ in range(MAX_HALVINGS):
            trial = points - step * gradient
            if quality_energy(state, trial, config.w_fit, config.w_shape, with_gradient=False)[0] < energy:
                points = trial
                break
            step /= 2.0
        else:
            break
    return points


def improve_quality(mesh: HexMesh, surface: TriMesh, config: QualityConfig | None = None
                    ) -> tuple[HexMesh, QualityReport]:
    """Raise the minimum scaled Jacobian while keeping the boundary on ``surface``.

    Each outer iteration runs interior Laplacian sweeps and boundary sweeps
    with projection, then gradient descent on the fit/shape energy followed
    by projecting the boundary back onto the surface. The descended state
    is kept only when its minimum is at least that of the smoothed state.
    An iteration that lowers the global minimum is discarded and ends the
    loop, so the recorded minima never decrease.

    Returns:
        (improved mesh, report whose history lists the accepted minima)
    """
    config = config or QualityConfig()
    state = _MeshState(mesh, surface)
    points = np.array(mesh.vertices, dtype=np.float64)
    history = [float(state.hex_min(points).min())]

    for iteration in range(config.max_outer_iterations):
        smoothed = points
        for _ in range(config.smoothing_sweeps):
            smoothed = _smooth_interior(state, smoothed)
        for _ in range(config.smoothing_sweeps):
            smoothed = _smooth_boundary(state, smoothed)
        descended = _descend(state, smoothed, config).copy()
        descended[state.boundary], _ = state.fit_residual(descended)
        smoothed_min = float(state.hex_min(smoothed).min())
        trial = descended if float(state.hex_min(descended).min()) >= smoothed_min else smoothed

        current = float(state.hex_min(trial).min())
        if current < history[-1]:
            logger.info(f"Quality iteration {iteration + 1} lowered min SJ to {current:.4f}; reverted")
            break
        moved = float(np.max(np.linalg.norm(trial - points, axis=1)))
        points = trial
        history.append(current)
        logger.debug(f"Quality iteration {iteration + 1}: min SJ {current:.4f}, max move {moved:.3g}")
        if moved <= GRADIENT_FLOOR * max(state.mean_edge, 1.0):
            break

    if history[-1] < config.target_min_sj:
        logger.warning(f"Min scaled Jacobian {history[-1]:.4f} below target {config.target_min_sj}")
    improved = mesh.with_vertices(points)
    report = dataclasses.replace(scaled_jacobian(improved), history=tuple(history))
    return improved, report
