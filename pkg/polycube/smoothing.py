"""Volume-preserving uniform Laplacian smoothing."""

import logging

import numpy as np
from scipy import sparse

from geometry.mesh import TriMesh
from polycube.complex import SmoothingError

logger = logging.getLogger(__name__)

# Configuration
STEP = 0.5
MAX_HALVINGS = 8
VOLUME_EPS = 1e-12


def _mean_operator(topology: TriMesh) -> sparse.csr_matrix:
    adjacency = topology.vertex_adjacency()
    degree = np.asarray(adjacency.sum(axis=1)).reshape(-1)
    inverse = np.divide(1.0, degree, out=np.zeros_like(degree), where=degree > 0)
    return sparse.diags(inverse) @ adjacency


def laplacian_energy(points, topology: TriMesh) -> float:
    """Half the sum of squared edge lengths."""
    points = np.asarray(points, dtype=np.float64)
    edges, _ = topology.edges()
    delta = points[edges[:, 0]] - points[edges[:, 1]]
    return 0.5 * float(np.einsum("ij,ij->", delta, delta))


def _signed_volume(points: np.ndarray, topology: TriMesh) -> float:
    return topology.with_vertices(points).enclosed_volume()


def _rescale(points: np.ndarray, topology: TriMesh, volume: float) -> np.ndarray:
    current = _signed_volume(points, topology)
    if current == 0.0 or np.sign(current) != np.sign(volume):
        raise SmoothingError("Smoothing collapsed the enclosed volume")
    centroid = points.mean(axis=0)
    return centroid + (points - centroid) * np.cbrt(volume / current)


def volume_preserving_smooth(points, topology: TriMesh, iterations: int) -> np.ndarray:
    """Uniform Laplacian smoothing with the enclosed volume restored every iteration.

    Each iteration moves every vertex toward its neighbour average, then
    rescales about the centroid to the starting volume. The step is halved
    (up to MAX_HALVINGS times) until the Laplacian energy does not increase;
    when no step qualifies smoothing stops early.

    Args:
        points: (V, 3) positions
        topology: closed mesh providing connectivity (its positions are ignored)
        iterations: number of smoothing iterations, 0 returns a copy

    Raises:
        SmoothingError: the input surface encloses no volume
    """
    points = np.array(points, dtype=np.float64).reshape(-1, 3)
    if len(points) != topology.n_vertices:
        raise ValueError(f"{len(points)} points for a topology with {topology.n_vertices} vertices")
    if iterations <= 0:
        return points

    volume = _signed_volume(points, topology)
    scale = float(np.max(points.max(axis=0) - points.min(axis=0)))
    if abs(volume) <= VOLUME_EPS * max(scale, 1.0) ** 3:
        raise SmoothingError("Surface encloses zero volume")

    mean = _mean_operator(topology)
    energy = laplacian_energy(points, topology)
    for iteration in range(iterations):
        delta = mean @ points - points
        step = STEP
        for _ in range(MAX_HALVINGS + 1):
            candidate = _rescale(points + step * delta, topology, volume)
            candidate_energy = laplacian_energy(candidate, topology)
            if candidate_energy <= energy:
                break
            step *= 0.5
        else:
            logger.info(f"Smoothing stopped after {iteration} iterations: no energy-decreasing step")
            break
        points, energy = candidate, candidate_energy
    return points
