"""Boundary pillowing: insert one layer of hexes under the surface."""

import logging

import numpy as np

from geometry.mesh import HexMesh, boundary_quads, quads_to_trimesh
from hexmesh.errors import PillowError
from hexmesh.quality import corner_jacobians

logger = logging.getLogger(__name__)

# Configuration
DEFAULT_FRACTION = 0.3
MAX_RETRIES = 3
PILLOW_FIELD = "pillow"


def _mean_edge_length(vertices: np.ndarray, quads: np.ndarray) -> np.ndarray:
    edges = np.stack([quads, np.roll(quads, -1, axis=1)], axis=-1).reshape(-1, 2)
    lengths = np.linalg.norm(vertices[edges[:, 0]] - vertices[edges[:, 1]], axis=1)
    total = np.zeros(len(vertices))
    count = np.zeros(len(vertices))
    for end in range(2):
        np.add.at(total, edges[:, end], lengths)
        np.add.at(count, edges[:, end], 1.0)
    return np.divide(total, count, out=np.zeros_like(total), where=count > 0)


def _assemble(mesh: HexMesh, quads: np.ndarray, surface_ids: np.ndarray, inner: np.ndarray) -> HexMesh:
    n = mesh.n_vertices
    remap = np.arange(n)
    remap[surface_ids] = n + np.arange(len(surface_ids))
    layer = np.concatenate([remap[quads], quads], axis=1)
    hexes = np.concatenate([remap[mesh.hexes], layer])

    cell_data = {}
    for name, values in mesh.cell_data.items():
        values = np.asarray(values)
        # layer hexes belong to no cuboid
        fill = np.full(len(layer), -1 if values.dtype.kind == "i" else 0, dtype=values.dtype)
        cell_data[name] = np.concatenate([values, fill])
    cell_data[PILLOW_FIELD] = np.concatenate([
        np.zeros(mesh.n_hexes, dtype=np.int64), np.ones(len(layer), dtype=np.int64),
    ])
    return HexMesh(np.concatenate([mesh.vertices, inner]), hexes, cell_data)


def _layer_problem(candidate: HexMesh, before: np.ndarray, n_old: int) -> str | None:
    values, _ = corner_jacobians(candidate.vertices, candidate.hexes)
    after = values.min(axis=1)
    if np.any(after[n_old:] <= 0):
        return f"{int(np.sum(after[n_old:] <= 0))} inverted layer hexes"
    worsened = (before > 0) & (after[:n_old] <= 0)
    if np.any(worsened):
        return f"{int(worsened.sum())} interior hexes inverted by the offset"
    return None


def pillow_boundary(mesh: HexMesh, fraction: float = DEFAULT_FRACTION) -> HexMesh:
    """Insert a boundary sheet of hexes.

    Every boundary vertex gets an inner copy, offset against its outward
    normal by ``fraction`` of its mean boundary edge length; old hexes move
    onto the copies and each boundary quad gains one hex joining it to its
    copy. Original boundary vertices keep their positions and indices.
    When the layer inverts a hex the fraction is halved, up to MAX_RETRIES
    times. Cell data ``pillow`` marks the new hexes.

    Raises:
        PillowError: open or non-manifold boundary, or no valid offset found
    """
    quads = boundary_quads(mesh)
    if len(quads) == 0:
        raise PillowError("Hex mesh has no boundary quads")
    surface = quads_to_trimesh(mesh.vertices, quads)
    _, counts = surface.edges()
    if np.any(counts != 2):
        raise PillowError("Boundary quads do not form a closed manifold")

    surface_ids = np.unique(quads)
    normals = surface.vertex_normals()[surface_ids]
    spacing = _mean_edge_length(mesh.vertices, quads)[surface_ids]
    before, _ = corner_jacobians(mesh.vertices, mesh.hexes)
    before = before.min(axis=1)

    f = fraction
    for attempt in range(MAX_RETRIES + 1):
        inner = mesh.vertices[surface_ids] - (f * spacing)[:, None] * normals
        candidate = _assemble(mesh, quads, surface_ids, inner)
        problem = _layer_problem(candidate, before, mesh.n_hexes)
        if problem is None:
            logger.info(f"Pillowed {len(quads)} boundary quads at offset fraction {f:.4g}")
            return candidate
        logger.warning(f"Pillow attempt {attempt + 1} at fraction {f:.4g}: {problem}")
        f /= 2.0
    raise PillowError(f"No valid pillow layer after {MAX_RETRIES} retries")
