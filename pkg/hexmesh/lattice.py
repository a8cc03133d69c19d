"""Uniform octree-style hex lattice over a polycube complex."""

import logging

import numpy as np

from geometry.mesh import HEX_UNIT_CORNERS, HexMesh
from polycube.complex import PolycubeComplex

logger = logging.getLogger(__name__)


def _cuboid_block(lo: np.ndarray, hi: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Fine-grid nodes and hexes of one cuboid, hexes indexing the local nodes."""
    axes = [np.arange(lo[a] * n, hi[a] * n + 1) for a in range(3)]
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    counts = (hi - lo) * n
    index = np.arange(len(nodes)).reshape(tuple(counts + 1))
    hexes = np.stack([
        index[dx:dx + counts[0], dy:dy + counts[1], dz:dz + counts[2]].reshape(-1)
        for dx, dy, dz in HEX_UNIT_CORNERS
    ], axis=1)
    return nodes, hexes


def generate_hex_lattice(pc: PolycubeComplex, depth: int) -> HexMesh:
    """Split every lattice unit of every cuboid into (2**depth)**3 hexes.

    All nodes live on one global fine grid, so nodes on shared cuboid faces
    are merged and the result is conforming. Cell data ``cuboid`` records
    the source cuboid of each hex.

    Raises:
        ValueError: negative depth or an empty complex
    """
    if depth < 0:
        raise ValueError(f"Depth must be non-negative, got {depth}")
    if len(pc.cuboids) == 0:
        raise ValueError("Polycube complex has no cuboids")
    n = 2 ** depth

    all_nodes, all_hexes, owners = [], [], []
    offset = 0
    for k, (lo, hi) in enumerate(pc.cuboids):
        nodes, hexes = _cuboid_block(lo, hi, n)
        all_nodes.append(nodes)
        all_hexes.append(hexes + offset)
        owners.append(np.full(len(hexes), k, dtype=np.int64))
        offset += len(nodes)

    fine, inverse = np.unique(np.concatenate(all_nodes), axis=0, return_inverse=True)
    hexes = inverse.reshape(-1)[np.concatenate(all_hexes)]
    vertices = pc.to_physical(fine / n)
    logger.info(f"Hex lattice at depth {depth}: {len(hexes)} hexes, {len(vertices)} vertices")
    return HexMesh(vertices, hexes, {"cuboid": np.concatenate(owners)})


def lattice_nodes(lattice: HexMesh, pc: PolycubeComplex) -> tuple[np.ndarray, int]:
    """Recover integer fine-grid coordinates and subdivisions per lattice unit.

    Only valid for a lattice fresh from generate_hex_lattice.
    """
    edge = np.linalg.norm(lattice.vertices[lattice.hexes[0, 1]] - lattice.vertices[lattice.hexes[0, 0]])
    n = max(int(round(pc.h / edge)), 1)
    fine = np.round(pc.to_lattice(lattice.vertices) * n).astype(np.int64)
    return fine, n
