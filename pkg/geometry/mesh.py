"""Surface and volume mesh value types plus topology queries."""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

logger = logging.getLogger(__name__)


class MeshError(Exception):
    """Base class for mesh construction and topology errors."""
    pass


class MeshParseError(MeshError):
    """Raised when a mesh file cannot be parsed.

    The message carries the line number (text formats) or byte offset
    (binary STL) of the offending record.
    """
    pass


class NonManifoldError(MeshError):
    """Raised when an edge is used by a number of faces other than two."""
    pass


class OpenBoundaryError(MeshError):
    """Raised when a surface that must be closed has boundary edges."""
    pass


class DegenerateBoundsError(MeshError):
    """Raised when a point set has zero extent along every axis."""
    pass


# VTK hexahedron corner order: bottom face counter-clockwise, then top face.
HEX_UNIT_CORNERS = np.array([
    [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
    [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],
], dtype=np.int64)

# Outward-oriented hex faces in local corner indices.
HEX_FACES = np.array([
    [0, 3, 2, 1],
    [4, 5, 6, 7],
    [0, 1, 5, 4],
    [1, 2, 6, 5],
    [2, 3, 7, 6],
    [3, 0, 4, 7],
], dtype=np.int64)

HEX_EDGES = np.array([
    [0, 1], [1, 2], [2, 3], [3, 0],
    [4, 5], [5, 6], [6, 7], [7, 4],
    [0, 4], [1, 5], [2, 6], [3, 7],
], dtype=np.int64)


@dataclass(frozen=True)
class TriMesh:
    """Triangle surface mesh.

    Attributes:
        vertices: (V, 3) float array of positions in model units
        triangles: (F, 3) int array of vertex indices
    """
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise MeshError(
                f"Triangle index out of range for {len(vertices)} vertices"
            )
        vertices.setflags(write=False)
        triangles.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def with_vertices(self, vertices: np.ndarray) -> "TriMesh":
        """Same connectivity, new positions."""
        return TriMesh(vertices, self.triangles)

    def triangle_corners(self) -> np.ndarray:
        """(F, 3, 3) array of triangle corner positions."""
        return self.vertices[self.triangles]

    def face_normals(self, normalize: bool = True) -> np.ndarray:
        """Per-triangle normals; unnormalized length is twice the area."""
        tri = self.triangle_corners()
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        if not normalize:
            return n
        length = np.linalg.norm(n, axis=1, keepdims=True)
        return np.divide(n, length, out=np.zeros_like(n), where=length > 0)

    def triangle_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_normals(normalize=False), axis=1)

    def vertex_normals(self) -> np.ndarray:
        """Area-weighted unit vertex normals (zero for isolated vertices)."""
        weighted = self.face_normals(normalize=False)
        normals = np.zeros_like(self.vertices)
        for corner in range(3):
            np.add.at(normals, self.triangles[:, corner], weighted)
        length = np.linalg.norm(normals, axis=1, keepdims=True)
        return np.divide(normals, length, out=np.zeros_like(normals), where=length > 0)

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique undirected edges and, per edge, the number of using faces.

        Returns:
            (edges, counts) with edges sorted as (min, max) pairs
        """
        raw = np.concatenate([
            self.triangles[:, [0, 1]],
            self.triangles[:, [1, 2]],
            self.triangles[:, [2, 0]],
        ])
        raw = np.sort(raw, axis=1)
        edges, counts = np.unique(raw, axis=0, return_counts=True)
        return edges, counts

    def vertex_adjacency(self) -> sparse.csr_matrix:
        """Symmetric 0/1 vertex adjacency matrix."""
        edges, _ = self.edges()
        n = self.n_vertices
        data = np.ones(2 * len(edges))
        rows = np.concatenate([edges[:, 0], edges[:, 1]])
        cols = np.concatenate([edges[:, 1], edges[:, 0]])
        adjacency = sparse.csr_matrix((data, (rows, cols)), shape=(n, n))
        adjacency.data[:] = 1.0
        adjacency.sort_indices()
        return adjacency

    def vertex_neighbors(self) -> list[np.ndarray]:
        """Per-vertex sorted neighbour index arrays."""
        adjacency = self.vertex_adjacency()
        return [adjacency.indices[adjacency.indptr[i]:adjacency.indptr[i + 1]]
                for i in range(self.n_vertices)]

    def enclosed_volume(self) -> float:
        """Signed enclosed volume by the divergence theorem."""
        tri = self.triangle_corners()
        return float(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])).sum() / 6.0)

    def oriented_outward(self) -> "TriMesh":
        """Flip every triangle when the signed volume is negative."""
        if self.enclosed_volume() < 0:
            return TriMesh(self.vertices, self.triangles[:, ::-1])
        return self

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def bbox_diagonal(self) -> float:
        lo, hi = self.bounding_box()
        return float(np.linalg.norm(hi - lo))


@dataclass(frozen=True)
class HexMesh:
    """All-hex volume mesh in VTK hexahedron corner order.

    Attributes:
        vertices: (V, 3) float array
        hexes: (H, 8) int array, bottom face counter-clockwise then top face
        cell_data: optional per-hex scalar fields written alongside the mesh
    """
    vertices: np.ndarray
    hexes: np.ndarray
    cell_data: dict = field(default_factory=dict)

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        hexes = np.asarray(self.hexes, dtype=np.int64).reshape(-1, 8)
        if hexes.size and (hexes.min() < 0 or hexes.max() >= len(vertices)):
            raise MeshError(f"Hex index out of range for {len(vertices)} vertices")
        vertices.setflags(write=False)
        hexes.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "hexes", hexes)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_hexes(self) -> int:
        return len(self.hexes)

    def with_vertices(self, vertices: np.ndarray) -> "HexMesh":
        return HexMesh(vertices, self.hexes, dict(self.cell_data))

    def with_cell_data(self, **fields: np.ndarray) -> "HexMesh":
        merged = dict(self.cell_data)
        merged.update(fields)
        return HexMesh(self.vertices, self.hexes, merged)

    def validate(self) -> None:
        """Check distinct corners per hex and a closed boundary quad manifold."""
        for i, hexa in enumerate(self.hexes):
            if len(set(hexa.tolist())) != 8:
                raise MeshError(f"Hex {i} has repeated vertices")
        quads = boundary_quads(self)
        if len(quads) == 0:
            return
        surface = quads_to_trimesh(self.vertices, quads)
        _, counts = surface.edges()
        if np.any(counts != 2):
            raise NonManifoldError("Boundary quad set is not a closed 2-manifold")


# ============================================
# Topology
# ============================================

def _euler_genus(n_vertices: int, n_edges: int, n_faces: int) -> int:
    chi = n_vertices - n_edges + n_faces
    return (2 - chi) // 2


def mesh_genus(mesh: TriMesh) -> int | list[int]:
    """Genus of a closed manifold triangle surface.

    Uses g = (2 - V + E - F) / 2 per connected component. A connected input
    returns an int; a disconnected input returns the per-component genus
    list ordered by lowest vertex index.

    Raises:
        NonManifoldError: an edge is used by more than two triangles
        OpenBoundaryError: an edge is used by a single triangle
    """
    edges, counts = mesh.edges()
    if np.any(counts == 1):
        raise OpenBoundaryError(
            f"Surface has {int(np.sum(counts == 1))} boundary edges"
        )
    if np.any(counts > 2):
        raise NonManifoldError(
            f"Surface has {int(np.sum(counts > 2))} non-manifold edges"
        )

    used = np.unique(mesh.triangles)
    n_comp, labels = connected_components(mesh.vertex_adjacency(), directed=False)
    components = np.unique(labels[used])

    genera = []
    for comp in components:
        v_count = int(np.sum(labels[used] == comp))
        e_count = int(np.sum(labels[edges[:, 0]] == comp))
        f_count = int(np.sum(labels[mesh.triangles[:, 0]] == comp))
        genera.append(_euler_genus(v_count, e_count, f_count))

    if len(genera) == 1:
        return genera[0]
    logger.info(f"Disconnected surface: {len(genera)} components")
    return genera


def quads_to_trimesh(vertices: np.ndarray, quads: np.ndarray) -> TriMesh:
    """Split each quad (a, b, c, d) into (a, b, c) and (a, c, d)."""
    quads = np.asarray(quads, dtype=np.int64).reshape(-1, 4)
    triangles = np.concatenate([quads[:, [0, 1, 2]], quads[:, [0, 2, 3]]])
    return TriMesh(vertices, triangles)


def boundary_quads(mesh: HexMesh) -> np.ndarray:
    """Outward-oriented boundary quads (faces used by exactly one hex)."""
    if mesh.n_hexes == 0:
        return np.zeros((0, 4), dtype=np.int64)
    faces = mesh.hexes[:, HEX_FACES].reshape(-1, 4)
    keys = np.sort(faces, axis=1)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    return faces[counts[inverse] == 1]


def compact(vertices: np.ndarray, cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Drop unreferenced vertices and renumber cells."""
    used, inverse = np.unique(cells.reshape(-1), return_inverse=True)
    return vertices[used], inverse.reshape(cells.shape)


# ============================================
# Constructive surfaces
# ============================================

AXIS_FACE_CORNERS = {
    # (axis, sign) -> corner offsets of the unit-cell face, outward CCW
    (0, -1): [(0, 0, 0), (0, 0, 1), (0, 1, 1), (0, 1, 0)],
    (0, +1): [(1, 0, 0), (1, 1, 0), (1, 1, 1), (1, 0, 1)],
    (1, -1): [(0, 0, 0), (1, 0, 0), (1, 0, 1), (0, 0, 1)],
    (1, +1): [(0, 1, 0), (0, 1, 1), (1, 1, 1), (1, 1, 0)],
    (2, -1): [(0, 0, 0), (0, 1, 0), (1, 1, 0), (1, 0, 0)],
    (2, +1): [(0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)],
}


def voxel_boundary_quads(occupancy: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exposed cell faces of an occupancy grid.

    Returns:
        (cells, axes, signs): the owning cell index triple, the face normal
        axis and the outward sign of every exposed face, in a deterministic
        (axis, sign, cell) order.
    """
    occ = np.asarray(occupancy, dtype=bool)
    padded = np.pad(occ, 1)
    cells_out, axes_out, signs_out = [], [], []
    for axis in range(3):
        for sign in (-1, +1):
            neighbor = np.roll(padded, -sign, axis=axis)[1:-1, 1:-1, 1:-1]
            exposed = occ & ~neighbor
            idx = np.argwhere(exposed)
            cells_out.append(idx)
            axes_out.append(np.full(len(idx), axis))
            signs_out.append(np.full(len(idx), sign))
    return (np.concatenate(cells_out), np.concatenate(axes_out),
            np.concatenate(signs_out))


def voxel_surface(occupancy: np.ndarray, origin=(0.0, 0.0, 0.0), h: float = 1.0) -> TriMesh:
    """Closed, outward-oriented triangulated boundary of an occupancy grid.

    Raises:
        NonManifoldError: two occupied cells touch along an edge only
    """
    cells, axes, signs = voxel_boundary_quads(occupancy)
    corners = []
    for cell, axis, sign in zip(cells, axes, signs):
        offsets = np.array(AXIS_FACE_CORNERS[(int(axis), int(sign))])
        corners.append(cell[None, :] + offsets)
    if not corners:
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    lattice = np.concatenate(corners).reshape(-1, 3)
    nodes, inverse = np.unique(lattice, axis=0, return_inverse=True)
    quads = inverse.reshape(-1, 4)
    vertices = np.asarray(origin, dtype=np.float64) + h * nodes.astype(np.float64)
    surface = quads_to_trimesh(vertices, quads)
    _, counts = surface.edges()
    if np.any(counts != 2):
        raise NonManifoldError("Occupancy boundary touches itself along an edge")
    return surface


def box_surface(lo, hi, divisions: int = 1) -> TriMesh:
    """Closed box surface with each face split into divisions x divisions quads."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    occupancy = np.ones((divisions,) * 3, dtype=bool)
    unit = voxel_surface(occupancy, origin=(0.0, 0.0, 0.0), h=1.0 / divisions)
    return TriMesh(lo + unit.vertices * (hi - lo), unit.triangles)
