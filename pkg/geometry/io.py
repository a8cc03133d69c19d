"""Mesh file I/O: OBJ and STL readers, OBJ and VTK legacy writers."""

import logging
import os
import struct

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from geometry.mesh import HexMesh, MeshParseError, TriMesh

logger = logging.getLogger(__name__)

WELD_RELATIVE_TOLERANCE = 1e-8
VTK_HEXAHEDRON = 12

_STL_RECORD = np.dtype([
    ("normal", "<f4", (3,)),
    ("corners", "<f4", (3, 3)),
    ("attribute", "<u2"),
])


# ============================================
# Readers
# ============================================

def load_surface_mesh(path: str) -> TriMesh:
    """Load a triangle surface from an OBJ or STL file.

    STL corner lists are welded with tolerance 1e-8 x bbox diagonal.

    Raises:
        FileNotFoundError: path does not exist
        MeshParseError: malformed record or non-triangular face
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    ext = os.path.splitext(path)[1].lower()
    if ext == ".obj":
        mesh = _read_obj(path)
    elif ext == ".stl":
        mesh = _read_stl(path)
    else:
        raise MeshParseError(f"Unsupported mesh format '{ext}' (expected .obj or .stl)")
    mesh = _drop_zero_area(mesh)
    logger.info(f"Loaded {path}: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles")
    return mesh


def _read_obj(path: str) -> TriMesh:
    vertices, faces = [], []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            tokens = line.split()
            if not tokens or tokens[0].startswith("#"):
                continue
            flag = tokens[0]
            if flag == "v":
                try:
                    vertices.append([float(tok) for tok in tokens[1:4]])
                except ValueError as e:
                    raise MeshParseError(f"{path}:{line_no}: bad vertex record ({e})") from e
                if len(vertices[-1]) != 3:
                    raise MeshParseError(f"{path}:{line_no}: vertex needs 3 coordinates")
            elif flag == "f":
                if len(tokens) != 4:
                    raise MeshParseError(
                        f"{path}:{line_no}: non-triangular face with {len(tokens) - 1} vertices"
                    )
                try:
                    face = [int(tok.split("/")[0]) for tok in tokens[1:]]
                except ValueError as e:
                    raise MeshParseError(f"{path}:{line_no}: bad face record ({e})") from e
                # OBJ indices are 1-based; negative values count back from the end.
                face = [idx - 1 if idx > 0 else len(vertices) + idx for idx in face]
                if min(face) < 0 or max(face) >= len(vertices):
                    raise MeshParseError(f"{path}:{line_no}: face index out of range")
                faces.append(face)
    return TriMesh(np.array(vertices, dtype=np.float64).reshape(-1, 3),
                   np.array(faces, dtype=np.int64).reshape(-1, 3))


def _read_stl(path: str) -> TriMesh:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) >= 84:
        (count,) = struct.unpack_from("<I", data, 80)
        if len(data) == 84 + count * _STL_RECORD.itemsize:
            records = np.frombuffer(data, dtype=_STL_RECORD, count=count, offset=84)
            corners = records["corners"].astype(np.float64).reshape(-1, 3)
            return weld_corners(corners)
        if not data.lstrip().startswith(b"solid"):
            raise MeshParseError(
                f"{path}: binary STL declares {count} facets but has {len(data)} bytes "
                f"(offset {84 + count * _STL_RECORD.itemsize} expected)"
            )
    return weld_corners(_parse_ascii_stl(path, data))


def _parse_ascii_stl(path: str, data: bytes) -> np.ndarray:
    corners = []
    in_loop = 0
    for line_no, raw in enumerate(data.decode("ascii", errors="replace").splitlines(), start=1):
        tokens = raw.split()
        if not tokens:
            continue
        if tokens[0] == "outer":
            in_loop = 0
        elif tokens[0] == "vertex":
            try:
                corners.append([float(tok) for tok in tokens[1:4]])
            except ValueError as e:
                raise MeshParseError(f"{path}:{line_no}: bad vertex record ({e})") from e
            in_loop += 1
        elif tokens[0] == "endloop" and in_loop != 3:
            raise MeshParseError(f"{path}:{line_no}: non-triangular facet with {in_loop} vertices")
    if not corners:
        raise MeshParseError(f"{path}: no facets found")
    return np.array(corners, dtype=np.float64)


def weld_corners(corners: np.ndarray) -> TriMesh:
    """Merge a facet corner list (3 rows per triangle) into an indexed mesh.

    Corners closer than 1e-8 x bbox diagonal are merged. New vertex ids
    follow lexicographic (x, y, z) order so the result is independent of
    facet order.
    """
    corners = np.asarray(corners, dtype=np.float64).reshape(-1, 3)
    diagonal = float(np.linalg.norm(corners.max(axis=0) - corners.min(axis=0)))
    tol = WELD_RELATIVE_TOLERANCE * diagonal

    rank = np.empty(len(corners), dtype=np.int64)
    rank[np.lexsort((corners[:, 2], corners[:, 1], corners[:, 0]))] = np.arange(len(corners))

    pairs = cKDTree(corners).query_pairs(tol, output_type="ndarray")
    graph = sparse.coo_matrix(
        (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])),
        shape=(len(corners), len(corners)),
    )
    _, labels = connected_components(graph, directed=False)

    # Representative of each cluster = member with the lowest lexicographic rank.
    first_rank = np.full(labels.max() + 1, len(corners), dtype=np.int64)
    np.minimum.at(first_rank, labels, rank)
    cluster_order = np.argsort(first_rank)
    new_id = np.empty_like(cluster_order)
    new_id[cluster_order] = np.arange(len(cluster_order))

    by_rank = np.argsort(rank)
    representative = by_rank[first_rank[cluster_order]]
    vertices = corners[representative]
    triangles = new_id[labels].reshape(-1, 3)
    return TriMesh(vertices, triangles)


def _drop_zero_area(mesh: TriMesh) -> TriMesh:
    tri = mesh.triangles
    distinct = (tri[:, 0] != tri[:, 1]) & (tri[:, 1] != tri[:, 2]) & (tri[:, 0] != tri[:, 2])
    keep = distinct & (mesh.triangle_areas() > 0.0)
    if np.all(keep):
        return mesh
    logger.warning(f"Dropping {int(np.sum(~keep))} zero-area triangles")
    return TriMesh(mesh.vertices, tri[keep])


# ============================================
# Writers
# ============================================

def write_surface_obj(mesh: TriMesh, path: str) -> str:
    """Write a triangle mesh as OBJ with round-trippable coordinates."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for v in mesh.vertices:
            f.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for t in mesh.triangles:
            f.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")
    return path


def write_hexmesh_vtk(mesh: HexMesh, path: str, scaled_jacobian: np.ndarray | None = None) -> str:
    """Write a hex mesh as a VTK legacy 3.0 ASCII unstructured grid.

    Coordinates use 17 significant digits so readers recover the float64
    values exactly. Per-hex fields in ``mesh.cell_data`` (plus the optional
    ``scaled_jacobian`` array) are written as CELL_DATA scalars in name order.

    Returns:
        The written path
    """
    cell_data = dict(mesh.cell_data)
    if scaled_jacobian is not None:
        cell_data["scaled_jacobian"] = scaled_jacobian
    for name, values in cell_data.items():
        if len(values) != mesh.n_hexes:
            raise ValueError(f"cell field '{name}' has {len(values)} values for {mesh.n_hexes} hexes")

    lines = [
        "# vtk DataFile Version 3.0",
        "polycube-hexgen hex mesh",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_vertices} double",
    ]
    lines.extend(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}" for v in mesh.vertices)
    lines.append(f"CELLS {mesh.n_hexes} {9 * mesh.n_hexes}")
    lines.extend("8 " + " ".join(str(i) for i in h) for h in mesh.hexes)
    lines.append(f"CELL_TYPES {mesh.n_hexes}")
    lines.extend(str(VTK_HEXAHEDRON) for _ in range(mesh.n_hexes))
    if cell_data:
        lines.append(f"CELL_DATA {mesh.n_hexes}")
        for name in sorted(cell_data):
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(f"{float(x):.17g}" for x in cell_data[name])

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
    return path


def read_hexmesh_vtk(path: str) -> HexMesh:
    """Read a hexahedral VTK legacy ASCII file written by write_hexmesh_vtk.

    Raises:
        MeshParseError: unexpected section, non-hex cell or short data
    """
    with open(path, "r", encoding="ascii") as f:
        tokens = f.read().split("\n")

    def section(prefix: str) -> int:
        for i, line in enumerate(tokens):
            if line.startswith(prefix):
                return i
        raise MeshParseError(f"{path}: missing {prefix} section")

    p = section("POINTS")
    n_points = int(tokens[p].split()[1])
    try:
        vertices = np.array([[float(x) for x in tokens[p + 1 + i].split()]
                             for i in range(n_points)], dtype=np.float64)
    except (ValueError, IndexError) as e:
        raise MeshParseError(f"{path}:{p + 2}: bad POINTS data ({e})") from e

    c = section("CELLS")
    n_cells = int(tokens[c].split()[1])
    hexes = []
    for i in range(n_cells):
        record = [int(x) for x in tokens[c + 1 + i].split()]
        if record[0] != 8:
            raise MeshParseError(f"{path}:{c + 2 + i}: cell with {record[0]} vertices is not a hex")
        hexes.append(record[1:])

    t = section("CELL_TYPES")
    types = {int(tokens[t + 1 + i]) for i in range(n_cells)}
    if types - {VTK_HEXAHEDRON}:
        raise MeshParseError(f"{path}: unsupported cell types {sorted(types)}")

    cell_data = {}
    for i, line in enumerate(tokens):
        if line.startswith("SCALARS"):
            name = line.split()[1]
            start = i + 2
            cell_data[name] = np.array([float(tokens[start + k]) for k in range(n_cells)])
    return HexMesh(vertices, np.array(hexes, dtype=np.int64).reshape(-1, 8), cell_data)
