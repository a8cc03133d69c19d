import numpy as np
import pytest

from geometry import (
    DegenerateBoundsError,
    HexMesh,
    MeshParseError,
    NonManifoldError,
    NormalizationTransform,
    OpenBoundaryError,
    TriMesh,
    box_surface,
    boundary_quads,
    closest_points,
    load_surface_mesh,
    mesh_genus,
    normalize_for_frame,
    read_hexmesh_vtk,
    voxel_surface,
    write_hexmesh_vtk,
    write_surface_obj,
)
from geometry.io import _STL_RECORD


def _write_binary_stl(path, mesh: TriMesh):
    records = np.zeros(mesh.n_triangles, dtype=_STL_RECORD)
    records["normal"] = mesh.face_normals()
    records["corners"] = mesh.triangle_corners()
    with open(path, "wb") as f:
        f.write(b"\0" * 80)
        f.write(np.uint32(mesh.n_triangles).tobytes())
        f.write(records.tobytes())


# ============================================
# TriMesh / topology
# ============================================

def test_cube_surface_counts(unit_cube):
    edges, counts = unit_cube.edges()
    assert unit_cube.n_vertices == 8
    assert unit_cube.n_triangles == 12
    assert len(edges) == 18
    assert np.all(counts == 2)


def test_cube_volume_and_orientation(unit_cube):
    assert unit_cube.enclosed_volume() == pytest.approx(1.0)
    flipped = TriMesh(unit_cube.vertices, unit_cube.triangles[:, ::-1])
    assert flipped.enclosed_volume() == pytest.approx(-1.0)
    assert flipped.oriented_outward().enclosed_volume() == pytest.approx(1.0)


def test_vertex_normals_point_outward(unit_cube):
    normals = unit_cube.vertex_normals()
    outward = unit_cube.vertices - 0.5
    assert np.all(np.einsum("ij,ij->i", normals, outward) > 0)
    assert np.allclose(np.linalg.norm(normals, axis=1), 1.0)


def test_vertex_neighbors_symmetric(fine_cube):
    neighbors = fine_cube.vertex_neighbors()
    for i, nbrs in enumerate(neighbors):
        for j in nbrs:
            assert i in neighbors[j]


def test_genus_cube(unit_cube):
    assert mesh_genus(unit_cube) == 0


def test_genus_torus(voxel_torus):
    assert mesh_genus(voxel_torus) == 1


def test_genus_eight(voxel_eight):
    assert mesh_genus(voxel_eight) == 2


def test_euler_characteristic_identity(voxel_eight):
    edges, _ = voxel_eight.edges()
    chi = voxel_eight.n_vertices - len(edges) + voxel_eight.n_triangles
    assert chi == 2 - 2 * mesh_genus(voxel_eight)


def test_genus_open_boundary(unit_cube):
    with pytest.raises(OpenBoundaryError):
        mesh_genus(TriMesh(unit_cube.vertices, unit_cube.triangles[:-1]))


def test_genus_non_manifold(unit_cube):
    tris = np.vstack([unit_cube.triangles, unit_cube.triangles[:1]])
    with pytest.raises(NonManifoldError):
        mesh_genus(TriMesh(unit_cube.vertices, tris))


def test_genus_disconnected_returns_list(unit_cube, voxel_torus):
    offset = voxel_torus.vertices + np.array([10.0, 0.0, 0.0])
    vertices = np.vstack([unit_cube.vertices, offset])
    triangles = np.vstack([unit_cube.triangles, voxel_torus.triangles + unit_cube.n_vertices])
    assert mesh_genus(TriMesh(vertices, triangles)) == [0, 1]


def test_voxel_surface_rejects_edge_contact():
    occupancy = np.zeros((2, 2, 1), dtype=bool)
    occupancy[0, 0, 0] = occupancy[1, 1, 0] = True
    with pytest.raises(NonManifoldError):
        voxel_surface(occupancy)


def test_triangle_index_out_of_range():
    with pytest.raises(Exception):
        TriMesh(np.zeros((3, 3)), [[0, 1, 3]])


# ============================================
# Normalization
# ============================================

def test_normalize_corner_point():
    points = np.array([[-2.0, -2.0, -2.0], [2.0, 2.0, 2.0]])
    frame, _ = normalize_for_frame(points)
    assert np.allclose(frame[1], [1.0, 0.5, 0.5])
    assert np.allclose(frame[0], [0.0, -0.5, -0.5])


def test_normalize_center_maps_to_shifted_origin():
    points = np.array([[-2.0, -2.0, -2.0], [2.0, 2.0, 2.0], [0.0, 0.0, 0.0]])
    frame, _ = normalize_for_frame(points)
    assert np.allclose(frame[2], [0.5, 0.0, 0.0])


def test_normalize_round_trip(rng):
    points = rng.normal(size=(300, 3)) * [3.0, 0.2, 1.0] + 7.0
    frame, transform = normalize_for_frame(points)
    assert np.max(np.abs(transform.invert(frame) - points)) < 1e-12


def test_normalize_is_uniform(rng):
    points = rng.normal(size=(50, 3)) * [5.0, 1.0, 0.1]
    frame, _ = normalize_for_frame(points)
    d_in = np.linalg.norm(points[1:] - points[0], axis=1)
    d_out = np.linalg.norm(frame[1:] - frame[0], axis=1)
    ratios = d_out / d_in
    assert np.max(np.abs(ratios - ratios[0])) < 1e-12


def test_normalize_degenerate():
    with pytest.raises(DegenerateBoundsError):
        normalize_for_frame(np.ones((4, 3)))


def test_identity_transform():
    points = np.array([[0.1, -0.2, 0.3]])
    assert np.array_equal(NormalizationTransform.identity().apply(points), points)


# ============================================
# File I/O
# ============================================

def test_minimal_obj(tmp_path):
    path = tmp_path / "tri.obj"
    path.write_text("# one triangle\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    mesh = load_surface_mesh(str(path))
    assert mesh.n_vertices == 3
    assert mesh.n_triangles == 1


def test_obj_quad_rejected(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    with pytest.raises(MeshParseError, match="non-triangular face"):
        load_surface_mesh(str(path))


def test_obj_bad_vertex_reports_line(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text("v 0 0 0\nv 1 zero 0\n")
    with pytest.raises(MeshParseError, match=":2:"):
        load_surface_mesh(str(path))


def test_binary_stl_cube_welds(tmp_path, unit_cube):
    path = tmp_path / "cube.stl"
    _write_binary_stl(path, unit_cube)
    mesh = load_surface_mesh(str(path))
    assert mesh.n_vertices == 8
    assert mesh.n_triangles == 12
    assert mesh_genus(mesh) == 0


def test_ascii_stl(tmp_path, unit_cube):
    path = tmp_path / "cube.stl"
    lines = ["solid cube"]
    for tri in unit_cube.triangle_corners():
        lines += ["facet normal 0 0 0", "outer loop"]
        lines += [f"vertex {p[0]} {p[1]} {p[2]}" for p in tri]
        lines += ["endloop", "endfacet"]
    lines.append("endsolid cube")
    path.write_text("\n".join(lines))
    mesh = load_surface_mesh(str(path))
    assert mesh.n_vertices == 8
    assert mesh.n_triangles == 12


def test_obj_round_trip(tmp_path, fine_cube):
    path = write_surface_obj(fine_cube, str(tmp_path / "cube.obj"))
    mesh = load_surface_mesh(path)
    assert np.array_equal(mesh.vertices, fine_cube.vertices)
    assert np.array_equal(mesh.triangles, fine_cube.triangles)


def test_vtk_single_hex(tmp_path, unit_hex):
    path = write_hexmesh_vtk(unit_hex, str(tmp_path / "hex.vtk"))
    text = open(path).read()
    assert "POINTS 8 double" in text
    assert "CELLS 1 9" in text
    assert "CELL_TYPES 1\n12\n" in text


def test_vtk_two_hexes_connectivity(tmp_path):
    vertices = np.array([[x, y, z] for z in (0, 1) for y in (0, 1) for x in (0, 1, 2)], dtype=float)

    def vid(x, y, z):
        return z * 6 + y * 3 + x

    hexes = [[vid(x, 0, 0), vid(x + 1, 0, 0), vid(x + 1, 1, 0), vid(x, 1, 0),
              vid(x, 0, 1), vid(x + 1, 0, 1), vid(x + 1, 1, 1), vid(x, 1, 1)] for x in (0, 1)]
    path = write_hexmesh_vtk(HexMesh(vertices, hexes), str(tmp_path / "two.vtk"))
    assert "CELLS 2 18" in open(path).read()


def test_vtk_byte_stable(tmp_path, unit_hex):
    a = write_hexmesh_vtk(unit_hex, str(tmp_path / "a.vtk"), scaled_jacobian=np.ones(1))
    b = write_hexmesh_vtk(unit_hex, str(tmp_path / "b.vtk"), scaled_jacobian=np.ones(1))
    assert open(a, "rb").read() == open(b, "rb").read()


def test_vtk_read_back(tmp_path, rng):
    vertices = rng.random((8, 3))
    mesh = HexMesh(vertices, np.arange(8).reshape(1, 8))
    path = write_hexmesh_vtk(mesh, str(tmp_path / "hex.vtk"), scaled_jacobian=np.array([0.25]))
    loaded = read_hexmesh_vtk(path)
    assert np.array_equal(loaded.vertices, vertices)
    assert np.array_equal(loaded.hexes, mesh.hexes)
    assert loaded.cell_data["scaled_jacobian"][0] == 0.25


def test_vtk_external_reader_bit_exact(tmp_path, rng):
    meshio = pytest.importorskip("meshio")
    vertices = rng.random((8, 3))
    mesh = HexMesh(vertices, np.arange(8).reshape(1, 8))
    path = write_hexmesh_vtk(mesh, str(tmp_path / "hex.vtk"))
    loaded = meshio.read(path)
    assert np.array_equal(np.asarray(loaded.points, dtype=np.float64), vertices)
    assert loaded.cells[0].type == "hexahedron"


# ============================================
# Hex boundary and closest points
# ============================================

def test_single_hex_boundary_quads(unit_hex):
    quads = boundary_quads(unit_hex)
    assert len(quads) == 6
    unit_hex.validate()


def test_closest_points_on_cube(unit_cube):
    queries = np.array([[0.5, 0.5, 2.0], [2.0, 2.0, 2.0], [0.5, 0.5, 0.4], [-1.0, 0.5, 0.5]])
    points, dist = closest_points(unit_cube, queries)
    assert np.allclose(points[0], [0.5, 0.5, 1.0])
    assert np.allclose(points[1], [1.0, 1.0, 1.0])
    assert dist[2] == pytest.approx(0.4)
    assert np.allclose(points[3], [0.0, 0.5, 0.5])


def test_closest_points_match_brute_force(fine_cube, rng):
    from geometry.proximity import closest_point_on_triangles
    queries = rng.uniform(-0.5, 1.5, size=(40, 3))
    _, dist = closest_points(fine_cube, queries)
    corners = fine_cube.triangle_corners()
    for q, d in zip(queries, dist):
        rep = np.repeat(q[None], len(corners), axis=0)
        brute = closest_point_on_triangles(rep, corners[:, 0], corners[:, 1], corners[:, 2])
        assert d == pytest.approx(np.min(np.linalg.norm(brute - q, axis=1)), abs=1e-12)


def test_box_surface_scales():
    mesh = box_surface((0, 0, 0), (2.0, 1.0, 1.0), divisions=2)
    assert mesh.enclosed_volume() == pytest.approx(2.0)
    assert mesh_genus(mesh) == 0
