import numpy as np
import pytest

from config import QualityConfig
from geometry import HexMesh, box_surface, closest_points
from hexmesh import (
    ParameterizationError,
    PillowError,
    PointLocationError,
    SegmentationError,
    boundary_quads,
    generate_hex_lattice,
    harmonic_parameterize,
    improve_quality,
    locate_in_patch,
    map_to_physical,
    parameterize_all,
    pillow_boundary,
    render_histogram,
    scaled_jacobian,
    segment_surface,
    transfinite_block,
)
from hexmesh.optimization import _MeshState, quality_energy
from polycube import PolycubeComplex, assign_vertices

UNIT_CUBE = PolycubeComplex(1.0, (0.0, 0.0, 0.0), [[[0, 0, 0], [1, 1, 1]]])
STACK = PolycubeComplex(1.0, (0.0, 0.0, 0.0), [[[0, 0, 0], [1, 1, 1]], [[1, 0, 0], [2, 1, 1]]])
BALL_CUBE = PolycubeComplex(2.0, (-1.0, -1.0, -1.0), [[[0, 0, 0], [1, 1, 1]]])


def _sphere(divisions=6):
    cube = box_surface((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0), divisions=divisions)
    return cube.with_vertices(cube.vertices / np.linalg.norm(cube.vertices, axis=1, keepdims=True))


def _segment(mesh, pc):
    assignment = assign_vertices(mesh.vertices, mesh.vertex_normals(), pc)
    return segment_surface(mesh, assignment, pc)


# ============================================
# Lattice
# ============================================

@pytest.mark.parametrize("depth", range(6))
def test_single_cube_lattice_counts(depth):
    n = 2 ** depth
    lattice = generate_hex_lattice(UNIT_CUBE, depth)
    assert lattice.n_hexes == n ** 3
    assert lattice.n_vertices == (n + 1) ** 3


def test_depth_five_matches_reference_counts():
    lattice = generate_hex_lattice(UNIT_CUBE, 5)
    assert (lattice.n_vertices, lattice.n_hexes) == (35937, 32768)


@pytest.mark.parametrize("depth", range(5))
def test_stacked_lattice_counts(depth):
    n = 2 ** depth
    lattice = generate_hex_lattice(STACK, depth)
    assert lattice.n_hexes == 2 * 8 ** depth
    assert lattice.n_vertices == (n + 1) ** 2 * (2 * n + 1)


def test_lattice_is_conforming_and_perfect():
    lattice = generate_hex_lattice(STACK, 2)
    lattice.validate()
    assert np.allclose(scaled_jacobian(lattice).per_hex, 1.0)
    assert np.bincount(lattice.cell_data["cuboid"]).tolist() == [64, 64]


def test_negative_depth_rejected():
    with pytest.raises(ValueError):
        generate_hex_lattice(UNIT_CUBE, -1)


# ============================================
# Scaled Jacobian
# ============================================

def _corner_oracle(corners):
    table = {0: (1, 3, 4), 1: (2, 0, 5), 2: (3, 1, 6), 3: (0, 2, 7),
             4: (7, 5, 0), 5: (4, 6, 1), 6: (5, 7, 2), 7: (6, 4, 3)}
    values = []
    for c, (a, b, d) in table.items():
        edges = np.array([corners[a] - corners[c], corners[b] - corners[c], corners[d] - corners[c]])
        edges /= np.linalg.norm(edges, axis=1, keepdims=True)
        values.append(np.linalg.det(edges))
    return min(values)


def test_unit_hex_is_perfect(unit_hex):
    report = scaled_jacobian(unit_hex)
    assert report.min_sj == pytest.approx(1.0)
    assert report.inverted == 0 and report.degenerate == 0
    assert report.histogram.sum() == 1 and report.histogram[-1] == 1


def test_swapped_top_corners_invert(unit_hex):
    hexes = unit_hex.hexes[:, [0, 1, 2, 3, 4, 5, 7, 6]]
    report = scaled_jacobian(HexMesh(unit_hex.vertices, hexes))
    assert report.min_sj < 0
    assert report.inverted == 1


def test_sheared_hex_matches_determinant(unit_hex):
    vertices = unit_hex.vertices.copy()
    vertices[4:] += [0.5, 0.0, 0.0]
    report = scaled_jacobian(HexMesh(vertices, unit_hex.hexes))
    assert report.min_sj == pytest.approx(_corner_oracle(vertices), abs=1e-12)
    assert report.min_sj == pytest.approx(1.0 / np.sqrt(1.25))


def test_degenerate_corner_flagged(unit_hex):
    vertices = unit_hex.vertices.copy()
    vertices[1] = vertices[0]
    report = scaled_jacobian(HexMesh(vertices, unit_hex.hexes))
    assert report.degenerate == 1
    assert report.min_sj <= 0.0


def test_report_dict_and_histogram_text():
    report = scaled_jacobian(generate_hex_lattice(STACK, 1))
    data = report.to_dict()
    assert data["hex_count"] == 16
    assert sum(data["histogram"]) == 16
    assert len(data["bin_edges"]) == 41
    text = render_histogram(report)
    assert "min SJ: 1.0000" in text
    assert "16" in text.splitlines()[-1]


# ============================================
# Pillowing
# ============================================

def test_pillow_single_hex(unit_hex):
    pillowed = pillow_boundary(unit_hex)
    assert pillowed.n_hexes == 7
    assert pillowed.n_vertices == 16
    assert np.array_equal(pillowed.vertices[:8], unit_hex.vertices)
    assert set(np.unique(boundary_quads(pillowed)).tolist()) == set(range(8))
    assert pillowed.cell_data["pillow"].sum() == 6
    assert scaled_jacobian(pillowed).min_sj > 0


def test_pillow_count_invariant():
    lattice = generate_hex_lattice(STACK, 1)
    quads = boundary_quads(lattice)
    pillowed = pillow_boundary(lattice)
    assert pillowed.n_hexes == lattice.n_hexes + len(quads)
    assert np.array_equal(pillowed.vertices[:lattice.n_vertices], lattice.vertices)
    assert pillowed.cell_data["cuboid"][lattice.n_hexes:].tolist() == [-1] * len(quads)
    pillowed.validate()


def test_pillow_halves_oversized_offset(unit_hex):
    pillowed = pillow_boundary(unit_hex, fraction=0.99)
    assert np.linalg.norm(pillowed.vertices[8] - pillowed.vertices[0]) == pytest.approx(0.495)
    assert scaled_jacobian(pillowed).min_sj > 0


def test_pillow_rejects_non_manifold_boundary(unit_hex):
    second = unit_hex.vertices + [1.0, 1.0, 0.0]
    vertices = np.concatenate([unit_hex.vertices, second])
    hexes = np.array([list(range(8)), [2, 9, 10, 11, 6, 13, 14, 15]])
    vertices[[9, 10, 11, 13, 14, 15]] = second[[1, 2, 3, 5, 6, 7]]
    with pytest.raises(PillowError):
        pillow_boundary(HexMesh(vertices, hexes))


# ============================================
# Segmentation and parameterization
# ============================================

def test_cube_segments_into_six_disks(fine_cube):
    labels = _segment(fine_cube, UNIT_CUBE)
    assert labels.n_patches == 6
    assert sorted(set(labels.triangle_labels.tolist())) == list(range(6))
    for facet in UNIT_CUBE.facets:
        tris = fine_cube.triangles[labels.patch(facet.index)]
        assert len(tris) == 32
        coords = fine_cube.vertices[tris][..., facet.axis]
        assert np.allclose(coords, facet.plane)


def test_sphere_segments_into_six_disks():
    sphere = _sphere()
    labels = _segment(sphere, BALL_CUBE)
    assert labels.n_patches == 6
    corners = sphere.vertices[labels.corner_vertices]
    assert np.allclose(np.abs(corners), 1.0 / np.sqrt(3.0))


def test_missing_facet_is_reported(fine_cube):
    cells = [[[i, j, 0], [i + 1, j + 1, 3]] for i in range(3) for j in range(3) if (i, j) != (1, 1)]
    ring = PolycubeComplex(1.0 / 3.0, (0.0, 0.0, 0.0), cells)
    with pytest.raises(SegmentationError):
        _segment(fine_cube, ring)


def test_flat_patch_parameterization_is_identity(fine_cube):
    labels = _segment(fine_cube, UNIT_CUBE)
    for facet in UNIT_CUBE.facets:
        param = harmonic_parameterize(fine_cube, labels, facet.index)
        expected = fine_cube.vertices[param.vertices][:, list(facet.tangents)]
        assert np.max(np.abs(param.uv - expected)) < 1e-9
        assert param.residual < 1e-10
        assert param.weights == "cotangent"


def test_sphere_parameterization_is_bijective():
    sphere = _sphere()
    labels = _segment(sphere, BALL_CUBE)
    params = parameterize_all(sphere, labels)
    assert len(params) == 6
    for facet_id, param in params.items():
        facet = BALL_CUBE.facets[facet_id]
        assert np.all(param.signed_areas() * facet.orientation > 0)
        boundary = np.isin(param.vertices, labels.loops[facet_id])
        on_side = np.isclose(param.uv, 0.0, atol=1e-12) | np.isclose(param.uv, 1.0, atol=1e-12)
        assert np.all(on_side[boundary].any(axis=1))
        inside = param.uv[~boundary]
        assert np.all((inside > 0.0) & (inside < 1.0))


def test_corner_out_of_order_is_rejected(fine_cube):
    labels = _segment(fine_cube, UNIT_CUBE)
    quad = UNIT_CUBE.facet_quads[0]
    swapped = labels.corner_vertices.copy()
    swapped[[quad[1], quad[3]]] = swapped[[quad[3], quad[1]]]
    broken = type(labels)(labels.triangle_labels, labels.triangles, labels.loops, swapped, labels.complex)
    with pytest.raises(ParameterizationError):
        harmonic_parameterize(fine_cube, broken, 0)


# ============================================
# Mapping
# ============================================

def test_transfinite_block_reproduces_linear_field():
    grid = np.stack(np.meshgrid(np.linspace(0, 2, 5), np.linspace(0, 1, 4), np.linspace(0, 3, 6),
                                indexing="ij"), axis=-1)
    field = grid @ np.array([[1.0, 0.2, 0.0], [0.0, 1.0, 0.3], [0.1, 0.0, 1.0]])
    scrambled = field.copy()
    scrambled[1:-1, 1:-1, 1:-1] = 0.0
    assert np.allclose(transfinite_block(scrambled), field, atol=1e-12)


def test_mapping_polycube_boundary_is_identity(fine_cube):
    labels = _segment(fine_cube, UNIT_CUBE)
    params = parameterize_all(fine_cube, labels)
    lattice = generate_hex_lattice(UNIT_CUBE, 2)
    mapped = map_to_physical(lattice, params, fine_cube, UNIT_CUBE)
    assert mapped.n_vertices == lattice.n_vertices and mapped.n_hexes == lattice.n_hexes
    assert np.max(np.abs(mapped.vertices - lattice.vertices)) < 1e-9


def test_mapping_stack_is_identity():
    surface = box_surface((0.0, 0.0, 0.0), (2.0, 1.0, 1.0), divisions=6)
    labels = _segment(surface, STACK)
    assert labels.n_patches == 10
    params = parameterize_all(surface, labels)
    lattice = generate_hex_lattice(STACK, 1)
    mapped = map_to_physical(lattice, params, surface, STACK)
    assert np.max(np.abs(mapped.vertices - lattice.vertices)) < 1e-9


def test_sphere_boundary_nodes_land_on_surface():
    sphere = _sphere()
    labels = _segment(sphere, BALL_CUBE)
    params = parameterize_all(sphere, labels)
    mapped = map_to_physical(generate_hex_lattice(BALL_CUBE, 2), params, sphere, BALL_CUBE)
    boundary = np.unique(boundary_quads(mapped))
    _, distance = closest_points(sphere, mapped.vertices[boundary])
    assert distance.max() <= 1e-6 * sphere.bbox_diagonal()


def test_locate_outside_patch_raises(fine_cube):
    labels = _segment(fine_cube, UNIT_CUBE)
    param = harmonic_parameterize(fine_cube, labels, 0)
    with pytest.raises(PointLocationError):
        locate_in_patch([[1.5, 0.5]], param, fine_cube)


# ============================================
# Quality improvement
# ============================================

FAST = QualityConfig(max_outer_iterations=3, smoothing_sweeps=3, descent_steps=5)


def test_perfect_grid_is_fixed_point(fine_cube):
    lattice = generate_hex_lattice(UNIT_CUBE, 2)
    improved, report = improve_quality(lattice, fine_cube, FAST)
    assert np.max(np.abs(improved.vertices - lattice.vertices)) < 1e-12
    assert report.min_sj == pytest.approx(1.0)


def test_jittered_grid_improves(fine_cube):
    lattice = generate_hex_lattice(UNIT_CUBE, 3)
    rng = np.random.default_rng(11)
    interior = np.setdiff1d(np.arange(lattice.n_vertices), np.unique(boundary_quads(lattice)))
    vertices = lattice.vertices.copy()
    vertices[interior] += rng.uniform(-0.2, 0.2, size=(len(interior), 3)) / 8.0
    jittered = lattice.with_vertices(vertices)
    before = scaled_jacobian(jittered).min_sj

    improved, report = improve_quality(jittered, fine_cube, FAST)
    assert report.min_sj > before
    assert all(b >= a for a, b in zip(report.history, report.history[1:]))
    boundary = np.unique(boundary_quads(improved))
    _, distance = closest_points(fine_cube, improved.vertices[boundary])
    assert distance.max() <= 1e-3 * fine_cube.bbox_diagonal()


def test_energy_gradient_matches_finite_differences(unit_cube, unit_hex):
    rng = np.random.default_rng(3)
    vertices = unit_hex.vertices + rng.uniform(-0.05, 0.05, size=(8, 3))
    mesh = unit_hex.with_vertices(vertices)
    state = _MeshState(mesh, unit_cube)
    _, gradient = quality_energy(state, vertices, 1.0, 0.1)
    step = 1e-6
    for index in [(0, 0), (3, 1), (6, 2)]:
        plus, minus = vertices.copy(), vertices.copy()
        plus[index] += step
        minus[index] -= step
        numeric = (quality_energy(state, plus, 1.0, 0.1, with_gradient=False)[0]
                   - quality_energy(state, minus, 1.0, 0.1, with_gradient=False)[0]) / (2 * step)
        assert numeric == pytest.approx(gradient[index], rel=1e-5, abs=1e-8)
