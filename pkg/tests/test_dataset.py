import json

import numpy as np
import pytest

from config import DatasetConfig
from dataset import (
    DeformParams,
    PrimitiveKind,
    assemble_configuration,
    build_dataset,
    build_primitive,
    configuration_mesh,
    configuration_type,
    context_vector,
    crosses_units,
    farthest_point_sample,
    load_dataset,
    parse_context,
    random_deform,
    save_dataset,
    synthesize_training_pair,
)
from diffusion import forward_closed, linear_schedule
from frames import decode_frame, encode_frame, frame_mask
from geometry import mesh_genus, point_to_surface_distance


@pytest.fixture(scope="module")
def schedule():
    return linear_schedule(500, 1e-4, 0.02)


@pytest.fixture(scope="module")
def stacked_cloud():
    return assemble_configuration(8, seed=5)


# ============================================
# Primitives
# ============================================

def test_cube_points_on_surface():
    mesh, cloud = build_primitive(PrimitiveKind.CUBE, seed=3)
    assert cloud.points.shape == (512, 3)
    assert np.allclose(np.abs(cloud.points - 0.5).max(axis=1), 0.5, atol=1e-12)
    assert mesh_genus(mesh) == 0


@pytest.mark.parametrize("kind", [PrimitiveKind.CUBE_HOLE_X, PrimitiveKind.CUBE_HOLE_Y, PrimitiveKind.CUBE_HOLE_Z])
def test_holed_primitives(kind):
    mesh, cloud = build_primitive(kind, seed=4)
    assert mesh_genus(mesh) == 1
    assert np.isclose(mesh.enclosed_volume(), 1.0 - 1.0 / 9.0)
    assert point_to_surface_distance(cloud.points, mesh).max() < 1e-9
    others = [a for a in range(3) if a != kind.hole_axis]
    inner = np.all((cloud.points[:, others] > 1 / 3 + 1e-9) & (cloud.points[:, others] < 2 / 3 - 1e-9), axis=1)
    assert not inner.any()


def test_primitive_determinism():
    _, a = build_primitive(PrimitiveKind.CUBE_HOLE_Z, seed=9)
    _, b = build_primitive(PrimitiveKind.CUBE_HOLE_Z, seed=9)
    _, c = build_primitive(PrimitiveKind.CUBE_HOLE_Z, seed=10)
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)


def test_farthest_point_sample_distinct(rng):
    points = rng.random((200, 3))
    picked = farthest_point_sample(points, 50, rng)
    assert len(np.unique(picked)) == 50
    with pytest.raises(ValueError):
        farthest_point_sample(points, 201, rng)


# ============================================
# Configurations
# ============================================

def test_configuration_types():
    assert configuration_type(0).kinds == (PrimitiveKind.CUBE,)
    assert configuration_type(2).kinds == (PrimitiveKind.CUBE_HOLE_Z,)
    assert configuration_type(2).units == (0,)
    assert configuration_type(3).units == (1,)
    assert configuration_type(8).units == (0, 1)
    with pytest.raises(ValueError):
        configuration_type(9)


def test_single_unit_placement():
    left = assemble_configuration(0, seed=1)
    right = assemble_configuration(1, seed=1)
    assert len(left) == 512 and len(right) == 512
    assert left.points[:, 0].min() >= 0.0 and left.points[:, 0].max() <= 1.0
    assert right.points[:, 0].min() >= 1.0 and right.points[:, 0].max() <= 2.0
    assert np.all(right.units == 1)


def test_stacked_configuration(stacked_cloud):
    assert len(stacked_cloud) == 1024
    assert np.array_equal(np.bincount(stacked_cloud.units), [512, 512])
    unit0 = stacked_cloud.points[stacked_cloud.units == 0]
    unit1 = stacked_cloud.points[stacked_cloud.units == 1]
    assert unit0[:, 0].max() == pytest.approx(1.0)
    assert unit1[:, 0].min() == pytest.approx(1.0)


def test_configuration_meshes():
    assert mesh_genus(configuration_mesh(8)) == 0
    assert configuration_mesh(8).enclosed_volume() == pytest.approx(2.0)
    assert mesh_genus(configuration_mesh(5)) == 1


@pytest.mark.parametrize("type_id", range(9))
def test_context_bits(type_id):
    context = context_vector(type_id)
    bits = np.flatnonzero(context)
    assert context.shape == (29,)
    assert set(np.unique(context)) <= {0.0, 1.0}
    assert np.all(bits % 4 == 0) and bits.max() <= 28
    if type_id == 8:
        assert bits.tolist() == [0, 4]
    else:
        assert bits.tolist() == [4 * type_id]


def test_parse_context():
    assert np.array_equal(parse_context(7), context_vector(7))
    assert np.array_equal(parse_context("3"), context_vector(3))
    mask = "1000" * 7 + "1"
    assert np.flatnonzero(parse_context(mask)).tolist() == [0, 4, 8, 12, 16, 20, 24, 28]
    for bad in ("12", "10x" + "0" * 26, "1" * 28):
        with pytest.raises(ValueError):
            parse_context(bad)


# ============================================
# Training pairs
# ============================================

def test_zero_deformation_drift(schedule, stacked_cloud):
    x0, meta = encode_frame(stacked_cloud.points)
    x_tgt, q, _ = synthesize_training_pair(x0, meta, DeformParams.zero(), schedule, seed=0,
                                           units=stacked_cloud.units)
    expected = (1.0 - np.sqrt(schedule.alpha_bars[schedule.T])) * x0 / schedule.c(schedule.T)
    assert np.max(np.abs(q - expected)) < 1e-12
    assert np.max(np.abs(x_tgt - x0)) < 1e-12


def test_pair_forward_mean_is_target(schedule):
    cloud = assemble_configuration(2, seed=7)
    x0, meta = encode_frame(cloud.points)
    rng = np.random.default_rng(1)
    deform = random_deform(rng, cloud.points.min(axis=0), cloud.points.max(axis=0))
    x_tgt, q, _ = synthesize_training_pair(x0, meta, deform, schedule, seed=1, units=cloud.units)

    ab = schedule.alpha_bars[schedule.T]
    assert np.max(np.abs(np.sqrt(ab) * x0 + schedule.c(schedule.T) * q - x_tgt)) < 1e-12
    assert not np.allclose(x_tgt, x0)
    padded = ~frame_mask(meta)
    assert np.all(x_tgt[padded] == 0.0) and np.all(q[padded] == 0.0)

    # Monte-Carlo check of the endpoint mean on a handful of live coordinates.
    live = np.flatnonzero(frame_mask(meta).reshape(-1))
    picks = np.random.default_rng(2).choice(live, size=16, replace=False)
    zbar = np.random.default_rng(3).standard_normal((100_000, 16))
    samples = forward_closed(x0.reshape(-1)[picks], schedule.T, q.reshape(-1)[picks], zbar, schedule)
    error = np.abs(samples.mean(axis=0) - x_tgt.reshape(-1)[picks]) / np.sqrt(1.0 - ab)
    assert error.mean() < 0.01
    assert error.max() < 0.02


def test_crosses_units():
    before = np.array([[0.9, 0.5, 0.5], [1.0, 0.5, 0.5], [1.5, 0.5, 0.5]])
    units = np.array([0, 0, 1])
    assert not crosses_units(before, before + [0.0, 0.0, 0.0], units)
    # Points on the shared face may drift to either side.
    assert not crosses_units(before, before + [[0.0, 0, 0], [0.05, 0, 0], [0.0, 0, 0]], units)
    assert crosses_units(before, before + [[0.2, 0, 0], [0.0, 0, 0], [0.0, 0, 0]], units)
    assert crosses_units(before, before + [[0.0, 0, 0], [0.0, 0, 0], [-0.6, 0, 0]], units)
    # Leaving through an outer face is not a crossing.
    assert not crosses_units(before, before + [[-1.0, 0, 0], [0.0, 0, 0], [0.6, 0, 0]], units)
    assert not crosses_units(before, before + 5.0, np.zeros(3, dtype=int))


def test_crossing_deformation_is_resampled(schedule, stacked_cloud):
    x0, meta = encode_frame(stacked_cloud.points)
    push = DeformParams(np.array([[1.0, 0.5, 0.5]]), np.array([[0.5, 0.0, 0.0]]), 0.4, 0.5)
    points = decode_frame(x0, meta)
    assert crosses_units(points, points + push.displacement(points), stacked_cloud.units)

    x_tgt, q, applied = synthesize_training_pair(x0, meta, push, schedule, seed=3, units=stacked_cloud.units)
    assert applied is not push
    assert applied.amplitude < push.amplitude
    moved = decode_frame(x_tgt, meta)
    assert not crosses_units(points, moved, stacked_cloud.units)


def test_displacement_amplitude_bound(rng):
    points = rng.random((300, 3))
    deform = DeformParams(rng.random((6, 3)), rng.normal(size=(6, 3)), 0.5, 0.15)
    assert np.linalg.norm(deform.displacement(points), axis=1).max() <= 0.15 + 1e-12


# ============================================
# Dataset files
# ============================================

def test_build_save_load(tmp_path):
    schedule = linear_schedule(50, 1e-4, 0.02)
    config = DatasetConfig(types=[0, 8], pairs_per_type=1, seed=2)
    records = build_dataset(config, schedule)
    again = build_dataset(config, schedule)
    assert [r.type_id for r in records] == [0, 8]
    assert np.array_equal(records[1].x0, again[1].x0)
    assert np.array_equal(records[1].q, again[1].q)
    assert records[1].meta.n_points == 1024

    paths = save_dataset(records, str(tmp_path))
    with open(paths["manifest"], "r", encoding="utf-8") as f:
        manifest = json.load(f)
    assert manifest[0] == {"type": 0, "seed": records[0].seed, "deform_seed": records[0].deform_seed}

    loaded = load_dataset(str(tmp_path))
    assert len(loaded) == 2
    for a, b in zip(records, loaded):
        assert np.max(np.abs(a.x0 - b.x0)) < 1e-6
        assert np.max(np.abs(a.target - b.target)) < 1e-6
        assert np.array_equal(a.context, b.context)
        assert np.array_equal(a.meta.order, b.meta.order)
    x0, q, context, mask = loaded[0].as_training_item()
    assert mask.sum() == 3 * 512 and context[0] == 1.0
