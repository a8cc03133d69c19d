"""Unit primitives (cube, cube with a through-hole) and their surface samples."""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from geometry.mesh import TriMesh, voxel_surface

logger = logging.getLogger(__name__)

# Configuration
POINTS_PER_UNIT = 512
CANDIDATES_PER_UNIT = 8192
# Primitives are built on a 3 x 3 x 3 lattice; the hole is the centre column.
LATTICE = 3


class PrimitiveKind(str, Enum):
    CUBE = "cube"
    CUBE_HOLE_X = "cube_hole_x"
    CUBE_HOLE_Y = "cube_hole_y"
    CUBE_HOLE_Z = "cube_hole_z"

    @property
    def hole_axis(self) -> int | None:
        return {"cube_hole_x": 0, "cube_hole_y": 1, "cube_hole_z": 2}.get(self.value)


@dataclass(frozen=True)
class SurfacePointCloud:
    """Ordered surface samples with the mesh they came from.

    Attributes:
        points: (N, 3) positions
        source: primitive kinds, one per occupied grid unit
        seed: sampling seed
        units: (N,) grid unit of every point
    """
    points: np.ndarray
    source: tuple[str, ...]
    seed: int
    units: np.ndarray

    def __post_init__(self):
        points = np.array(self.points, dtype=np.float64).reshape(-1, 3)
        units = np.array(self.units, dtype=np.int64).reshape(-1)
        if len(units) != len(points):
            raise ValueError(f"{len(units)} unit labels for {len(points)} points")
        points.setflags(write=False)
        units.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "units", units)

    def __len__(self) -> int:
        return len(self.points)


def primitive_occupancy(kind: PrimitiveKind) -> np.ndarray:
    """3 x 3 x 3 occupancy of a primitive; hole kinds clear the centre column."""
    occupancy = np.ones((LATTICE,) * 3, dtype=bool)
    axis = PrimitiveKind(kind).hole_axis
    if axis is not None:
        index = [1, 1, 1]
        index[axis] = slice(None)
        occupancy[tuple(index)] = False
    return occupancy


def primitive_mesh(kind: PrimitiveKind, origin=(0.0, 0.0, 0.0), edge: float = 1.0) -> TriMesh:
    """Watertight outward-oriented surface of a primitive with the given edge length."""
    return voxel_surface(primitive_occupancy(kind), origin=origin, h=edge / LATTICE)


def sample_surface(mesh: TriMesh, count: int, rng: np.random.Generator) -> np.ndarray:
    """Area-weighted uniform samples on a triangle mesh.

    Points are a + u (b - a) + v (c - a), so samples on an axis-aligned face
    keep that face's coordinate exactly.
    """
    areas = mesh.triangle_areas()
    tri = rng.choice(mesh.n_triangles, size=count, p=areas / areas.sum())
    u = rng.random(count)
    v = rng.random(count)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    corners = mesh.triangle_corners()[tri]
    a = corners[:, 0]
    return a + u[:, None] * (corners[:, 1] - a) + v[:, None] * (corners[:, 2] - a)


def farthest_point_sample(points: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of ``count`` points picked greedily by distance to the picked set."""
    n = len(points)
    if count > n:
        raise ValueError(f"Cannot pick {count} of {n} candidates")
    picked = np.zeros(count, dtype=np.int64)
    picked[0] = rng.integers(0, n)
    distance = np.full(n, np.inf)
    for i in range(1, count):
        delta = points - points[picked[i - 1]]
        distance = np.minimum(distance, np.einsum("ij,ij->i", delta, delta))
        picked[i] = int(np.argmax(distance))
    return picked


def build_primitive(kind: PrimitiveKind, seed: int, origin=(0.0, 0.0, 0.0),
                    unit: int = 0) -> tuple[TriMesh, SurfacePointCloud]:
    """Mesh a unit primitive and pick 512 surface points from it.

    Args:
        kind: primitive kind
        seed: candidate and farthest-point seed
        origin: lower corner of the unit cell
        unit: grid unit label stored with the points

    Returns:
        (mesh, point cloud), both deterministic in ``seed``
    """
    kind = PrimitiveKind(kind)
    mesh = primitive_mesh(kind, origin=origin)
    rng = np.random.default_rng(seed)
    candidates = sample_surface(mesh, CANDIDATES_PER_UNIT, rng)
    picked = farthest_point_sample(candidates, POINTS_PER_UNIT, rng)
    cloud = SurfacePointCloud(
        points=candidates[picked],
        source=(kind.value,),
        seed=seed,
        units=np.full(POINTS_PER_UNIT, unit),
    )
    logger.debug(f"Built {kind.value} primitive (seed={seed}, {mesh.n_triangles} triangles)")
    return mesh, cloud
