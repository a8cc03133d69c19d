"""The nine 2 x 1 grid configurations and their context vectors.

Grid units are laid out along X, the axis the frame codec sorts by, so unit 0
spans x in [0, 1] and unit 1 spans x in [1, 2]. Types 0..7 place one
primitive in one unit (type = 2 * kind + unit); type 8 stacks two cubes.
"""

import logging
from dataclasses import dataclass

import numpy as np

from dataset.primitives import LATTICE, PrimitiveKind, SurfacePointCloud, build_primitive, primitive_occupancy
from geometry.mesh import TriMesh, voxel_surface

logger = logging.getLogger(__name__)

CONTEXT_LENGTH = 29
STACK_AXIS = 0
UNIT_EDGE = 1.0
GRID_UNITS = 2
TYPE_COUNT = 9
STACKED_TYPE = 8

# Kind order for types 0..7.
KIND_ORDER = (
    PrimitiveKind.CUBE,
    PrimitiveKind.CUBE_HOLE_Z,
    PrimitiveKind.CUBE_HOLE_X,
    PrimitiveKind.CUBE_HOLE_Y,
)


@dataclass(frozen=True)
class ConfigurationType:
    type_id: int
    units: tuple[int, ...]
    kinds: tuple[PrimitiveKind, ...]

    @property
    def point_count(self) -> int:
        return 512 * len(self.units)


def configuration_type(type_id: int) -> ConfigurationType:
    """Resolve a type id 0..8.

    Raises:
        ValueError: id outside 0..8
    """
    type_id = int(type_id)
    if not 0 <= type_id < TYPE_COUNT:
        raise ValueError(f"Configuration type must lie in 0..{TYPE_COUNT - 1}, got {type_id}")
    if type_id == STACKED_TYPE:
        return ConfigurationType(type_id, (0, 1), (PrimitiveKind.CUBE, PrimitiveKind.CUBE))
    return ConfigurationType(type_id, (type_id % 2,), (KIND_ORDER[type_id // 2],))


def unit_origin(unit: int) -> np.ndarray:
    origin = np.zeros(3)
    origin[STACK_AXIS] = unit * UNIT_EDGE
    return origin


def assemble_configuration(config_type, seed: int) -> SurfacePointCloud:
    """Sample every occupied unit and translate it into place.

    Unit clouds are concatenated in unit order; each unit gets its own seed
    drawn from ``seed``.
    """
    t = config_type if isinstance(config_type, ConfigurationType) else configuration_type(config_type)
    rng = np.random.default_rng(seed)
    unit_seeds = rng.integers(0, 2**31 - 1, size=len(t.units))
    points, units = [], []
    for unit, kind, unit_seed in zip(t.units, t.kinds, unit_seeds):
        _, cloud = build_primitive(kind, int(unit_seed), origin=unit_origin(unit), unit=unit)
        points.append(cloud.points)
        units.append(cloud.units)
    return SurfacePointCloud(
        points=np.concatenate(points),
        source=tuple(k.value for k in t.kinds),
        seed=seed,
        units=np.concatenate(units),
    )


def configuration_occupancy(config_type) -> np.ndarray:
    """Occupancy of the whole 2 x 1 grid on the primitive lattice (6 x 3 x 3)."""
    t = config_type if isinstance(config_type, ConfigurationType) else configuration_type(config_type)
    occupancy = np.zeros((LATTICE * GRID_UNITS, LATTICE, LATTICE), dtype=bool)
    for unit, kind in zip(t.units, t.kinds):
        occupancy[unit * LATTICE:(unit + 1) * LATTICE] = primitive_occupancy(kind)
    return occupancy


def configuration_mesh(config_type) -> TriMesh:
    """Watertight surface of the occupied units; stacked cubes merge into one box."""
    return voxel_surface(configuration_occupancy(config_type), h=UNIT_EDGE / LATTICE)


def context_vector(config_type) -> np.ndarray:
    """29-entry 0/1 context: bit 4T for types 0..7, bits 0 and 4 for type 8."""
    t = config_type if isinstance(config_type, ConfigurationType) else configuration_type(config_type)
    context = np.zeros(CONTEXT_LENGTH)
    if t.type_id == STACKED_TYPE:
        context[[0, 4]] = 1.0
    else:
        context[4 * t.type_id] = 1.0
    return context


def parse_context(value) -> np.ndarray:
    """Context from a type id (int or digit string) or a 29-character 0/1 mask.

    Raises:
        ValueError: not a type id in 0..8 and not a valid mask
    """
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return context_vector(int(value))
    text = str(value).strip()
    if text.isdigit() and len(text) <= 2:
        return context_vector(int(text))
    if len(text) != CONTEXT_LENGTH or set(text) - {"0", "1"}:
        raise ValueError(f"Context must be a type id 0..8 or a {CONTEXT_LENGTH}-character 0/1 mask")
    return np.array([float(ch) for ch in text])
