"""Training pairs: a clean frame, a smoothly deformed target and the drift between them."""

import logging
from dataclasses import dataclass

import numpy as np

from dataset.configurations import STACK_AXIS, UNIT_EDGE
from diffusion.process import drift_from_target
from diffusion.schedule import DiffusionSchedule
from frames.codec import FrameMeta, decode_frame, encode_with_meta

logger = logging.getLogger(__name__)

# Configuration
MAX_RESAMPLES = 16
RESAMPLE_SHRINK = 0.8
WIDTH_RANGE = (0.25, 0.5)
# Points this close to a unit boundary plane count as lying on it.
BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class DeformParams:
    """Radial-basis displacement field.

    d(p) = sum_j vectors_j * exp(-|p - centers_j|^2 / (2 width^2)), scaled
    down so that no point of the cloud moves further than ``amplitude``.
    """
    centers: np.ndarray
    vectors: np.ndarray
    width: float
    amplitude: float

    def displacement(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        if self.amplitude == 0.0 or len(self.centers) == 0:
            return np.zeros_like(points)
        sq = ((points[:, None, :] - self.centers[None, :, :]) ** 2).sum(axis=-1)
        field = np.exp(-sq / (2.0 * self.width ** 2)) @ self.vectors
        largest = float(np.linalg.norm(field, axis=1).max())
        if largest > self.amplitude:
            field *= self.amplitude / largest
        return field

    @classmethod
    def zero(cls) -> "DeformParams":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), 1.0, 0.0)


def random_deform(rng: np.random.Generator, lo, hi, max_amplitude: float = 0.15,
                  min_centers: int = 3, max_centers: int = 8) -> DeformParams:
    """Draw centers inside the box [lo, hi] and displacement vectors up to max_amplitude."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    k = int(rng.integers(min_centers, max_centers + 1))
    centers = lo + rng.random((k, 3)) * (hi - lo)
    directions = rng.standard_normal((k, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    vectors = directions * rng.uniform(0.0, max_amplitude, size=(k, 1))
    width = float(rng.uniform(*WIDTH_RANGE))
    return DeformParams(centers, vectors, width, max_amplitude)


def crosses_units(before: np.ndarray, after: np.ndarray, units: np.ndarray) -> bool:
    """True when a point strictly inside one grid unit ends up in another.

    Points lying on a unit boundary plane (shared faces of stacked units) may
    move to either side.
    """
    units = np.asarray(units)
    if len(np.unique(units)) < 2:
        return False
    x0 = before[:, STACK_AXIS]
    x1 = after[:, STACK_AXIS]
    lo = units * UNIT_EDGE
    hi = lo + UNIT_EDGE
    inside = (x0 > lo + BOUNDARY_TOL) & (x0 < hi - BOUNDARY_TOL)
    escaped = (x1 < lo) | (x1 > hi)
    # Outer faces of the grid are not unit boundaries.
    escaped &= ~((units == units.min()) & (x1 < lo)) & ~((units == units.max()) & (x1 > hi))
    return bool(np.any(inside & escaped))


def synthesize_training_pair(x0, meta: FrameMeta, deform: DeformParams, schedule: DiffusionSchedule,
                             seed: int, units=None) -> tuple[np.ndarray, np.ndarray, DeformParams]:
    """Deform the decoded cloud, re-encode it in x0's slots and solve for the drift.

    The target keeps x0's slot order and normalization, so slot s of the
    target holds the displaced copy of the point in slot s of x0. A
    deformation that moves a point across grid units is rejected and
    replaced by a fresh, smaller one drawn from ``seed``; after
    MAX_RESAMPLES rejections the identity deformation is used.

    Returns:
        (x_tgt, q, deformation actually applied) with
        sqrt(alpha_bar_T) x0 + c_T q == x_tgt
    """
    x0 = np.asarray(x0, dtype=np.float64)
    points = decode_frame(x0, meta)
    units = np.zeros(len(points), dtype=np.int64) if units is None else np.asarray(units)
    rng = np.random.default_rng(seed)
    lo, hi = points.min(axis=0), points.max(axis=0)

    applied = deform
    for attempt in range(MAX_RESAMPLES + 1):
        moved = points + applied.displacement(points)
        if not crosses_units(points, moved, units):
            break
        logger.warning(f"Deformation crosses grid units (attempt {attempt + 1}); resampling")
        if attempt == MAX_RESAMPLES - 1:
            applied = DeformParams.zero()
            continue
        amplitude = applied.amplitude * RESAMPLE_SHRINK
        applied = random_deform(rng, lo, hi, max_amplitude=amplitude,
                                min_centers=max(1, len(deform.centers)),
                                max_centers=max(1, len(deform.centers)))

    x_tgt = encode_with_meta(moved, meta)
    q = drift_from_target(x_tgt, schedule, x0)
    return x_tgt, q, applied
