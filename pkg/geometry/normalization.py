"""Uniform normalization chain between model units and frame space."""

from dataclasses import dataclass

import numpy as np

from geometry.mesh import DegenerateBoundsError

# Frame-space shift applied to the first coordinate after scaling.
AXIS_SHIFT = np.array([0.5, 0.0, 0.0])


@dataclass(frozen=True)
class NormalizationTransform:
    """Invertible map p -> (p - center) / half_extent * 0.5 + (0.5, 0, 0)."""
    center: tuple[float, float, float]
    half_extent: float

    def __post_init__(self):
        if not self.half_extent > 0:
            raise ValueError(f"half_extent must be positive, got {self.half_extent}")

    @classmethod
    def identity(cls) -> "NormalizationTransform":
        """Transform that leaves frame-space coordinates unchanged."""
        return cls(center=(0.5, 0.0, 0.0), half_extent=0.5)

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        center = np.asarray(self.center, dtype=np.float64)
        return (points - center) / self.half_extent * 0.5 + AXIS_SHIFT

    def invert(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        center = np.asarray(self.center, dtype=np.float64)
        return (points - AXIS_SHIFT) / 0.5 * self.half_extent + center

    def to_dict(self) -> dict:
        return {"center": list(self.center), "half_extent": self.half_extent}

    @classmethod
    def from_dict(cls, data: dict) -> "NormalizationTransform":
        return cls(center=tuple(float(c) for c in data["center"]),
                   half_extent=float(data["half_extent"]))


def normalize_for_frame(points) -> tuple[np.ndarray, NormalizationTransform]:
    """Map a point cloud into frame space with one scale on all axes.

    The bounding box center goes to the origin and the largest half extent
    to 1, giving [-1, 1]^3; the result is halved to [-0.5, 0.5]^3 and the
    first coordinate shifted by +0.5.

    Args:
        points: (N, 3) positions, N >= 1

    Returns:
        (frame-space points, transform recording the chain)

    Raises:
        DegenerateBoundsError: all points coincide
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        raise ValueError("normalize_for_frame needs at least one point")
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    half_extent = float(np.max(hi - lo) / 2.0)
    if half_extent <= 0.0:
        raise DegenerateBoundsError("Bounding box has zero extent on every axis")
    center = (lo + hi) / 2.0
    transform = NormalizationTransform(center=tuple(center.tolist()), half_extent=half_extent)
    return transform.apply(points), transform
