"""Point cloud <-> 3 x 32 x 32 coordinate frame codec."""

import logging
from dataclasses import dataclass

import numpy as np

from geometry.normalization import NormalizationTransform, normalize_for_frame

logger = logging.getLogger(__name__)

GRID = 32
SLOTS = GRID * GRID
UNIT_POINTS = 512
FRAME_SHAPE = (3, GRID, GRID)


class FrameError(Exception):
    """Raised when a frame, its metadata or a frame blob is inconsistent."""
    pass


@dataclass(frozen=True)
class FrameMeta:
    """What is needed to turn a frame back into the original point list.

    Attributes:
        n_points: live slot count N (slots N..1023 are zero)
        order: order[s] = original index of the point stored in slot s
        transform: normalization applied before packing
        unit_count: occupied grid units, 1 for N <= 512 and 2 above
    """
    n_points: int
    order: np.ndarray
    transform: NormalizationTransform
    unit_count: int

    def __post_init__(self):
        order = np.asarray(self.order, dtype=np.int64).reshape(-1)
        order.setflags(write=False)
        object.__setattr__(self, "order", order)

    def to_json(self) -> dict:
        return {
            "n_points": self.n_points,
            "order": self.order.tolist(),
            "transform": self.transform.to_dict(),
            "unit_count": self.unit_count,
        }

    @classmethod
    def from_json(cls, data: dict) -> "FrameMeta":
        return cls(
            n_points=int(data["n_points"]),
            order=np.array(data["order"], dtype=np.int64),
            transform=NormalizationTransform.from_dict(data["transform"]),
            unit_count=int(data["unit_count"]),
        )


def unit_count_for(n_points: int) -> int:
    return 1 if n_points <= UNIT_POINTS else 2


def sort_order(points: np.ndarray) -> np.ndarray:
    """Slot order: ascending X, ties by Y, Z, then original index."""
    index = np.arange(len(points))
    return np.lexsort((index, points[:, 2], points[:, 1], points[:, 0]))


def _pack(frame_points: np.ndarray, order: np.ndarray) -> np.ndarray:
    flat = np.zeros((3, SLOTS), dtype=np.float64)
    flat[:, :len(order)] = frame_points[order].T
    return flat.reshape(FRAME_SHAPE)


def encode_frame(points) -> tuple[np.ndarray, FrameMeta]:
    """Normalize, X-sort and pack up to 1024 points into a zero-padded frame.

    Raises:
        FrameError: more than 1024 points
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(points)
    if n > SLOTS:
        raise FrameError(f"{n} points exceed the {SLOTS} frame slots; decimate upstream")
    if n == 0:
        raise FrameError("encode_frame needs at least one point")
    frame_points, transform = normalize_for_frame(points)
    order = sort_order(frame_points)
    meta = FrameMeta(n_points=n, order=order, transform=transform, unit_count=unit_count_for(n))
    return _pack(frame_points, order), meta


def encode_with_meta(points, meta: FrameMeta) -> np.ndarray:
    """Pack points using an existing slot order and normalization.

    Used for deformed copies of an encoded cloud so that slot s keeps
    holding the same vertex.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) != meta.n_points:
        raise FrameError(f"Expected {meta.n_points} points, got {len(points)}")
    return _pack(meta.transform.apply(points), meta.order)


def decode_frame(frame, meta: FrameMeta) -> np.ndarray:
    """Unpack live slots, restore original vertex order, undo normalization.

    Raises:
        FrameError: frame shape or permutation inconsistent with meta
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != FRAME_SHAPE:
        raise FrameError(f"Frame shape {frame.shape} != {FRAME_SHAPE}")
    n = meta.n_points
    if n == 0:
        return np.zeros((0, 3))
    if len(meta.order) != n or not np.array_equal(np.sort(meta.order), np.arange(n)):
        raise FrameError(f"Permutation of length {len(meta.order)} is not a bijection on {n} points")
    live = frame.reshape(3, SLOTS)[:, :n].T
    points = np.empty_like(live)
    points[meta.order] = live
    return meta.transform.invert(points)


def frame_mask(meta_or_count) -> np.ndarray:
    """Boolean 3 x 32 x 32 mask of live slots."""
    n = meta_or_count.n_points if isinstance(meta_or_count, FrameMeta) else int(meta_or_count)
    flat = np.zeros((3, SLOTS), dtype=bool)
    flat[:, :n] = True
    return flat.reshape(FRAME_SHAPE)


def live_slot_values(frame) -> np.ndarray:
    """Channel-0 values in slot order (useful for sort checks)."""
    return np.asarray(frame).reshape(3, SLOTS)[0]
