"""Coordinate frame codec and blob persistence."""

from frames.blobs import read_frame_metas, read_frames, write_frame_metas, write_frames
from frames.codec import (
    FRAME_SHAPE,
    SLOTS,
    UNIT_POINTS,
    FrameError,
    FrameMeta,
    decode_frame,
    encode_frame,
    encode_with_meta,
    frame_mask,
)

__all__ = [
    "FRAME_SHAPE",
    "SLOTS",
    "UNIT_POINTS",
    "FrameError",
    "FrameMeta",
    "encode_frame",
    "encode_with_meta",
    "decode_frame",
    "frame_mask",
    "write_frames",
    "read_frames",
    "write_frame_metas",
    "read_frame_metas",
]
