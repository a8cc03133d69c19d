"""DPCF frame blobs and FrameMeta JSON sidecars."""

import json
import logging
import os
import struct

import numpy as np

from frames.codec import FRAME_SHAPE, FrameError, FrameMeta

logger = logging.getLogger(__name__)

MAGIC = b"DPCF"
VERSION = 1
HEADER = struct.Struct("<4sIII")  # magic, version, count, reserved
FRAME_FLOATS = int(np.prod(FRAME_SHAPE))


def write_frames(path: str, frames) -> str:
    """Write frames as little-endian float32 after a 16-byte header."""
    frames = np.asarray(frames, dtype=np.float64).reshape((-1,) + FRAME_SHAPE)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, VERSION, len(frames), 0))
        f.write(frames.astype("<f4").tobytes())
    return path


def read_frames(path: str) -> np.ndarray:
    """Read a DPCF blob into a (count, 3, 32, 32) float64 array.

    Raises:
        FrameError: bad magic, unknown version or wrong payload length
    """
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < HEADER.size:
        raise FrameError(f"{path}: truncated header ({len(data)} bytes)")
    magic, version, count, _ = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FrameError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FrameError(f"{path}: unsupported version {version}")
    expected = HEADER.size + count * FRAME_FLOATS * 4
    if len(data) != expected:
        raise FrameError(f"{path}: expected {expected} bytes for {count} frames, got {len(data)}")
    payload = np.frombuffer(data, dtype="<f4", offset=HEADER.size)
    return payload.astype(np.float64).reshape((count,) + FRAME_SHAPE)


def write_frame_metas(path: str, metas: list[FrameMeta]) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump([m.to_json() for m in metas], f)
    return path


def read_frame_metas(path: str) -> list[FrameMeta]:
    with open(path, "r", encoding="utf-8") as f:
        return [FrameMeta.from_json(entry) for entry in json.load(f)]
