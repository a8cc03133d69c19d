"""DPCW weight files.

Layout (little endian):

    4s   magic "DPCW"
    u32  version
    u32  descriptor length n
    n    descriptor JSON (utf-8)
    ...  float32 blobs: parameters, buffers, then Adam m and v when present,
         each in descriptor order
    u32  CRC32 of everything above
"""

import json
import logging
import os
import struct
import zlib

import numpy as np

from denoiser.layers import DenoiserError
from denoiser.optim import OptState
from denoiser.unet import CONTEXT_DIM, ConditionedUNet

logger = logging.getLogger(__name__)

MAGIC = b"DPCW"
VERSION = 1
ARCHITECTURE = "conditioned-unet"
_PREFIX = struct.Struct("<4sII")
_CRC = struct.Struct("<I")


class WeightFileError(DenoiserError):
    """Raised when a weight file is corrupt, truncated or from another version."""
    pass


def build_descriptor(net_or_width, opt: OptState | None = None) -> dict:
    """Architecture descriptor: ordered parameter and buffer shapes.

    Args:
        net_or_width: a ConditionedUNet, or a width to build one for
        opt: optimizer state to describe alongside the weights
    """
    net = net_or_width if isinstance(net_or_width, ConditionedUNet) else ConditionedUNet(int(net_or_width))
    descriptor = {
        "architecture": ARCHITECTURE,
        "width": net.width,
        "context_dim": CONTEXT_DIM,
        "skip": "concat",
        "params": [{"name": k, "shape": list(v.shape)} for k, v in net.ps.params.items()],
        "buffers": [{"name": k, "shape": list(v.shape)} for k, v in net.ps.buffers.items()],
        "optimizer": None,
    }
    if opt is not None:
        descriptor["optimizer"] = {"type": "adam", "step": opt.step, "beta1": opt.beta1,
                                   "beta2": opt.beta2, "eps": opt.eps}
    return descriptor


def count_parameters(descriptor: dict) -> int:
    return int(sum(np.prod(entry["shape"], dtype=np.int64) for entry in descriptor["params"]))


def _blob_sizes(descriptor: dict) -> int:
    params = sum(int(np.prod(e["shape"], dtype=np.int64)) for e in descriptor["params"])
    buffers = sum(int(np.prod(e["shape"], dtype=np.int64)) for e in descriptor["buffers"])
    moments = 2 * params if descriptor.get("optimizer") else 0
    return params + buffers + moments


def save_weights(net: ConditionedUNet, path: str, opt: OptState | None = None) -> str:
    """Write parameters, buffers and optional Adam moments to a DPCW file."""
    descriptor = build_descriptor(net, opt)
    header = json.dumps(descriptor, sort_keys=True).encode("utf-8")
    chunks = [_PREFIX.pack(MAGIC, VERSION, len(header)), header]
    for entry in descriptor["params"]:
        chunks.append(net.ps.params[entry["name"]].astype("<f4").tobytes())
    for entry in descriptor["buffers"]:
        chunks.append(net.ps.buffers[entry["name"]].astype("<f4").tobytes())
    if opt is not None:
        for moments in (opt.m, opt.v):
            for entry in descriptor["params"]:
                moment = moments.get(entry["name"], np.zeros(entry["shape"]))
                chunks.append(np.asarray(moment).astype("<f4").tobytes())
    body = b"".join(chunks)

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as f:
        f.write(body)
        f.write(_CRC.pack(zlib.crc32(body) & 0xFFFFFFFF))
    logger.info(f"Saved {count_parameters(descriptor)} parameters to {path}")
    return path


def load_weights(path: str, dtype=np.float32) -> tuple[ConditionedUNet, OptState | None]:
    """Read a DPCW file back into a network (and optimizer state if stored).

    Raises:
        WeightFileError: bad magic, version mismatch, length disagreement or CRC failure
    """
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _PREFIX.size + _CRC.size:
        raise WeightFileError(f"{path}: file too short ({len(data)} bytes)")
    magic, version, header_len = _PREFIX.unpack_from(data, 0)
    if magic != MAGIC:
        raise WeightFileError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise WeightFileError(f"{path}: version mismatch (file {version}, expected {VERSION})")
    try:
        descriptor = json.loads(data[_PREFIX.size:_PREFIX.size + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise WeightFileError(f"{path}: unreadable descriptor ({e})") from e

    offset = _PREFIX.size + header_len
    expected = offset + 4 * _blob_sizes(descriptor) + _CRC.size
    if len(data) != expected:
        raise WeightFileError(f"{path}: length mismatch, descriptor needs {expected} bytes, file has {len(data)}")
    (stored_crc,) = _CRC.unpack_from(data, len(data) - _CRC.size)
    if zlib.crc32(data[:-_CRC.size]) & 0xFFFFFFFF != stored_crc:
        raise WeightFileError(f"{path}: CRC mismatch")
    if descriptor.get("architecture") != ARCHITECTURE:
        raise WeightFileError(f"{path}: unknown architecture {descriptor.get('architecture')!r}")

    net = ConditionedUNet(width=int(descriptor["width"]), dtype=dtype)
    expected_names = [e["name"] for e in build_descriptor(net)["params"]]
    if expected_names != [e["name"] for e in descriptor["params"]]:
        raise WeightFileError(f"{path}: parameter list does not match width-{descriptor['width']} network")

    def take(shape):
        nonlocal offset
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(shape)
        offset += 4 * count
        return arr.astype(dtype)

    for entry in descriptor["params"]:
        net.ps.params[entry["name"]] = take(entry["shape"])
    for entry in descriptor["buffers"]:
        net.ps.buffers[entry["name"]] = take(entry["shape"])

    opt = None
    if descriptor.get("optimizer"):
        meta = descriptor["optimizer"]
        m = {e["name"]: take(e["shape"]) for e in descriptor["params"]}
        v = {e["name"]: take(e["shape"]) for e in descriptor["params"]}
        opt = OptState(m=m, v=v, step=int(meta["step"]), beta1=meta["beta1"],
                       beta2=meta["beta2"], eps=meta["eps"])
    return net, opt
