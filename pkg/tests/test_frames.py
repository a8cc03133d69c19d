import numpy as np
import pytest

from frames import (
    FrameError,
    FrameMeta,
    decode_frame,
    encode_frame,
    encode_with_meta,
    frame_mask,
    read_frame_metas,
    read_frames,
    write_frame_metas,
    write_frames,
)
from geometry import NormalizationTransform


def test_512_points_padded_with_zeros(rng):
    frame, meta = encode_frame(rng.normal(size=(512, 3)))
    flat = frame.reshape(3, -1)
    assert frame.shape == (3, 32, 32)
    assert np.all(flat[:, 512:] == 0.0)
    assert meta.unit_count == 1


def test_channel_zero_sorted(rng):
    frame, meta = encode_frame(rng.normal(size=(700, 3)))
    live = frame.reshape(3, -1)[0, :meta.n_points]
    assert np.all(np.diff(live) >= 0)
    assert meta.unit_count == 2


def test_round_trip_many_clouds(rng):
    for _ in range(1000):
        n = int(rng.integers(2, 1025))
        points = rng.normal(size=(n, 3)) * rng.uniform(0.1, 10.0, size=3)
        frame, meta = encode_frame(points)
        assert np.max(np.abs(decode_frame(frame, meta) - points)) < 1e-12


def test_input_permutation_does_not_change_frame(rng):
    points = rng.normal(size=(300, 3))
    perm = rng.permutation(300)
    frame_a, meta_a = encode_frame(points)
    frame_b, meta_b = encode_frame(points[perm])
    assert np.array_equal(frame_a, frame_b)
    assert not np.array_equal(meta_a.order, meta_b.order)


def test_too_many_points():
    with pytest.raises(FrameError):
        encode_frame(np.random.default_rng(0).normal(size=(1025, 3)))


def test_decode_empty():
    meta = FrameMeta(0, np.zeros(0, dtype=np.int64), NormalizationTransform.identity(), 1)
    assert decode_frame(np.zeros((3, 32, 32)), meta).shape == (0, 3)


def test_decode_identity_reads_slots():
    frame = np.zeros((3, 32, 32))
    flat = frame.reshape(3, -1)
    flat[:, :4] = np.arange(12).reshape(3, 4)
    meta = FrameMeta(4, np.arange(4), NormalizationTransform.identity(), 1)
    assert np.array_equal(decode_frame(frame, meta), flat[:, :4].T)


def test_decode_rejects_bad_permutation():
    meta = FrameMeta(3, np.array([0, 0, 1]), NormalizationTransform.identity(), 1)
    with pytest.raises(FrameError):
        decode_frame(np.zeros((3, 32, 32)), meta)


def test_encode_with_meta_keeps_slots(rng):
    points = rng.normal(size=(128, 3))
    frame, meta = encode_frame(points)
    assert np.allclose(encode_with_meta(points, meta), frame, atol=1e-15)
    moved = encode_with_meta(points + 0.01, meta)
    assert np.allclose(decode_frame(moved, meta), points + 0.01)


def test_frame_mask_counts(rng):
    _, meta = encode_frame(rng.normal(size=(600, 3)))
    mask = frame_mask(meta)
    assert mask.sum() == 3 * 600
    assert mask.reshape(3, -1)[:, :600].all()


def test_meta_json_round_trip(tmp_path, rng):
    _, meta = encode_frame(rng.normal(size=(50, 3)))
    path = write_frame_metas(str(tmp_path / "meta.json"), [meta])
    (loaded,) = read_frame_metas(path)
    assert np.array_equal(loaded.order, meta.order)
    assert loaded.transform == meta.transform
    assert loaded.n_points == meta.n_points


def test_frame_blob_round_trip(tmp_path, rng):
    frames = rng.normal(size=(4, 3, 32, 32)).astype(np.float32)
    path = write_frames(str(tmp_path / "x.dpcf"), frames)
    assert np.array_equal(read_frames(path), frames.astype(np.float64))
    assert len(open(path, "rb").read()) == 16 + 4 * 3 * 1024 * 4


def test_frame_blob_bad_magic(tmp_path):
    path = write_frames(str(tmp_path / "x.dpcf"), np.zeros((1, 3, 32, 32)))
    data = bytearray(open(path, "rb").read())
    data[:4] = b"XXXX"
    open(path, "wb").write(bytes(data))
    with pytest.raises(FrameError, match="bad magic"):
        read_frames(path)


def test_frame_blob_truncated(tmp_path):
    path = write_frames(str(tmp_path / "x.dpcf"), np.zeros((2, 3, 32, 32)))
    data = open(path, "rb").read()
    open(path, "wb").write(data[:-8])
    with pytest.raises(FrameError):
        read_frames(path)
