"""Build, save and load the training set."""

import json
import logging
import os
from dataclasses import dataclass

import numpy as np

from dataset.configurations import assemble_configuration, configuration_type, context_vector
from dataset.pairs import random_deform, synthesize_training_pair
from diffusion.schedule import DiffusionSchedule
from frames.blobs import read_frame_metas, read_frames, write_frame_metas, write_frames
from frames.codec import FrameMeta, encode_frame, frame_mask

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"
X0_FILE = "x0.dpcf"
Q_FILE = "q.dpcf"
TARGET_FILE = "target.dpcf"
META_FILE = "frames_meta.json"


@dataclass
class TrainingRecord:
    type_id: int
    seed: int
    deform_seed: int
    x0: np.ndarray
    q: np.ndarray
    target: np.ndarray
    context: np.ndarray
    meta: FrameMeta

    @property
    def mask(self) -> np.ndarray:
        return frame_mask(self.meta)

    def as_training_item(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(x0, q, context, mask) as consumed by diffusion.training."""
        return self.x0, self.q, self.context, self.mask

    def manifest_entry(self) -> dict:
        return {"type": self.type_id, "seed": self.seed, "deform_seed": self.deform_seed}


def make_record(type_id: int, seed: int, deform_seed: int, schedule: DiffusionSchedule,
                max_amplitude: float = 0.15, min_centers: int = 3, max_centers: int = 8) -> TrainingRecord:
    """One (type, seed, deform seed) entry, fully determined by its arguments."""
    t = configuration_type(type_id)
    cloud = assemble_configuration(t, seed)
    x0, meta = encode_frame(cloud.points)
    rng = np.random.default_rng(deform_seed)
    lo, hi = cloud.points.min(axis=0), cloud.points.max(axis=0)
    deform = random_deform(rng, lo, hi, max_amplitude, min_centers, max_centers)
    target, q, _ = synthesize_training_pair(x0, meta, deform, schedule, deform_seed, units=cloud.units)
    return TrainingRecord(type_id, seed, deform_seed, x0, q, target, context_vector(t), meta)


def build_dataset(config, schedule: DiffusionSchedule) -> list[TrainingRecord]:
    """Expand a DatasetConfig into training records.

    Seeds for pair i of type T are drawn from a generator keyed on
    (config.seed, T, i), so adding types or pairs never changes existing
    entries.
    """
    records = []
    for type_id in config.types:
        for i in range(config.pairs_per_type):
            rng = np.random.default_rng([config.seed, type_id, i])
            seed, deform_seed = (int(s) for s in rng.integers(0, 2**31 - 1, size=2))
            records.append(make_record(type_id, seed, deform_seed, schedule, config.max_amplitude,
                                       config.min_centers, config.max_centers))
        logger.info(f"Generated {config.pairs_per_type} pairs for configuration type {type_id}")
    return records


def save_dataset(records: list[TrainingRecord], directory: str) -> dict[str, str]:
    """Write manifest, frame blobs and the frame-meta sidecar.

    Returns:
        Mapping of artifact name to path
    """
    os.makedirs(directory, exist_ok=True)
    paths = {
        "manifest": os.path.join(directory, MANIFEST_FILE),
        "x0": os.path.join(directory, X0_FILE),
        "q": os.path.join(directory, Q_FILE),
        "target": os.path.join(directory, TARGET_FILE),
        "meta": os.path.join(directory, META_FILE),
    }
    with open(paths["manifest"], "w", encoding="utf-8") as f:
        json.dump([r.manifest_entry() for r in records], f, indent=2)
    write_frames(paths["x0"], [r.x0 for r in records])
    write_frames(paths["q"], [r.q for r in records])
    write_frames(paths["target"], [r.target for r in records])
    write_frame_metas(paths["meta"], [r.meta for r in records])
    logger.info(f"Saved {len(records)} training records to {directory}")
    return paths


def load_dataset(directory: str) -> list[TrainingRecord]:
    """Read a directory written by save_dataset. Frames come back from float32."""
    with open(os.path.join(directory, MANIFEST_FILE), "r", encoding="utf-8") as f:
        entries = json.load(f)
    x0 = read_frames(os.path.join(directory, X0_FILE))
    q = read_frames(os.path.join(directory, Q_FILE))
    target = read_frames(os.path.join(directory, TARGET_FILE))
    metas = read_frame_metas(os.path.join(directory, META_FILE))
    if not len(entries) == len(x0) == len(q) == len(target) == len(metas):
        raise ValueError(f"{directory}: manifest and blobs disagree on the record count")
    return [
        TrainingRecord(int(e["type"]), int(e["seed"]), int(e["deform_seed"]), x0[i], q[i], target[i],
                       context_vector(int(e["type"])), metas[i])
        for i, e in enumerate(entries)
    ]
