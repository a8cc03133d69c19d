"""Staged pipeline: training data, denoiser, regularization, polycube, hex mesh, quality.

Each stage reads declared inputs and writes declared outputs under the run's
output directory. ``run_pipeline`` executes the configured stages in
canonical order and records a manifest with SHA-256 hashes of every input
and output, timings and library versions.

Artifacts (relative to ``output_dir``):
    dataset/                 gen-data: manifest.json, x0/q/target frames, frame metadata
    weights.dpcw             train: denoiser weights
    training_history.json    train: per-epoch loss and learning rate
    sample_frame.dpcf        sample: the regularized frame x'_0
    regularized.obj          sample: input topology at the regularized positions
    polycube.json            polycube: the complex in model coordinates
    assignment.json          polycube: facet and (u, v) per input vertex
    polycube_report.json     polycube: validation report and Hausdorff distance
    polycube_boundary.obj    polycube: boundary surface of the complex
    hexmesh.vtk              hexmesh: optimized all-hex mesh with scaled Jacobian cells
    optimization.json        hexmesh: quality after optimization, with the per-iteration minima
    quality.json             quality: scaled Jacobian summary
    quality_histogram.txt    quality: text histogram
    manifest.json            the RunManifest
"""

import hashlib
import json
import os
import platform
from dataclasses import dataclass

import numpy as np
import pydantic
import scipy
from pydantic import BaseModel, Field

from config import DEFAULT_WEIGHTS, ConfigError, MissingInputError, PipelineConfig
from dataset import build_dataset, load_dataset, parse_context, save_dataset
from denoiser import Denoiser
from diffusion import linear_schedule, sample_polycube, train
from frames import decode_frame, encode_frame, frame_mask, write_frames
from geometry import (
    load_surface_mesh,
    normalize_for_frame,
    read_hexmesh_vtk,
    write_hexmesh_vtk,
    write_surface_obj,
)
from hexmesh import (
    generate_hex_lattice,
    improve_quality,
    map_to_physical,
    parameterize_all,
    pillow_boundary,
    render_histogram,
    scaled_jacobian,
    segment_surface,
)
from observability import get_logger, log_event, pin_thread_pools, sanitize_log_value, timed
from polycube import (
    PolycubeComplex,
    PolycubeError,
    VertexFacetAssignment,
    assign_vertices,
    hausdorff_distance,
    snap_to_polycube,
    validate_polycube,
    volume_preserving_smooth,
)

class StageError(Exception):
    """Raised when a pipeline stage fails; carries the stage name and its artifact paths."""

    def __init__(self, stage: str, message: str, artifacts: list[str] | None = None):
        self.stage = stage
        self.artifacts = list(artifacts or [])
        super().__init__(f"Stage '{stage}' failed: {message}")


class StageRecord(BaseModel):
    """One executed stage: artifact hashes keyed by path, wall time and outcome."""
    name: str
    inputs: dict[str, str] = Field(default_factory=dict)
    outputs: dict[str, str] = Field(default_factory=dict)
    seconds: float = 0.0
    status: str = "ok"
    error: str | None = None


class RunManifest(BaseModel):
    """Reproducibility record written next to the artifacts as manifest.json."""
    config: dict
    stages: list[StageRecord] = Field(default_factory=list)
    seeds: dict[str, int] = Field(default_factory=dict)
    deterministic: bool = False
    versions: dict[str, str] = Field(default_factory=dict)

    def stage(self, name: str) -> StageRecord | None:
        return next((s for s in self.stages if s.name == name), None)


@dataclass(frozen=True)
class RunPaths:
    """Artifact locations for one output directory."""
    root: str

    def _at(self, name: str) -> str:
        return os.path.join(self.root, name)

    @property
    def dataset(self) -> str:
        return self._at("dataset")

    @property
    def weights(self) -> str:
        return self._at("weights.dpcw")

    @property
    def history(self) -> str:
        return self._at("training_history.json")

    @property
    def sample_frame(self) -> str:
        return self._at("sample_frame.dpcf")

    @property
    def regularized(self) -> str:
        return self._at("regularized.obj")

    @property
    def polycube(self) -> str:
        return self._at("polycube.json")

    @property
    def assignment(self) -> str:
        return self._at("assignment.json")

    @property
    def polycube_report(self) -> str:
        return self._at("polycube_report.json")

    @property
    def polycube_boundary(self) -> str:
        return self._at("polycube_boundary.obj")

    @property
    def hexmesh(self) -> str:
        return self._at("hexmesh.vtk")

    @property
    def optimization(self) -> str:
        return self._at("optimization.json")

    @property
    def quality(self) -> str:
        return self._at("quality.json")

    @property
    def histogram(self) -> str:
        return self._at("quality_histogram.txt")

    @property
    def manifest(self) -> str:
        return self._at("manifest.json")


# ============================================
# Hashing and small writers
# ============================================

def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def hash_artifacts(paths: list[str]) -> dict[str, str]:
    """SHA-256 per file; directories contribute every file they contain."""
    hashes = {}
    for path in paths:
        if os.path.isdir(path):
            for name in sorted(os.listdir(path)):
                hashes.update(hash_artifacts([os.path.join(path, name)]))
        elif os.path.exists(path):
            hashes[path] = file_sha256(path)
    return hashes


def _write_json(path: str, data) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def _read_json(path: str):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _schedule(config: PipelineConfig):
    s = config.schedule
    return linear_schedule(s.T, s.beta_1, s.beta_T, s.variant)


# ============================================
# Input resolution
# ============================================

def resolve_weights(config: PipelineConfig, paths: RunPaths) -> str:
    if config.weights:
        return config.weights
    if "train" in config.stages or os.path.exists(paths.weights):
        return paths.weights
    return DEFAULT_WEIGHTS


def resolve_polycube(config: PipelineConfig, paths: RunPaths) -> str:
    return config.polycube or paths.polycube


def _polycube_source(config: PipelineConfig, paths: RunPaths) -> str:
    """Regularized surface when one exists in the run, otherwise the input mesh."""
    if "sample" in config.stages or os.path.exists(paths.regularized):
        return paths.regularized
    return config.input_mesh


def check_inputs(config: PipelineConfig, paths: RunPaths) -> None:
    """Fail before any stage runs when a referenced input is missing.

    Inputs produced by an earlier stage of the same run count as present.

    Raises:
        MissingInputError: a path is unset or does not exist
    """
    stages = set(config.stages)
    missing = []

    def need(label: str, path: str | None, produced_by: str | None = None) -> None:
        if produced_by in stages:
            return
        if not path or not os.path.exists(path):
            missing.append(f"{label} ({sanitize_log_value(path)})")

    if "train" in stages:
        need("training dataset", paths.dataset, "gen-data")
    if "sample" in stages:
        need("input mesh", config.input_mesh)
        if config.weights or "train" not in stages:
            need("denoiser weights", resolve_weights(config, paths))
        try:
            parse_context(config.context)
        except ValueError as e:
            raise ConfigError(f"Unusable context {sanitize_log_value(config.context)}: {e}") from e
    if "polycube" in stages:
        need("polycube source mesh", _polycube_source(config, paths), "sample")
    if "hexmesh" in stages:
        need("input mesh", config.input_mesh)
        if config.polycube:
            need("polycube", config.polycube)
        else:
            need("polycube", paths.polycube, "polycube")
    if "quality" in stages:
        need("hex mesh", paths.hexmesh, "hexmesh")
    if missing:
        raise MissingInputError(f"Missing input(s): {', '.join(missing)}")


# ============================================
# Stages
# ============================================

def stage_gen_data(config: PipelineConfig, paths: RunPaths) -> tuple[list[str], list[str]]:
    records = build_dataset(config.dataset, _schedule(config))
    written = save_dataset(records, paths.dataset)
    log_event("dataset_built", records=len(records), types=config.dataset.types)
    return [], sorted(written.values())


def stage_train(config: PipelineConfig, paths: RunPaths) -> tuple[list[str], list[str]]:
    records = load_dataset(paths.dataset)
    denoiser = Denoiser.create(width=config.train.width, seed=config.train.seed,
                               learning_rate=config.train.learning_rate)
    history = train(denoiser, [r.as_training_item() for r in records], _schedule(config),
                    config.train, seed=config.seed)
    denoiser.save(paths.weights)
    _write_json(paths.history, history.to_dict())
    log_event("training_done", epochs=config.train.epochs,
              first_loss=history.epoch_losses[0], final_loss=history.epoch_losses[-1])
    return [paths.dataset], [paths.weights, paths.history]


def stage_sample(config: PipelineConfig, paths: RunPaths) -> tuple[list[str], list[str]]:
    weights = resolve_weights(config, paths)
    mesh = load_surface_mesh(config.input_mesh)
    frame, meta = encode_frame(mesh.vertices)
    denoiser = Denoiser.load(weights)
    x0 = sample_polycube(denoiser, frame, parse_context(config.context), _schedule(config),
                         seed=config.seed, mask=frame_mask(meta))
    regularized = mesh.with_vertices(decode_frame(x0, meta))
    write_frames(paths.sample_frame, x0[None])
    write_surface_obj(regularized, paths.regularized)
    log_event("sampled", vertices=mesh.n_vertices, context=sanitize_log_value(config.context))
    return [config.input_mesh, weights], [paths.sample_frame, paths.regularized]


def stage_polycube(config: PipelineConfig, paths: RunPaths) -> tuple[list[str], list[str]]:
    source = _polycube_source(config, paths)
    mesh = load_surface_mesh(source)
    frame_points, transform = normalize_for_frame(mesh.vertices)
    smoothed = volume_preserving_smooth(frame_points, mesh, config.smoothing.smoothing_iterations)
    frame_complex, assignment = snap_to_polycube(smoothed, mesh, tol=config.smoothing.snap_tol)
    pc = frame_complex.transformed(transform)

    report = validate_polycube(pc)
    if not report.valid:
        raise PolycubeError(f"Snapped polycube is invalid: {report.violations}")
    boundary = pc.boundary_mesh()
    distance = hausdorff_distance(mesh.vertices, boundary)

    pc.save(paths.polycube)
    _write_json(paths.assignment, assignment.to_json())
    _write_json(paths.polycube_report, {
        **report.model_dump(),
        "hausdorff": distance,
        "hausdorff_relative": distance / mesh.bbox_diagonal(),
    })
    write_surface_obj(boundary, paths.polycube_boundary)
    log_event("polycube_extracted", cuboids=report.cuboid_count, facets=report.facet_count,
              genus=report.genus, hausdorff=round(distance, 6))
    return [source], [paths.polycube, paths.assignment, paths.polycube_report, paths.polycube_boundary]


def _assignment_for(config: PipelineConfig, paths: RunPaths, mesh, pc: PolycubeComplex
                    ) -> tuple[VertexFacetAssignment, list[str]]:
    """Use the assignment of this run's polycube stage, or project onto a supplied complex."""
    if not config.polycube and os.path.exists(paths.assignment):
        assignment = VertexFacetAssignment.from_json(_read_json(paths.assignment))
        if len(assignment) == mesh.n_vertices:
            return assignment, [paths.assignment]
        get_logger().warning(f"Stored assignment covers {len(assignment)} vertices, mesh has "
                             f"{mesh.n_vertices}; projecting onto the polycube instead")
    outward = mesh.oriented_outward()
    return assign_vertices(outward.vertices, outward.vertex_normals(), pc), []


def stage_hexmesh(config: PipelineConfig, paths: RunPaths) -> tuple[list[str], list[str]]:
    polycube_path = resolve_polycube(config, paths)
    mesh = load_surface_mesh(config.input_mesh)
    pc = PolycubeComplex.load(polycube_path)
    assignment, extra_inputs = _assignment_for(config, paths, mesh, pc)

    labels = segment_surface(mesh, assignment, pc)
    params = parameterize_all(mesh, labels)
    lattice = generate_hex_lattice(pc, config.octree_depth)
    hexes = map_to_physical(lattice, params, mesh, pc)
    if config.quality.pillow:
        hexes = pillow_boundary(hexes, config.quality.pillow_fraction)
    hexes, report = improve_quality(hexes, mesh, config.quality)
    write_hexmesh_vtk(hexes, paths.hexmesh, scaled_jacobian=report.per_hex)
    _write_json(paths.optimization, report.to_dict())
    log_event("hexmesh_built", hexes=hexes.n_hexes, vertices=hexes.n_vertices,
              depth=config.octree_depth, min_sj=round(report.min_sj, 6))
    return [config.input_mesh, polycube_path, *extra_inputs], [paths.hexmesh, paths.optimization]


def stage_quality(config: PipelineConfig, paths: RunPaths) -> tuple[list[str], list[str]]:
    report = scaled_jacobian(read_hexmesh_vtk(paths.hexmesh))
    _write_json(paths.quality, report.to_dict())
    with open(paths.histogram, "w", encoding="utf-8") as f:
        f.write(render_histogram(report) + "\n")
    log_event("quality", hexes=report.hex_count, min_sj=round(report.min_sj, 6),
              inverted=report.inverted, degenerate=report.degenerate)
    return [paths.hexmesh], [paths.quality, paths.histogram]


STAGE_FUNCTIONS = {
    "gen-data": stage_gen_data,
    "train": stage_train,
    "sample": stage_sample,
    "polycube": stage_polycube,
    "hexmesh": stage_hexmesh,
    "quality": stage_quality,
}


# ============================================
# Runner
# ============================================

def library_versions() -> dict[str, str]:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pydantic": pydantic.VERSION,
    }


def run_pipeline(config: PipelineConfig) -> RunManifest:
    """Run the configured stages and write manifest.json.

    Raises:
        MissingInputError: a referenced input is missing (before any stage runs)
        StageError: a stage raised; the manifest is still written with the
            failed stage recorded
    """
    logger = get_logger()
    paths = RunPaths(config.output_dir)
    check_inputs(config, paths)
    if config.deterministic:
        pin_thread_pools()
    os.makedirs(paths.root, exist_ok=True)

    manifest = RunManifest(
        config=config.model_dump(mode="json"),
        seeds={"pipeline": config.seed, "train": config.train.seed, "dataset": config.dataset.seed},
        deterministic=config.deterministic,
        versions=library_versions(),
    )
    logger.info(f"Running stages {config.stages} into {sanitize_log_value(paths.root)}")

    for name in config.stages:
        record = StageRecord(name=name)
        failure = None
        with timed(name) as timing:
            try:
                inputs, outputs = STAGE_FUNCTIONS[name](config, paths)
            except Exception as e:
                failure = e
        record.seconds = timing["seconds"]
        if failure is not None:
            record.status = "failed"
            record.error = sanitize_log_value(failure)
            manifest.stages.append(record)
            _write_json(paths.manifest, manifest.model_dump(mode="json"))
            logger.error(f"Stage {name} failed: {sanitize_log_value(failure)}")
            raise StageError(name, str(failure), [paths.root]) from failure
        record.inputs = hash_artifacts(inputs)
        record.outputs = hash_artifacts(outputs)
        manifest.stages.append(record)

    _write_json(paths.manifest, manifest.model_dump(mode="json"))
    log_event("pipeline_done", stages=config.stages, output_dir=sanitize_log_value(paths.root))
    return manifest
