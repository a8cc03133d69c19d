"""Primitive configurations, context vectors and training pairs."""

from dataset.configurations import (
    CONTEXT_LENGTH,
    ConfigurationType,
    assemble_configuration,
    configuration_mesh,
    configuration_occupancy,
    configuration_type,
    context_vector,
    parse_context,
)
from dataset.pairs import DeformParams, crosses_units, random_deform, synthesize_training_pair
from dataset.primitives import (
    PrimitiveKind,
    SurfacePointCloud,
    build_primitive,
    farthest_point_sample,
    primitive_mesh,
    sample_surface,
)
from dataset.store import TrainingRecord, build_dataset, load_dataset, make_record, save_dataset

__all__ = [
    "PrimitiveKind",
    "SurfacePointCloud",
    "build_primitive",
    "primitive_mesh",
    "sample_surface",
    "farthest_point_sample",
    "CONTEXT_LENGTH",
    "ConfigurationType",
    "configuration_type",
    "assemble_configuration",
    "configuration_occupancy",
    "configuration_mesh",
    "context_vector",
    "parse_context",
    "DeformParams",
    "random_deform",
    "crosses_units",
    "synthesize_training_pair",
    "TrainingRecord",
    "make_record",
    "build_dataset",
    "save_dataset",
    "load_dataset",
]
