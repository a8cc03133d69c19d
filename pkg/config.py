"""Typed run configuration.

Everything a run needs lives in one JSON document that maps onto
PipelineConfig. Unknown keys are rejected.
"""

import json
import os

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from diffusion.schedule import SigmaVariant

# Load environment variables
load_dotenv()

# Configuration
OUTPUT_DIR = os.environ.get("POLYCUBE_OUTPUT_DIR", "./runs")
DEFAULT_WEIGHTS = os.environ.get("POLYCUBE_WEIGHTS", "")
DEFAULT_SEED = int(os.environ.get("POLYCUBE_SEED", "0"))

STAGES = ("gen-data", "train", "sample", "polycube", "hexmesh", "quality")


class ConfigError(Exception):
    """Raised when a configuration document is unreadable or invalid."""
    pass


class MissingInputError(ConfigError):
    """Raised when a path referenced by the configuration does not exist."""
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ScheduleConfig(_Strict):
    T: int = Field(500, ge=1)
    beta_1: float = 1e-4
    beta_T: float = 0.02
    variant: SigmaVariant = SigmaVariant.ALGORITHM_TWO

    @model_validator(mode="after")
    def _check_bounds(self):
        if not 0.0 < self.beta_1 <= self.beta_T < 1.0:
            raise ValueError("need 0 < beta_1 <= beta_T < 1")
        return self


class TrainConfig(_Strict):
    batch_size: int = Field(200, ge=1)
    epochs: int = Field(400, ge=1)
    learning_rate: float = Field(1e-3, gt=0)
    width: int = Field(64, ge=1)
    seed: int = 0


class DatasetConfig(_Strict):
    types: list[int] = Field(default_factory=lambda: list(range(9)))
    pairs_per_type: int = Field(100, ge=1)
    seed: int = 0
    max_amplitude: float = Field(0.15, ge=0.0)
    min_centers: int = Field(3, ge=1)
    max_centers: int = Field(8, ge=1)

    @model_validator(mode="after")
    def _check_types(self):
        if any(not 0 <= t <= 8 for t in self.types):
            raise ValueError("configuration types must lie in 0..8")
        if self.min_centers > self.max_centers:
            raise ValueError("min_centers must not exceed max_centers")
        return self


class PolycubeConfig(_Strict):
    smoothing_iterations: int = Field(50, ge=0)
    snap_tol: float = Field(0.04, gt=0)


class QualityConfig(_Strict):
    w_fit: float = Field(1.0, ge=0)
    w_shape: float = Field(0.1, ge=0)
    max_outer_iterations: int = Field(10, ge=0)
    smoothing_sweeps: int = Field(5, ge=0)
    descent_steps: int = Field(20, ge=0)
    target_min_sj: float = 0.2
    pillow: bool = True
    pillow_fraction: float = Field(0.3, gt=0, lt=1)


class PipelineConfig(_Strict):
    input_mesh: str | None = None
    context: int | str = 0
    polycube: str | None = None
    weights: str | None = None
    stages: list[str] = Field(default_factory=lambda: ["sample", "polycube", "hexmesh", "quality"])
    octree_depth: int = Field(3, ge=0)
    seed: int = DEFAULT_SEED
    output_dir: str = OUTPUT_DIR
    deterministic: bool = False
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    smoothing: PolycubeConfig = Field(default_factory=PolycubeConfig)
    quality: QualityConfig = Field(default_factory=QualityConfig)

    @model_validator(mode="after")
    def _check_stages(self):
        unknown = [s for s in self.stages if s not in STAGES]
        if unknown:
            raise ValueError(f"unknown stages {unknown}; expected a subset of {list(STAGES)}")
        # Keep the canonical order whatever order the document lists.
        self.stages = [s for s in STAGES if s in self.stages]
        return self

    @classmethod
    def from_json(cls, path: str) -> "PipelineConfig":
        """Load and validate a configuration document.

        Raises:
            MissingInputError: the file does not exist
            ConfigError: invalid JSON or schema violation
        """
        if not os.path.exists(path):
            raise MissingInputError(f"Config file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            raise ConfigError(str(e)) from e
