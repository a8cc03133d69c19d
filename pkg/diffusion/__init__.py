"""Drifted diffusion: schedule, forward and reverse steps, sampling, training."""

from diffusion.process import (
    ddpm_step_oracle_noise,
    draw_noise,
    drift_from_target,
    forward_closed,
    forward_step,
    reverse_drift,
    reverse_mean,
    reverse_step,
)
from diffusion.sampler import sample_polycube
from diffusion.schedule import DiffusionSchedule, ScheduleError, SigmaVariant, StepRangeError, linear_schedule
from diffusion.training import TrainingHistory, noised_batch, train, training_step

__all__ = [
    "DiffusionSchedule",
    "SigmaVariant",
    "ScheduleError",
    "StepRangeError",
    "linear_schedule",
    "draw_noise",
    "drift_from_target",
    "forward_step",
    "forward_closed",
    "reverse_drift",
    "reverse_mean",
    "reverse_step",
    "ddpm_step_oracle_noise",
    "sample_polycube",
    "training_step",
    "noised_batch",
    "train",
    "TrainingHistory",
]
