"""Reverse-process sampling from an encoded input geometry."""

import logging
from typing import Callable

import numpy as np

from denoiser.layers import ShapeMismatchError
from diffusion.process import drift_from_target, reverse_step
from diffusion.schedule import DiffusionSchedule

logger = logging.getLogger(__name__)

# (frames [B,3,32,32], t_norm [B,1], context [B,29]) -> predicted noise [B,3,32,32]
DenoiseFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def sample_polycube(denoiser: DenoiseFn, x_T, context, schedule: DiffusionSchedule, seed: int,
                    mask=None, q=None, stochastic: bool = True) -> np.ndarray:
    """Run the reverse chain from t = T down to 1 and return x'_0.

    The input geometry itself is x'_T, and unless ``q`` is given the drift
    comes from it in inference mode (q = x'_T / c_T). Padded slots (outside
    ``mask``) are held at zero throughout. With ``stochastic`` off every z_new
    is zero.

    Raises:
        ShapeMismatchError: the denoiser returned a wrongly shaped prediction
    """
    x = np.asarray(x_T, dtype=np.float64).copy()
    if x.shape != (3, 32, 32):
        raise ShapeMismatchError(f"x_T must be (3, 32, 32), got {x.shape}")
    live = np.ones(x.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    context = np.asarray(context, dtype=np.float64).reshape(1, -1)
    drift = drift_from_target(x, schedule) if q is None else np.asarray(q, dtype=np.float64)
    drift = np.where(live, drift, 0.0)
    rng = np.random.default_rng(seed)

    for t in range(schedule.T, 0, -1):
        t_norm = np.array([[t / schedule.T]])
        z_hat = np.asarray(denoiser(x[None], t_norm, context), dtype=np.float64)
        if z_hat.shape != (1, 3, 32, 32):
            raise ShapeMismatchError(f"Denoiser returned shape {z_hat.shape} at t={t}")
        z_new = rng.standard_normal(x.shape) if stochastic and t > 1 else np.zeros(x.shape)
        x = reverse_step(x, t, np.where(live, z_hat[0], 0.0), drift,
                         np.where(live, z_new, 0.0), schedule)
        x = np.where(live, x, 0.0)
    return x
