"""Drifted forward and reverse diffusion steps.

Forward noise has mean q instead of zero. Over t steps the drift accumulates
to Q_t = c_t * q, and the reverse step removes it with the per-step term
q'_k = sqrt(1 - alpha_bar_k) / sqrt(1 - alpha_k) * q.
"""

import numpy as np

from diffusion.schedule import DiffusionSchedule


def draw_noise(rng: np.random.Generator, shape=(3, 32, 32)) -> np.ndarray:
    """Standard-normal draw from a seeded generator."""
    return rng.standard_normal(shape)


def drift_from_target(x_target, schedule: DiffusionSchedule, x0=None) -> np.ndarray:
    """Drift q whose forward endpoint mean is x_target.

    With x0: q = (x_target - sqrt(alpha_bar_T) x0) / c_T. Without x0 the
    sqrt(alpha_bar_T) x0 term is treated as vanished: q = x_target / c_T.
    """
    c_T = schedule.c(schedule.T)
    x_target = np.asarray(x_target, dtype=np.float64)
    if x0 is None:
        return x_target / c_T
    return (x_target - np.sqrt(schedule.alpha_bars[schedule.T]) * np.asarray(x0)) / c_T


def forward_step(x_prev, t: int, q, z, schedule: DiffusionSchedule) -> np.ndarray:
    """x_t = sqrt(alpha_t) x_{t-1} + sqrt(1 - alpha_t) (z + q)."""
    t = schedule.check_step(t)
    alpha = schedule.alphas[t]
    return np.sqrt(alpha) * np.asarray(x_prev) + np.sqrt(1.0 - alpha) * (np.asarray(z) + np.asarray(q))


def forward_closed(x0, t: int, q, zbar, schedule: DiffusionSchedule) -> np.ndarray:
    """x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) zbar + c_t q."""
    t = schedule.check_step(t)
    ab = schedule.alpha_bars[t]
    return np.sqrt(ab) * np.asarray(x0) + np.sqrt(1.0 - ab) * np.asarray(zbar) + schedule.c(t) * np.asarray(q)


def reverse_drift(schedule: DiffusionSchedule, k: int, q) -> np.ndarray:
    """Per-step reverse drift q'_k."""
    k = schedule.check_step(k)
    scale = np.sqrt(1.0 - schedule.alpha_bars[k]) / np.sqrt(1.0 - schedule.alphas[k])
    return scale * np.asarray(q, dtype=np.float64)


def reverse_mean(x_t, t: int, z_hat, q, schedule: DiffusionSchedule) -> np.ndarray:
    t = schedule.check_step(t)
    coef = schedule.betas[t] / np.sqrt(1.0 - schedule.alpha_bars[t])
    return (np.asarray(x_t) - coef * (np.asarray(z_hat) + reverse_drift(schedule, t, q))) / np.sqrt(schedule.alphas[t])


def reverse_step(x_t, t: int, z_hat, q, z_new, schedule: DiffusionSchedule) -> np.ndarray:
    """One denoising step x_t -> x_{t-1}; no noise is added at t = 1."""
    t = schedule.check_step(t)
    mean = reverse_mean(x_t, t, z_hat, q, schedule)
    if t == 1:
        return mean
    return mean + schedule.sigma(t) * np.asarray(z_new)


def ddpm_step_oracle_noise(x_t, x_prev, t: int, q, schedule: DiffusionSchedule) -> np.ndarray:
    """Noise prediction that makes a zero-noise reverse_step land on x_prev."""
    t = schedule.check_step(t)
    scale = np.sqrt(1.0 - schedule.alpha_bars[t]) / schedule.betas[t]
    return scale * (np.asarray(x_t) - np.sqrt(schedule.alphas[t]) * np.asarray(x_prev)) - reverse_drift(schedule, t, q)
