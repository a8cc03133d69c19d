"""Variance schedule and cumulative drift coefficients."""

from dataclasses import dataclass
from enum import Enum

import numpy as np


class ScheduleError(Exception):
    """Raised for invalid schedule parameters."""
    pass


class StepRangeError(ScheduleError):
    """Raised when a timestep lies outside 1..T."""
    pass


class SigmaVariant(str, Enum):
    """Reverse-step noise scale: sqrt(beta_t) or the posterior variance."""
    ALGORITHM_TWO = "algorithm_two"
    POSTERIOR = "posterior"


@dataclass(frozen=True)
class DiffusionSchedule:
    """beta/alpha/alpha_bar and drift coefficients indexed by t = 0..T.

    Index 0 holds the neutral values (beta 0, alpha 1, alpha_bar 1, c 0) so
    every array can be indexed directly by the timestep.
    """
    T: int
    beta_1: float
    beta_T: float
    variant: SigmaVariant
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    drift: np.ndarray

    def check_step(self, t: int) -> int:
        t = int(t)
        if not 1 <= t <= self.T:
            raise StepRangeError(f"Timestep {t} outside 1..{self.T}")
        return t

    def c(self, t: int) -> float:
        """Drift coefficient c_t with Q_t = c_t * q."""
        return float(self.drift[t])

    def sigma(self, t: int) -> float:
        t = self.check_step(t)
        if self.variant == SigmaVariant.ALGORITHM_TWO:
            return float(np.sqrt(self.betas[t]))
        posterior = (1.0 - self.alpha_bars[t - 1]) / (1.0 - self.alpha_bars[t]) * self.betas[t]
        return float(np.sqrt(posterior))

    def drift_unrolled(self, t: int) -> float:
        """c_t as the explicit sum over k of sqrt(1 - alpha_k) prod_{i>k} sqrt(alpha_i)."""
        sqrt_alpha = np.sqrt(self.alphas[1:t + 1])
        total = 0.0
        for k in range(1, t + 1):
            total += np.sqrt(1.0 - self.alphas[k]) * np.prod(sqrt_alpha[k:])
        return float(total)

    def t_norm(self, t) -> np.ndarray:
        """Denoiser time input t / T in (0, 1]."""
        return np.asarray(t, dtype=np.float64) / self.T

    def to_dict(self) -> dict:
        return {"T": self.T, "beta_1": self.beta_1, "beta_T": self.beta_T,
                "variant": self.variant.value}

    @classmethod
    def from_dict(cls, data: dict) -> "DiffusionSchedule":
        return linear_schedule(int(data["T"]), float(data["beta_1"]), float(data["beta_T"]),
                               SigmaVariant(data.get("variant", SigmaVariant.ALGORITHM_TWO.value)))


def linear_schedule(T: int, beta_1: float, beta_T: float,
                    variant: SigmaVariant = SigmaVariant.ALGORITHM_TWO) -> DiffusionSchedule:
    """Linear beta schedule with derived alpha, alpha_bar and c sequences.

    Args:
        T: number of steps, >= 1
        beta_1: first beta, > 0
        beta_T: last beta, >= beta_1 and < 1
        variant: reverse-step sigma choice

    Raises:
        ScheduleError: bounds violated
    """
    if T < 1:
        raise ScheduleError(f"T must be >= 1, got {T}")
    if not 0.0 < beta_1 <= beta_T < 1.0:
        raise ScheduleError(f"Need 0 < beta_1 <= beta_T < 1, got beta_1={beta_1}, beta_T={beta_T}")

    if T == 1:
        ramp = np.array([beta_1])
    else:
        ramp = beta_1 + np.arange(T) * (beta_T - beta_1) / (T - 1)
    betas = np.concatenate([[0.0], ramp])
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)

    drift = np.zeros(T + 1)
    for t in range(1, T + 1):
        drift[t] = np.sqrt(alphas[t]) * drift[t - 1] + np.sqrt(1.0 - alphas[t])

    for arr in (betas, alphas, alpha_bars, drift):
        arr.setflags(write=False)
    return DiffusionSchedule(T=T, beta_1=float(beta_1), beta_T=float(beta_T),
                             variant=SigmaVariant(variant), betas=betas, alphas=alphas,
                             alpha_bars=alpha_bars, drift=drift)
