"""Training loop for the drifted noise predictor."""

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Protocol, Sequence

import numpy as np

from denoiser.optim import lr_for_epoch
from diffusion.schedule import DiffusionSchedule

logger = logging.getLogger(__name__)


class TrainableDenoiser(Protocol):
    learning_rate: float

    def loss_and_gradients(self, frames: np.ndarray, t_norm: np.ndarray, context: np.ndarray,
                           target: np.ndarray, mask: np.ndarray | None) -> tuple[float, Any]:
        ...

    def apply_gradients(self, grads: Any, lr: float | None = None) -> None:
        ...


@dataclass
class TrainingHistory:
    epoch_losses: list[float] = field(default_factory=list)
    learning_rates: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"epoch_losses": self.epoch_losses, "learning_rates": self.learning_rates}


def _stack(batch: Sequence[tuple]) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    if len(batch) == 0:
        raise ValueError("training batch is empty")
    x0 = np.stack([np.asarray(item[0], dtype=np.float64) for item in batch])
    q = np.stack([np.asarray(item[1], dtype=np.float64) for item in batch])
    context = np.stack([np.asarray(item[2], dtype=np.float64) for item in batch])
    if len(batch[0]) > 3:
        mask = np.stack([np.asarray(item[3], dtype=bool) for item in batch])
    else:
        mask = np.ones(x0.shape, dtype=bool)
    return x0, q, context, mask


def noised_batch(x0, q, mask, schedule: DiffusionSchedule, rng: np.random.Generator):
    """Sample t and z per item and build x_t from the closed-form marginal.

    Returns:
        (x_t, t, z) with z zero outside the live-slot mask
    """
    b = len(x0)
    t = rng.integers(1, schedule.T + 1, size=b)
    z = rng.standard_normal(x0.shape) * mask
    ab = schedule.alpha_bars[t][:, None, None, None]
    c = schedule.drift[t][:, None, None, None]
    x_t = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * z + c * q
    return x_t, t, z


def training_step(denoiser: TrainableDenoiser, batch: Sequence[tuple], schedule: DiffusionSchedule,
                  seed: int, lr: float | None = None) -> float:
    """One optimisation step on a batch of (x0, q, context[, mask]) items.

    Returns:
        The masked MSE between drawn and predicted noise before the update
    """
    x0, q, context, mask = _stack(batch)
    rng = np.random.default_rng(seed)
    x_t, t, z = noised_batch(x0, q, mask, schedule, rng)
    t_norm = schedule.t_norm(t)[:, None]
    loss, grads = denoiser.loss_and_gradients(x_t, t_norm, context, z, mask)
    denoiser.apply_gradients(grads, lr)
    return float(loss)


def train(denoiser: TrainableDenoiser, dataset: Sequence[tuple], schedule: DiffusionSchedule,
          config, seed: int) -> TrainingHistory:
    """Epoch loop with shuffling and the linear-decay learning rate.

    Epoch k trains with lr_{k-1}, so the first epoch uses the base rate and
    the rate is never zero while training.

    Args:
        denoiser: object implementing TrainableDenoiser
        dataset: sequence of (x0, q, context, mask) items
        schedule: diffusion schedule
        config: TrainConfig (batch_size, epochs, learning_rate)
        seed: shuffling and noise seed
    """
    rng = np.random.default_rng(seed)
    history = TrainingHistory()
    lr = config.learning_rate
    n = len(dataset)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            batch = [dataset[i] for i in order[start:start + config.batch_size]]
            step_seed = int(rng.integers(0, 2**63 - 1))
            losses.append(training_step(denoiser, batch, schedule, step_seed, lr))
        mean_loss = float(np.mean(losses))
        history.epoch_losses.append(mean_loss)
        history.learning_rates.append(lr)
        logger.info(json.dumps({"event": "epoch_end", "epoch": epoch, "loss": mean_loss, "lr": lr}))
        lr = lr_for_epoch(lr, epoch, config.epochs)
    return history
