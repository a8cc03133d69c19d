"""Trainable denoiser: network, optimizer state and learning rate together."""

import logging

import numpy as np

from denoiser.layers import masked_mse
from denoiser.optim import OptState, adam_update
from denoiser.unet import ConditionedUNet
from denoiser.weights import load_weights, save_weights

logger = logging.getLogger(__name__)


def unet_forward(net: ConditionedUNet, frame, t_norm, context, train: bool = False) -> np.ndarray:
    """Predicted noise for a batch of frames."""
    return net.forward(frame, t_norm, context, train=train)


def backward_and_grads(net: ConditionedUNet, frame, t_norm, context, target, mask=None,
                       train: bool = True) -> tuple[dict[str, np.ndarray], float]:
    """Masked-MSE loss and its exact gradient for every parameter.

    Gradients are returned as fresh arrays keyed by parameter name.
    """
    net.ps.zero_grad()
    pred = net.forward(frame, t_norm, context, train=train)
    target = np.asarray(target, dtype=net.dtype)
    loss, dpred = masked_mse(pred, target, mask)
    net.backward(dpred)
    return {k: g.copy() for k, g in net.ps.grads.items()}, loss


class Denoiser:
    """Noise predictor plus the state needed to keep training it.

    Callable as ``denoiser(frames, t_norm, context)`` for sampling (eval
    mode batch norm); ``loss_and_gradients`` and ``apply_gradients`` make up
    the training protocol.
    """

    def __init__(self, net: ConditionedUNet, opt: OptState | None = None, learning_rate: float = 1e-3):
        self.net = net
        self.opt = opt if opt is not None else OptState.zeros_like(net.ps.params)
        self.learning_rate = learning_rate

    @classmethod
    def create(cls, width: int = 64, seed: int = 0, dtype=np.float32,
               learning_rate: float = 1e-3) -> "Denoiser":
        return cls(ConditionedUNet(width=width, dtype=dtype, seed=seed), learning_rate=learning_rate)

    def __call__(self, frames, t_norm, context) -> np.ndarray:
        return unet_forward(self.net, frames, t_norm, context, train=False)

    def loss_and_gradients(self, frames, t_norm, context, target, mask=None):
        grads, loss = backward_and_grads(self.net, frames, t_norm, context, target, mask)
        return loss, grads

    def apply_gradients(self, grads: dict[str, np.ndarray], lr: float | None = None) -> None:
        lr = self.learning_rate if lr is None else lr
        adam_update(self.net.ps.params, grads, self.opt, lr, in_place=True)

    def save(self, path: str, include_optimizer: bool = True) -> str:
        return save_weights(self.net, path, self.opt if include_optimizer else None)

    @classmethod
    def load(cls, path: str, dtype=np.float32) -> "Denoiser":
        net, opt = load_weights(path, dtype=dtype)
        return cls(net, opt)
