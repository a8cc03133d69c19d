"""Conditioned U-Net denoiser with analytic gradients and Adam."""

from denoiser.layers import DenoiserError, ParameterSet, ShapeMismatchError, masked_mse
from denoiser.model import Denoiser, backward_and_grads, unet_forward
from denoiser.optim import OptState, adam_update, lr_for_epoch
from denoiser.unet import CONTEXT_DIM, ConditionedUNet
from denoiser.weights import WeightFileError, build_descriptor, count_parameters, load_weights, save_weights

__all__ = [
    "CONTEXT_DIM",
    "ConditionedUNet",
    "Denoiser",
    "DenoiserError",
    "ShapeMismatchError",
    "WeightFileError",
    "ParameterSet",
    "OptState",
    "masked_mse",
    "unet_forward",
    "backward_and_grads",
    "adam_update",
    "lr_for_epoch",
    "build_descriptor",
    "count_parameters",
    "save_weights",
    "load_weights",
]
