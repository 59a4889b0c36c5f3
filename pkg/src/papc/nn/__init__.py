"""Minimal numpy deep-learning stack: layers, backprop, Adam, MC dropout."""

from .bayes import ControlDistribution, mc_predict, mc_predict_batch, mc_samples
from .layers import Conv2D, Conv3D, Dense, Dropout, Flatten, MaxPool2D, MaxPool3D, ReLU
from .losses import heteroscedastic_grad, heteroscedastic_loss, mse, mse_grad
from .network import (Network, NetworkSpec, SpecError, TrainingError, backward_and_step, build,
                      forward, load_checkpoint, save_checkpoint)
from .optim import Adam, TrainConfig

__all__ = [
    "Adam", "ControlDistribution", "Conv2D", "Conv3D", "Dense", "Dropout", "Flatten", "MaxPool2D",
    "MaxPool3D", "Network", "NetworkSpec", "ReLU", "SpecError", "TrainConfig", "TrainingError",
    "backward_and_step", "build", "forward", "heteroscedastic_grad", "heteroscedastic_loss",
    "load_checkpoint", "mc_predict", "mc_predict_batch", "mc_samples", "mse", "mse_grad",
    "save_checkpoint",
]
