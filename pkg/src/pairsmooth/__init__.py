"""Pairwise label smoothing on midpoint samples, with one-hot, uniform label
smoothing and Mixup baselines, plus calibration and confidence reports."""

from .data import Batch, Dataset
from .nn import Model, forward, init_model, loss_and_backward, sgd_step
from .smoothing import TargetStrategy
from .train import TrainConfig, train

__all__ = [
    "Batch",
    "Dataset",
    "Model",
    "TargetStrategy",
    "TrainConfig",
    "forward",
    "init_model",
    "loss_and_backward",
    "sgd_step",
    "train",
]
__version__ = "0.1.0"
