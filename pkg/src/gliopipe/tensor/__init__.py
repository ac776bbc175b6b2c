"""Minimal dense tensor engine: layers with hand-written backward passes,
SGD/Adam, a finite-difference gradient checker, and binary checkpoints."""
from . import ops
from .checkpoint import dump_checkpoint, load_checkpoint, parse_checkpoint, save_checkpoint
from .gradcheck import check_gradients, grad_check_layer, to_double
from .layers import (
    Conv3d,
    GlobalAvgPool3d,
    InstanceNorm3d,
    Layer,
    LeakyReLU,
    Linear,
    MaxPool3d,
    NearestUpsample3d,
    Param,
    ReLU,
    Sequential,
    Sigmoid,
    Softmax,
    TransposedConv3d,
)
from .optim import CLASSIFIER_SCHEDULE, SEGMENTATION_SCHEDULE, Adam, LrSchedule, SGD, lr_at

__all__ = [
    "ops",
    "Adam",
    "SGD",
    "LrSchedule",
    "lr_at",
    "SEGMENTATION_SCHEDULE",
    "CLASSIFIER_SCHEDULE",
    "Layer",
    "Param",
    "Conv3d",
    "TransposedConv3d",
    "InstanceNorm3d",
    "ReLU",
    "LeakyReLU",
    "Sigmoid",
    "Softmax",
    "MaxPool3d",
    "NearestUpsample3d",
    "GlobalAvgPool3d",
    "Linear",
    "Sequential",
    "check_gradients",
    "grad_check_layer",
    "to_double",
    "dump_checkpoint",
    "parse_checkpoint",
    "save_checkpoint",
    "load_checkpoint",
]
