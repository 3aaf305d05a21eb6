"""Numpy layers, ResNet graphs, Adam and checkpoint I/O."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .functional import cross_entropy, cross_entropy_backward, log_softmax, softmax
from .layers import BasicBlock, BatchNorm2d, Conv2d, GlobalAvgPool, Linear, MaxPool2d, Module, ReLU
from .optim import Adam, AdamState, adam_step
from .resnet import ARCHITECTURES, ResNet, build_model, build_resnet18, build_resnet_tiny, replace_final_layer

__all__ = [
    "ARCHITECTURES", "Adam", "AdamState", "BasicBlock", "BatchNorm2d", "Checkpoint", "Conv2d",
    "GlobalAvgPool", "Linear", "MaxPool2d", "Module", "ReLU", "ResNet", "adam_step",
    "build_model", "build_resnet18", "build_resnet_tiny", "cross_entropy",
    "cross_entropy_backward", "load_checkpoint", "log_softmax", "replace_final_layer",
    "save_checkpoint", "softmax",
]
