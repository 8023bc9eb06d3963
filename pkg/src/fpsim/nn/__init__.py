from fpsim.nn.layers import (
    Conv2D,
    Dense,
    Flatten,
    GlobalAvgPool,
    Layer,
    MaxPool2D,
    MissingCacheError,
    ReLU,
    ShapeError,
)
from fpsim.nn.loss import binary_cross_entropy
from fpsim.nn.network import (
    Network,
    build_cnn,
    he_uniform_init,
    load_checkpoint,
    save_checkpoint,
)
from fpsim.nn.optim import AdamState, adam_step

__all__ = [
    "AdamState",
    "Conv2D",
    "Dense",
    "Flatten",
    "GlobalAvgPool",
    "Layer",
    "MaxPool2D",
    "MissingCacheError",
    "Network",
    "ReLU",
    "ShapeError",
    "adam_step",
    "binary_cross_entropy",
    "build_cnn",
    "he_uniform_init",
    "load_checkpoint",
    "save_checkpoint",
]
