from .config import (
    Conv,
    Dense,
    Flatten,
    GlobalAvgPool,
    LayerSpec,
    MaxPool,
    NetworkConfig,
    ReLU,
    micro_network,
    nin_block,
)
from .engine import (
    ForwardCache,
    Parameters,
    SGDOptimizer,
    backward,
    finite_diff_grad,
    forward,
    init_params,
    loss,
    parameter_shapes,
    predict_labels,
)
from .rng import SplitMix64

__all__ = [
    "Conv",
    "Dense",
    "Flatten",
    "ForwardCache",
    "GlobalAvgPool",
    "LayerSpec",
    "MaxPool",
    "NetworkConfig",
    "Parameters",
    "ReLU",
    "SGDOptimizer",
    "SplitMix64",
    "backward",
    "finite_diff_grad",
    "forward",
    "init_params",
    "loss",
    "micro_network",
    "nin_block",
    "parameter_shapes",
    "predict_labels",
]
