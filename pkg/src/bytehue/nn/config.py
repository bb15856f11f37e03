"""Network configuration: layer vocabulary, shape inference, canonical JSON."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Union

from ..errors import InvalidConfigError

VALID_KERNELS = (1, 3, 5)


@dataclass(frozen=True)
class Conv:
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class MaxPool:
    kernel: int
    stride: int


@dataclass(frozen=True)
class GlobalAvgPool:
    pass


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Dense:
    out_features: int


LayerSpec = Union[Conv, ReLU, MaxPool, GlobalAvgPool, Flatten, Dense]

_LAYER_TAGS = {
    Conv: "conv",
    ReLU: "relu",
    MaxPool: "max_pool",
    GlobalAvgPool: "global_avg_pool",
    Flatten: "flatten",
    Dense: "dense",
}


def layer_to_json(layer: LayerSpec) -> dict:
    d = {"type": _LAYER_TAGS[type(layer)]}
    if isinstance(layer, Conv):
        d.update(
            out_channels=layer.out_channels,
            kernel=layer.kernel,
            stride=layer.stride,
            padding=layer.padding,
        )
    elif isinstance(layer, MaxPool):
        d.update(kernel=layer.kernel, stride=layer.stride)
    elif isinstance(layer, Dense):
        d.update(out_features=layer.out_features)
    return d


def layer_from_json(d: dict) -> LayerSpec:
    t = d["type"]
    if t == "conv":
        return Conv(d["out_channels"], d["kernel"], d["stride"], d["padding"])
    if t == "relu":
        return ReLU()
    if t == "max_pool":
        return MaxPool(d["kernel"], d["stride"])
    if t == "global_avg_pool":
        return GlobalAvgPool()
    if t == "flatten":
        return Flatten()
    if t == "dense":
        return Dense(d["out_features"])
    raise InvalidConfigError(f"unknown layer type {t!r}")


def nin_block(kernel: int, channels: int) -> list[LayerSpec]:
    """Conv(k) -> ReLU -> Conv(1x1) -> ReLU; the 1x1 stage mixes channels per pixel."""
    return [
        Conv(channels, kernel, stride=1, padding=kernel // 2),
        ReLU(),
        Conv(channels, 1),
        ReLU(),
    ]


@dataclass(frozen=True)
class NetworkConfig:
    name: str
    input_shape: tuple[int, int, int]  # (C, H, W)
    layers: tuple[LayerSpec, ...]
    head: tuple[str, int]  # ("softmax", num_classes) or ("sigmoid", num_labels)

    def __post_init__(self):
        if self.head[0] not in ("softmax", "sigmoid"):
            raise InvalidConfigError(f"unknown head {self.head[0]!r}")
        if self.head[1] < 1:
            raise InvalidConfigError("head arity must be >= 1")
        out = self.output_shape()  # validates the whole stack
        arity = out[0] if len(out) == 1 else None
        if arity != self.head[1]:
            raise InvalidConfigError(
                f"network output shape {out} does not match head arity {self.head[1]}"
            )

    def output_shape(self) -> tuple[int, ...]:
        """Infer the pre-head output shape, validating every layer on the way."""
        shape: tuple[int, ...] = tuple(self.input_shape)
        for i, layer in enumerate(self.layers):
            shape = _infer_shape(layer, shape, i)
        return shape

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "input_shape": list(self.input_shape),
            "layers": [layer_to_json(l) for l in self.layers],
            "head": {"kind": self.head[0], "arity": self.head[1]},
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "NetworkConfig":
        return cls(
            name=d["name"],
            input_shape=tuple(d["input_shape"]),
            layers=tuple(layer_from_json(l) for l in d["layers"]),
            head=(d["head"]["kind"], d["head"]["arity"]),
        )

    def canonical_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _infer_shape(layer: LayerSpec, shape: tuple[int, ...], index: int) -> tuple[int, ...]:
    def bad(msg: str):
        return InvalidConfigError(f"layer {index} ({type(layer).__name__}): {msg}")

    if isinstance(layer, Conv):
        if layer.kernel not in VALID_KERNELS:
            raise bad(f"kernel must be one of {VALID_KERNELS}")
        if len(shape) != 3:
            raise bad(f"needs (C, H, W) input, got {shape}")
        c, h, w = shape
        oh = (h + 2 * layer.padding - layer.kernel) // layer.stride + 1
        ow = (w + 2 * layer.padding - layer.kernel) // layer.stride + 1
        if oh < 1 or ow < 1:
            raise bad(f"spatial dims collapse to {oh}x{ow}")
        return (layer.out_channels, oh, ow)
    if isinstance(layer, MaxPool):
        if len(shape) != 3:
            raise bad(f"needs (C, H, W) input, got {shape}")
        c, h, w = shape
        oh = (h - layer.kernel) // layer.stride + 1
        ow = (w - layer.kernel) // layer.stride + 1
        if oh < 1 or ow < 1:
            raise bad(f"spatial dims collapse to {oh}x{ow}")
        return (c, oh, ow)
    if isinstance(layer, ReLU):
        return shape
    if isinstance(layer, GlobalAvgPool):
        if len(shape) != 3:
            raise bad(f"needs (C, H, W) input, got {shape}")
        return (shape[0],)
    if isinstance(layer, Flatten):
        n = 1
        for d in shape:
            n *= d
        return (n,)
    if isinstance(layer, Dense):
        if len(shape) != 1:
            raise bad(f"needs flat input, got {shape}")
        return (layer.out_features,)
    raise bad("unknown layer spec")


def micro_network(
    input_size: int = 224,
    head: tuple[str, int] = ("softmax", 2),
    name: str = "bytehue-micro",
) -> NetworkConfig:
    """Reference network: two NiN blocks with pooling, then a GAP + dense head.

    Small enough to train on CPU in minutes while still exercising 3x3
    filters, 1x1 cross-channel convolutions and pooling.
    """
    layers: list[LayerSpec] = []
    layers += nin_block(3, 8)
    layers.append(MaxPool(2, 2))
    layers += nin_block(3, 16)
    layers.append(MaxPool(2, 2))
    layers.append(GlobalAvgPool())
    layers.append(Dense(head[1]))
    return NetworkConfig(
        name=name,
        input_shape=(3, input_size, input_size),
        layers=tuple(layers),
        head=head,
    )
