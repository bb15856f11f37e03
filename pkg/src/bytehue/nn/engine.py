"""Forward/backward passes, losses, SGD and the finite-difference oracle.

Everything runs on float64 numpy arrays with batch layout (N, C, H, W).
Convolution is cross-correlation with zero padding, computed as a sum of
kernel-offset tensor contractions (no im2col buffer, keeps memory flat).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import (
    ArityMismatchError,
    InvalidEpsilonError,
    ShapeMismatchError,
    StaleCacheError,
    TooLargeForOracleError,
)
from .config import (
    Conv,
    Dense,
    Flatten,
    GlobalAvgPool,
    MaxPool,
    NetworkConfig,
    ReLU,
    _infer_shape,
)
from .rng import SplitMix64

ORACLE_PARAM_LIMIT = 10_000
PROB_CLAMP = 1e-12


class Parameters:
    """Weights/biases keyed by layer index; iteration order is the index order."""

    def __init__(self, tensors: dict[int, dict[str, np.ndarray]]):
        self.tensors = {i: tensors[i] for i in sorted(tensors)}

    def copy(self) -> "Parameters":
        return Parameters(
            {i: {k: v.copy() for k, v in t.items()} for i, t in self.tensors.items()}
        )

    def total_size(self) -> int:
        return sum(v.size for t in self.tensors.values() for v in t.values())

    def checksum(self, indices: Optional[set[int]] = None) -> str:
        h = hashlib.sha256()
        for i, t in self.tensors.items():
            if indices is not None and i not in indices:
                continue
            for k in sorted(t):
                h.update(f"{i}:{k}:{t[k].shape}".encode())
                h.update(np.ascontiguousarray(t[k]).tobytes())
        return h.hexdigest()

    def zeros_like(self) -> "Parameters":
        return Parameters(
            {i: {k: np.zeros_like(v) for k, v in t.items()} for i, t in self.tensors.items()}
        )


def parameter_shapes(cfg: NetworkConfig) -> dict[int, dict[str, tuple[int, ...]]]:
    shapes: dict[int, dict[str, tuple[int, ...]]] = {}
    shape: tuple[int, ...] = tuple(cfg.input_shape)
    for i, layer in enumerate(cfg.layers):
        if isinstance(layer, Conv):
            c_in = shape[0]
            shapes[i] = {
                "w": (layer.out_channels, c_in, layer.kernel, layer.kernel),
                "b": (layer.out_channels,),
            }
        elif isinstance(layer, Dense):
            shapes[i] = {"w": (layer.out_features, shape[0]), "b": (layer.out_features,)}
        shape = _infer_shape(layer, shape, i)
    return shapes


def init_params(cfg: NetworkConfig, seed: int) -> Parameters:
    """He-uniform weights (bound sqrt(6 / fan_in)), zero biases, SplitMix64 driven."""
    rng = SplitMix64(seed)
    tensors: dict[int, dict[str, np.ndarray]] = {}
    for i, shp in parameter_shapes(cfg).items():
        w_shape = shp["w"]
        fan_in = int(np.prod(w_shape[1:]))
        bound = np.sqrt(6.0 / fan_in)
        tensors[i] = {
            "w": rng.uniform(-bound, bound, w_shape),
            "b": np.zeros(shp["b"], dtype=np.float64),
        }
    return Parameters(tensors)


# --- layer kernels ----------------------------------------------------------


def _pad(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def _conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int, padding: int):
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    xp = _pad(x, padding)
    oh = (h + 2 * padding - k) // stride + 1
    ow = (wd + 2 * padding - k) // stride + 1
    out = np.zeros((n, oh, ow, o), dtype=np.float64)
    for di in range(k):
        for dj in range(k):
            patch = xp[:, :, di : di + stride * oh : stride, dj : dj + stride * ow : stride]
            # (N, C, oh, ow) x (O, C) -> (N, oh, ow, O)
            out += np.tensordot(patch, w[:, :, di, dj], axes=([1], [1]))
    out += b
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def _conv_backward(x, w, stride, padding, dout):
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    xp = _pad(x, padding)
    _, _, oh, ow = dout.shape
    dw = np.zeros_like(w)
    dxp = np.zeros_like(xp)
    for di in range(k):
        for dj in range(k):
            sl_i = slice(di, di + stride * oh, stride)
            sl_j = slice(dj, dj + stride * ow, stride)
            patch = xp[:, :, sl_i, sl_j]
            dw[:, :, di, dj] = np.tensordot(dout, patch, axes=([0, 2, 3], [0, 2, 3]))
            dxp[:, :, sl_i, sl_j] += np.tensordot(
                dout, w[:, :, di, dj], axes=([1], [0])
            ).transpose(0, 3, 1, 2)
    db = dout.sum(axis=(0, 2, 3))
    dx = dxp if padding == 0 else dxp[:, :, padding:-padding, padding:-padding]
    return dx, dw, db


def _maxpool_forward(x: np.ndarray, k: int, stride: int):
    n, c, h, w = x.shape
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    vals = np.full((n, c, oh, ow), -np.inf)
    arg = np.zeros((n, c, oh, ow), dtype=np.int16)
    for di in range(k):
        for dj in range(k):
            cand = x[:, :, di : di + stride * oh : stride, dj : dj + stride * ow : stride]
            mask = cand > vals
            vals = np.where(mask, cand, vals)
            arg = np.where(mask, di * k + dj, arg)
    return vals, arg


def _maxpool_backward(x_shape, k, stride, arg, dout):
    dx = np.zeros(x_shape, dtype=np.float64)
    _, _, oh, ow = dout.shape
    for di in range(k):
        for dj in range(k):
            sel = (arg == di * k + dj) * dout
            dx[:, :, di : di + stride * oh : stride, dj : dj + stride * ow : stride] += sel
    return dx


# --- forward / backward ------------------------------------------------------


@dataclass
class ForwardCache:
    cfg_hash: str
    layer_inputs: list
    extras: dict[int, np.ndarray] = field(default_factory=dict)
    logits: np.ndarray = None
    probs: np.ndarray = None


def _as_batch(x: np.ndarray) -> np.ndarray:
    return x[None] if x.ndim == 3 else x


def forward(cfg: NetworkConfig, params: Parameters, x: np.ndarray):
    """Run the network; returns (probabilities (N, arity), cache for backward)."""
    x = _as_batch(np.asarray(x, dtype=np.float64))
    if tuple(x.shape[1:]) != tuple(cfg.input_shape):
        raise ShapeMismatchError(
            f"input shape {x.shape[1:]} != expected {tuple(cfg.input_shape)}"
        )
    cache = ForwardCache(cfg_hash=cfg.hash(), layer_inputs=[])
    for i, layer in enumerate(cfg.layers):
        cache.layer_inputs.append(x)
        if isinstance(layer, Conv):
            t = params.tensors[i]
            x = _conv_forward(x, t["w"], t["b"], layer.stride, layer.padding)
        elif isinstance(layer, ReLU):
            x = np.maximum(x, 0.0)
        elif isinstance(layer, MaxPool):
            x, arg = _maxpool_forward(x, layer.kernel, layer.stride)
            cache.extras[i] = arg
        elif isinstance(layer, GlobalAvgPool):
            x = x.mean(axis=(2, 3))
        elif isinstance(layer, Flatten):
            x = x.reshape(x.shape[0], -1)
        elif isinstance(layer, Dense):
            t = params.tensors[i]
            x = x @ t["w"].T + t["b"]
    cache.logits = x
    if cfg.head[0] == "softmax":
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        probs = e / e.sum(axis=1, keepdims=True)
    else:
        probs = 1.0 / (1.0 + np.exp(-x))
    cache.probs = probs
    return probs, cache


def _check_targets(output: np.ndarray, target, head: str) -> np.ndarray:
    n, arity = output.shape
    if head == "softmax":
        t = np.atleast_1d(np.asarray(target, dtype=np.int64))
        if t.shape != (n,):
            raise ArityMismatchError(f"expected {n} class indices, got shape {t.shape}")
        if t.min() < 0 or t.max() >= arity:
            raise ArityMismatchError(f"class index out of range for arity {arity}")
        return t
    t = np.asarray(target, dtype=np.float64)
    if t.ndim == 1:
        t = t[None]
    if t.shape != (n, arity):
        raise ArityMismatchError(f"expected targets of shape {(n, arity)}, got {t.shape}")
    return t


def loss(
    output: np.ndarray,
    target,
    head: str,
    label_weights: Optional[np.ndarray] = None,
) -> float:
    """Mean-over-batch loss: categorical CE (softmax) or weighted BCE (sigmoid).

    For sigmoid, label_weights multiply the positive term per label and the
    per-sample loss sums over labels.
    """
    output = np.atleast_2d(output)
    t = _check_targets(output, target, head)
    p = np.clip(output, PROB_CLAMP, 1.0 - PROB_CLAMP)
    n = output.shape[0]
    if head == "softmax":
        return float(-np.log(p[np.arange(n), t]).mean())
    w = np.ones(output.shape[1]) if label_weights is None else np.asarray(label_weights)
    if w.shape != (output.shape[1],):
        raise ArityMismatchError("label_weights arity does not match output")
    per = -(w * t * np.log(p) + (1.0 - t) * np.log(1.0 - p))
    return float(per.sum(axis=1).mean())


def backward(
    cfg: NetworkConfig,
    params: Parameters,
    cache: ForwardCache,
    target,
    label_weights: Optional[np.ndarray] = None,
) -> Parameters:
    """Exact gradients of the mean batch loss w.r.t. every parameter tensor."""
    if cache.cfg_hash != cfg.hash():
        raise StaleCacheError("cache was produced by a different network config")
    probs = cache.probs
    n, arity = probs.shape
    t = _check_targets(probs, target, cfg.head[0])
    if cfg.head[0] == "softmax":
        dz = probs.copy()
        dz[np.arange(n), t] -= 1.0
        dz /= n
    else:
        w = np.ones(arity) if label_weights is None else np.asarray(label_weights)
        dz = (-w * t * (1.0 - probs) + (1.0 - t) * probs) / n

    grads = params.zeros_like()
    dout = dz
    for i in range(len(cfg.layers) - 1, -1, -1):
        layer = cfg.layers[i]
        x = cache.layer_inputs[i]
        if isinstance(layer, Dense):
            tns = params.tensors[i]
            grads.tensors[i]["w"][...] = dout.T @ x
            grads.tensors[i]["b"][...] = dout.sum(axis=0)
            dout = dout @ tns["w"]
        elif isinstance(layer, Flatten):
            dout = dout.reshape(x.shape)
        elif isinstance(layer, GlobalAvgPool):
            _, _, h, wd = x.shape
            dout = np.broadcast_to(
                dout[:, :, None, None] / (h * wd), x.shape
            ).copy()
        elif isinstance(layer, MaxPool):
            dout = _maxpool_backward(
                x.shape, layer.kernel, layer.stride, cache.extras[i], dout
            )
        elif isinstance(layer, ReLU):
            dout = dout * (x > 0.0)
        elif isinstance(layer, Conv):
            tns = params.tensors[i]
            dout, dw, db = _conv_backward(x, tns["w"], layer.stride, layer.padding, dout)
            grads.tensors[i]["w"][...] = dw
            grads.tensors[i]["b"][...] = db
    return grads


# --- optimizer ----------------------------------------------------------------


class SGDOptimizer:
    """SGD with classical momentum and L2 weight decay; velocity persists."""

    def __init__(self, lr: float, momentum: float = 0.0, weight_decay: float = 0.0):
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self._velocity: Optional[Parameters] = None

    def step(
        self,
        params: Parameters,
        grads: Parameters,
        freeze: frozenset[int] = frozenset(),
    ) -> Parameters:
        if self._velocity is None:
            self._velocity = params.zeros_like()
        for i, tens in params.tensors.items():
            if i in freeze:
                continue
            for k, p in tens.items():
                g = grads.tensors[i][k]
                if g.shape != p.shape:
                    raise ShapeMismatchError(f"gradient shape mismatch at layer {i}/{k}")
                v = self._velocity.tensors[i][k]
                v *= self.momentum
                v += g + self.weight_decay * p
                p -= self.lr * v
        return params


# --- verification oracle --------------------------------------------------------


def finite_diff_grad(
    cfg: NetworkConfig,
    params: Parameters,
    x: np.ndarray,
    target,
    epsilon: float = 1e-5,
    label_weights: Optional[np.ndarray] = None,
) -> Parameters:
    """Central finite differences per scalar parameter; small networks only."""
    if epsilon <= 0:
        raise InvalidEpsilonError("epsilon must be positive")
    if params.total_size() > ORACLE_PARAM_LIMIT:
        raise TooLargeForOracleError(
            f"{params.total_size()} parameters exceed oracle limit {ORACLE_PARAM_LIMIT}"
        )

    def loss_at() -> float:
        out, _ = forward(cfg, params, x)
        return loss(out, target, cfg.head[0], label_weights)

    grads = params.zeros_like()
    for i, tens in params.tensors.items():
        for k, p in tens.items():
            flat = p.reshape(-1)
            gflat = grads.tensors[i][k].reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + epsilon
                up = loss_at()
                flat[j] = orig - epsilon
                down = loss_at()
                flat[j] = orig
                gflat[j] = (up - down) / (2.0 * epsilon)
    return grads


def predict_labels(output: np.ndarray, head: str, threshold: float = 0.5):
    """Sigmoid: multi-hot at threshold; softmax: argmax, ties to lowest index."""
    output = np.asarray(output)
    single = output.ndim == 1
    out = np.atleast_2d(output)
    if head == "softmax":
        pred = out.argmax(axis=1)  # argmax takes the first maximum on ties
        return int(pred[0]) if single else pred
    pred = (out >= threshold).astype(np.int64)
    return pred[0] if single else pred
