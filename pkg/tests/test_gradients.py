"""Analytic gradients vs the central finite-difference oracle."""

import numpy as np
import pytest

from bytehue.nn import (
    Conv,
    Dense,
    Flatten,
    GlobalAvgPool,
    MaxPool,
    NetworkConfig,
    ReLU,
    backward,
    finite_diff_grad,
    forward,
    init_params,
    loss,
)

EPSILON = 1e-5
TOLERANCE = 1e-4

GRAD_CHECK_CONFIGS = {
    "conv3_pad": ((2, 4, 4), (Conv(3, 3, 1, 1), Flatten(), Dense(3)), 3),
    "conv1": ((3, 4, 4), (Conv(2, 1), ReLU(), Flatten(), Dense(4)), 4),
    "conv5": ((1, 5, 5), (Conv(2, 5, 1, 2), ReLU(), Flatten(), Dense(2)), 2),
    "conv_stride2": ((2, 5, 5), (Conv(3, 3, 2, 1), ReLU(), Flatten(), Dense(2)), 2),
    "maxpool": ((2, 4, 4), (Conv(3, 3, 1, 1), MaxPool(2, 2), Flatten(), Dense(2)), 2),
    "gap": ((2, 4, 4), (Conv(3, 3, 1, 1), ReLU(), GlobalAvgPool(), Dense(3)), 3),
    "dense_stack": ((8,), (Dense(6), ReLU(), Dense(3)), 3),
}


def max_rel_error(analytic, numeric):
    worst = 0.0
    for i in analytic.tensors:
        for k in analytic.tensors[i]:
            a = analytic.tensors[i][k]
            n = numeric.tensors[i][k]
            denom = np.maximum(np.abs(a) + np.abs(n), 1e-6)
            worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def run_check(in_shape, layers, arity, head, seed):
    rng = np.random.default_rng(seed)
    net = NetworkConfig("gradcheck", in_shape, layers, (head, arity))
    params = init_params(net, seed)
    x = rng.standard_normal((2,) + in_shape)
    if head == "softmax":
        target = rng.integers(0, arity, 2)
        weights = None
    else:
        target = rng.integers(0, 2, (2, arity)).astype(np.float64)
        weights = rng.uniform(1.0, 4.0, arity)
    out, cache = forward(net, params, x)
    assert np.isfinite(loss(out, target, head, weights))
    analytic = backward(net, params, cache, target, weights)
    numeric = finite_diff_grad(net, params, x, target, EPSILON, weights)
    return max_rel_error(analytic, numeric)


@pytest.mark.parametrize("name", GRAD_CHECK_CONFIGS)
@pytest.mark.parametrize("head", ["softmax", "sigmoid"])
def test_gradients_match_oracle(name, head):
    in_shape, layers, arity = GRAD_CHECK_CONFIGS[name]
    for seed in range(3):
        err = run_check(in_shape, layers, arity, head, seed)
        assert err < TOLERANCE, f"{name}/{head} seed {seed}: rel err {err}"
