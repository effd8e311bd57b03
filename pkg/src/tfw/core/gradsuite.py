"""Finite-difference gradient checks for every layer type, over many seeds.

Inputs are drawn away from the non-differentiable points of ReLU and max
pooling so central differences are meaningful there.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from tfw.core.gradcheck import GradCheckReport, grad_check
from tfw.core.layers import (
    Conv2d,
    Dense,
    Dropout,
    GlobalAvgPool,
    GRUCell,
    MaxPool2d,
    MeanPool,
    MultiHeadSelfAttention,
    ReLU,
    SoftmaxCrossEntropy,
)
from tfw.core.params import ParamStore

EPS = 1e-5


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * (margin + np.abs(x)), x)


def _simple(layer, x, store=None, **fwd_kw):
    inputs = {"x": x}
    return grad_check(lambda: layer.forward(inputs["x"], **fwd_kw), lambda g: {"x": layer.backward(g)},
                      inputs, store, eps=EPS, reset=layer.clear)


def check_dense(rng):
    store = ParamStore()
    layer = Dense(store, "fc", 5, 4, rng=rng)
    store["fc.b"].value[...] = rng.normal(size=4)
    return _simple(layer, rng.normal(size=(3, 5)), store)


def check_conv(rng):
    store = ParamStore()
    stride, pad, k = [(1, 1, 3), (2, 1, 4), (1, 0, 2)][int(rng.integers(3))]
    layer = Conv2d(store, "conv", 2, 3, k, stride=stride, pad=pad, rng=rng)
    store["conv.b"].value[...] = rng.normal(size=3)
    return _simple(layer, rng.normal(size=(2, 2, 6, 6)), store)


def check_relu(rng):
    return _simple(ReLU(), _away_from_zero(rng, (3, 7)))


def check_avgpool(rng):
    return _simple(GlobalAvgPool(), rng.normal(size=(2, 3, 4, 4)))


def check_maxpool(rng):
    # a shuffled grid with unit gaps keeps every window's maximum unique
    x = rng.permutation(2 * 3 * 4 * 4).reshape(2, 3, 4, 4).astype(float) * 0.1
    return _simple(MaxPool2d(2), x)


def check_meanpool(rng):
    return _simple(MeanPool(), rng.normal(size=(2, 5, 4)))


def check_dropout_off(rng):
    return _simple(Dropout(0.5, rng=rng), rng.normal(size=(3, 6)), training=False)


def check_dropout_train(rng):
    seed = int(rng.integers(2**31))
    layer = Dropout(0.3, rng=np.random.default_rng(seed))
    inputs = {"x": rng.normal(size=(3, 6))}

    def reset():
        layer.clear()
        layer.rng = np.random.default_rng(seed)  # identical mask on every evaluation

    reset()
    return grad_check(lambda: layer.forward(inputs["x"], training=True), lambda g: {"x": layer.backward(g)},
                      inputs, eps=EPS, reset=reset)


def check_gru(rng):
    store = ParamStore()
    layer = GRUCell(store, "gru", 3, 4, rng=rng)
    store["gru.b"].value[...] = rng.normal(size=12)
    inputs = {"x": rng.normal(size=(2, 3)), "h": np.tanh(rng.normal(size=(2, 4)))}

    def bwd(g):
        dx, dh = layer.backward(g)
        return {"x": dx, "h": dh}

    return grad_check(lambda: layer.forward(inputs["x"], inputs["h"]), bwd, inputs, store, eps=EPS,
                      reset=layer.clear)


def check_softmax_ce(rng):
    layer = SoftmaxCrossEntropy()
    inputs = {"logits": rng.normal(size=(4, 5)) * 2}
    labels = rng.integers(0, 5, size=4)
    return grad_check(lambda: np.array(layer.forward(inputs["logits"], labels)[0]),
                      lambda g: {"logits": layer.backward(float(g))}, inputs, eps=EPS, reset=layer.clear)


def check_attention(rng):
    store = ParamStore()
    layer = MultiHeadSelfAttention(store, "attn", 4, 2, 3, rng=rng)
    for p in store:
        if p.name.startswith("attn.b"):
            p.value[...] = rng.normal(scale=0.1, size=p.value.shape)
    return _simple(layer, rng.normal(size=(2, 3, 4)), store)


CASES = {
    "dense": check_dense,
    "conv": check_conv,
    "relu": check_relu,
    "avgpool": check_avgpool,
    "maxpool": check_maxpool,
    "meanpool": check_meanpool,
    "dropout_off": check_dropout_off,
    "dropout_train": check_dropout_train,
    "gru": check_gru,
    "softmax_ce": check_softmax_ce,
    "attention": check_attention,
}


@dataclass
class SuiteResult:
    n_seeds: int
    max_error: dict[str, float] = field(default_factory=dict)
    worst: dict[str, tuple[int, GradCheckReport]] = field(default_factory=dict)  # layer -> (seed, report)
    seconds: float = 0.0

    def passed(self, tol: float = 1e-4) -> bool:
        return all(e < tol for e in self.max_error.values())

    def table(self) -> str:
        lines = [f"{'layer':<14}{'max rel err':>12}  worst seed"]
        for name, err in self.max_error.items():
            lines.append(f"{name:<14}{err:12.3e}  {self.worst[name][0]}")
        return "\n".join(lines)


def run_suite(n_seeds: int = 20, layers=None) -> SuiteResult:
    """Double-precision checks of every layer in ``layers`` (default: all) for seeds 0..n_seeds-1."""
    start = time.perf_counter()
    result = SuiteResult(n_seeds)
    for name in layers or CASES:
        for seed in range(n_seeds):
            report = CASES[name](np.random.default_rng([seed, 17]))
            if report.overall >= result.max_error.get(name, -1.0):
                result.max_error[name] = report.overall
                result.worst[name] = (seed, report)
    result.seconds = time.perf_counter() - start
    return result
