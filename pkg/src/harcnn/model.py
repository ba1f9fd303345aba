"""The separable 1D CNN classifier.

Layer stack (input ``[C, W]``, channel-first)::

    conv1  depthwise (kernel 60) -> pointwise (60 channels) -> ReLU
    pool   max, window 20, stride 2
    conv2  depthwise (kernel 6, stride 1) -> pointwise (60 channels)
    flatten
    fc1    dense 1000 -> tanh
    out    dense K -> softmax

``conv1_depth_multiplier`` M > 1 gives each input channel M depthwise kernels
(C*M intermediate channels) before the pointwise projection.

Parameters live in an ordered ``dict`` (``ModelParams``) whose key order is
``PARAM_NAMES``; that order is also the checkpoint order.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Dict

import numpy as np

from . import kernels as K
from ._rng import substream
from .errors import InvalidCache, ShapeMismatch

PARAM_NAMES = (
    "conv1_dw_w", "conv1_dw_b", "conv1_pw_w", "conv1_pw_b",
    "conv2_dw_w", "conv2_dw_b", "conv2_pw_w", "conv2_pw_b",
    "fc1_w", "fc1_b", "out_w", "out_b",
)
WEIGHT_NAMES = tuple(n for n in PARAM_NAMES if n.endswith("_w"))

ModelParams = Dict[str, np.ndarray]


@dataclass(frozen=True)
class ModelConfig:
    input_len: int = 200
    channels: int = 3
    num_classes: int = 20
    conv1_kernel: int = 60
    conv1_out_channels: int = 60
    conv1_stride: int = 1
    conv1_depth_multiplier: int = 1
    pool_window: int = 20
    pool_stride: int = 2
    conv2_kernel: int = 6
    conv2_stride: int = 1
    conv2_out_channels: int = 60
    fc_units: int = 1000
    l2_lambda: float = 1e-4

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "l2_lambda":
                if v < 0:
                    raise ValueError("l2_lambda must be >= 0")
            elif v < 1:
                raise ValueError(f"{f.name} must be positive, got {v}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def param_shapes(self) -> dict:
        flat = shape_trace(self)[-3][1][0]
        C, K1, C1 = self.channels * self.conv1_depth_multiplier, self.conv1_kernel, \
            self.conv1_out_channels
        K2, C2 = self.conv2_kernel, self.conv2_out_channels
        return {
            "conv1_dw_w": (C, K1), "conv1_dw_b": (C,),
            "conv1_pw_w": (C1, C), "conv1_pw_b": (C1,),
            "conv2_dw_w": (C1, K2), "conv2_dw_b": (C1,),
            "conv2_pw_w": (C2, C1), "conv2_pw_b": (C2,),
            "fc1_w": (self.fc_units, flat), "fc1_b": (self.fc_units,),
            "out_w": (self.num_classes, self.fc_units), "out_b": (self.num_classes,),
        }


def shape_trace(config: ModelConfig):
    """Per-layer output shapes; raises ShapeMismatch at the first impossible layer."""
    c = config
    trace = []

    def need(name, length, kernel):
        if length < kernel:
            raise ShapeMismatch(f"{name}: input length {length} < window {kernel}")

    need("conv1", c.input_len, c.conv1_kernel)
    L1 = K.conv_out_len(c.input_len, c.conv1_kernel, c.conv1_stride)
    trace.append(("conv1", (c.conv1_out_channels, L1)))
    need("pool", L1, c.pool_window)
    Lp = K.conv_out_len(L1, c.pool_window, c.pool_stride)
    trace.append(("pool", (c.conv1_out_channels, Lp)))
    need("conv2", Lp, c.conv2_kernel)
    L2 = K.conv_out_len(Lp, c.conv2_kernel, c.conv2_stride)
    trace.append(("conv2", (c.conv2_out_channels, L2)))
    trace.append(("flatten", (c.conv2_out_channels * L2,)))
    trace.append(("fc1", (c.fc_units,)))
    trace.append(("out", (c.num_classes,)))
    return trace


def init_params(config: ModelConfig, seed: int = 0) -> ModelParams:
    """Uniform(-sqrt(3/fan_in), sqrt(3/fan_in)) weights, zero biases."""
    rng = substream(seed, "init")
    params = {}
    for name, shape in config.param_shapes().items():
        if name.endswith("_b"):
            params[name] = np.zeros(shape)
        else:
            fan_in = shape[1]
            bound = np.sqrt(3.0 / fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def zero_params(config: ModelConfig) -> ModelParams:
    return {n: np.zeros(s) for n, s in config.param_shapes().items()}


@dataclass
class ForwardCache:
    x: np.ndarray
    pre1_dw: np.ndarray
    pre1: np.ndarray
    act1: np.ndarray
    pooled: np.ndarray
    argmax: np.ndarray
    pre2_dw: np.ndarray
    flat: np.ndarray
    hidden: np.ndarray
    logits: np.ndarray
    probs: np.ndarray
    params_ref: tuple
    config: ModelConfig


def _check_params(params: ModelParams, config: ModelConfig):
    shapes = config.param_shapes()
    for name in PARAM_NAMES:
        if name not in params:
            raise ShapeMismatch(f"missing parameter {name}")
        if params[name].shape != shapes[name]:
            raise ShapeMismatch(f"{name} has shape {params[name].shape}, expected {shapes[name]}")


def forward(params: ModelParams, x, config: ModelConfig):
    """Run the stack on ``x`` of shape ``[C, W]`` or ``[B, C, W]``.

    Returns ``(logits, probabilities, cache)``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (2, 3) or x.shape[-2:] != (config.channels, config.input_len):
        raise ShapeMismatch(
            f"input {x.shape} does not match [C={config.channels}, W={config.input_len}]")
    _check_params(params, config)
    p, c = params, config
    if c.conv1_depth_multiplier > 1:
        x = np.repeat(x, c.conv1_depth_multiplier, axis=-2)
    pre1_dw = K.conv1d_depthwise(x, p["conv1_dw_w"], p["conv1_dw_b"], c.conv1_stride)
    pre1 = K.conv1d_pointwise(pre1_dw, p["conv1_pw_w"], p["conv1_pw_b"])
    act1 = K.relu(pre1)
    pooled, argmax = K.maxpool1d(act1, c.pool_window, c.pool_stride)
    pre2_dw = K.conv1d_depthwise(pooled, p["conv2_dw_w"], p["conv2_dw_b"], c.conv2_stride)
    pre2 = K.conv1d_pointwise(pre2_dw, p["conv2_pw_w"], p["conv2_pw_b"])
    flat = pre2.reshape(pre2.shape[:-2] + (-1,))
    hidden = K.tanh_act(K.dense(flat, p["fc1_w"], p["fc1_b"]))
    logits = K.dense(hidden, p["out_w"], p["out_b"])
    probs = K.softmax(logits)
    cache = ForwardCache(x, pre1_dw, pre1, act1, pooled, argmax, pre2_dw, flat, hidden,
                         logits, probs, tuple(p[n] for n in PARAM_NAMES), config)
    return logits, probs, cache


def l2_penalty(params: ModelParams, l2_lambda: float) -> float:
    return l2_lambda * sum(float(np.sum(params[n] ** 2)) for n in WEIGHT_NAMES if n in params)


def loss(logits, target, params: ModelParams, l2_lambda: float) -> float:
    """Cross-entropy (averaged over a batch) plus ``l2_lambda * sum(w**2)`` over weights."""
    if l2_lambda < 0:
        raise ValueError("l2_lambda must be >= 0")
    ce, _ = K.softmax_cross_entropy(logits, target)
    return float(np.mean(ce)) + l2_penalty(params, l2_lambda)


def backward(cache: ForwardCache, target, params: ModelParams, l2_lambda: float) -> ModelParams:
    """Gradients of :func:`loss` w.r.t. every parameter, keyed like ``params``."""
    if len(cache.params_ref) != len(PARAM_NAMES) or any(
            params.get(n) is not a for n, a in zip(PARAM_NAMES, cache.params_ref)):
        raise InvalidCache("cache was produced with different parameters")
    p, c = params, cache.config
    _, d_logits = K.softmax_cross_entropy(cache.logits, target)
    if d_logits.ndim == 2:
        d_logits = d_logits / d_logits.shape[0]
    g = {}
    r = K.dense_backward(cache.hidden, p["out_w"], d_logits)
    g["out_w"], g["out_b"] = r.grad_params
    d_hidden = K.tanh_backward(cache.hidden, r.grad_input).grad_input
    r = K.dense_backward(cache.flat, p["fc1_w"], d_hidden)
    g["fc1_w"], g["fc1_b"] = r.grad_params
    L2 = cache.pre2_dw.shape[-1]
    d_pre2 = r.grad_input.reshape(r.grad_input.shape[:-1] + (c.conv2_out_channels, L2))
    r = K.conv1d_pointwise_backward(cache.pre2_dw, p["conv2_pw_w"], d_pre2)
    g["conv2_pw_w"], g["conv2_pw_b"] = r.grad_params
    r = K.conv1d_depthwise_backward(cache.pooled, p["conv2_dw_w"], r.grad_input, c.conv2_stride)
    g["conv2_dw_w"], g["conv2_dw_b"] = r.grad_params
    d_act1 = K.maxpool1d_backward(cache.act1.shape, cache.argmax, r.grad_input,
                                  c.pool_window, c.pool_stride).grad_input
    d_pre1 = K.relu_backward(cache.pre1, d_act1).grad_input
    r = K.conv1d_pointwise_backward(cache.pre1_dw, p["conv1_pw_w"], d_pre1)
    g["conv1_pw_w"], g["conv1_pw_b"] = r.grad_params
    r = K.conv1d_depthwise_backward(cache.x, p["conv1_dw_w"], r.grad_input, c.conv1_stride)
    g["conv1_dw_w"], g["conv1_dw_b"] = r.grad_params
    if l2_lambda:
        for n in WEIGHT_NAMES:
            g[n] = g[n] + 2.0 * l2_lambda * p[n]
    return {n: g[n] for n in PARAM_NAMES}


def predict_logits(params: ModelParams, x, config: ModelConfig, batch_size: int = 512):
    """Logits for ``x`` of shape ``[B, C, W]``, evaluated in chunks."""
    x = np.asarray(x, dtype=np.float64)
    out = [forward(params, x[i:i + batch_size], config)[0]
           for i in range(0, x.shape[0], batch_size)]
    return np.concatenate(out) if out else np.zeros((0, config.num_classes))


def predict_proba(params: ModelParams, x, config: ModelConfig, batch_size: int = 512):
    return K.softmax(predict_logits(params, x, config, batch_size))
