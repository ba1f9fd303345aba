"""Forward and backward kernels for the layers of the 1D separable CNN.

Every kernel takes channel-first arrays (``[C, L]`` for a single example) and
also accepts any number of leading batch axes (``[..., C, L]``); parameter
gradients are summed over those batch axes. All arithmetic is float64 and
reductions run in a fixed order, so repeated calls are bitwise identical.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import InvalidTarget, NumericalFailure, ShapeMismatch


class LayerGrad(NamedTuple):
    grad_input: np.ndarray
    grad_params: tuple = ()


def _f64(x):
    return np.asarray(x, dtype=np.float64)


def _batch_axes(x, core_ndim):
    return tuple(range(x.ndim - core_ndim))


def conv_out_len(length: int, kernel: int, stride: int = 1) -> int:
    """Valid-padding output length; < 1 means the geometry is impossible."""
    if length < kernel:
        return 0
    return (length - kernel) // stride + 1


# --- depthwise convolution ---------------------------------------------------

def _check_depthwise(x, kernels, bias, stride):
    if stride < 1:
        raise ShapeMismatch("stride must be >= 1")
    if x.ndim < 2 or kernels.ndim != 2 or x.shape[-2] != kernels.shape[0]:
        raise ShapeMismatch(f"input {x.shape} incompatible with kernels {kernels.shape}")
    if bias.shape != (kernels.shape[0],):
        raise ShapeMismatch(f"bias {bias.shape} does not match {kernels.shape[0]} channels")
    if x.shape[-1] < kernels.shape[1]:
        raise ShapeMismatch(f"input length {x.shape[-1]} < kernel length {kernels.shape[1]}")


def conv1d_depthwise(x, kernels, bias, stride=1):
    """out[c, t] = sum_k x[c, t*stride + k] * kernels[c, k] + bias[c]."""
    x, kernels, bias = _f64(x), _f64(kernels), _f64(bias)
    _check_depthwise(x, kernels, bias, stride)
    K = kernels.shape[1]
    L_out = conv_out_len(x.shape[-1], K, stride)
    span = stride * (L_out - 1) + 1
    out = np.zeros(x.shape[:-1] + (L_out,))
    for k in range(K):
        out += x[..., k:k + span:stride] * kernels[:, k, None]
    out += bias[:, None]
    return out


def conv1d_depthwise_backward(x, kernels, upstream, stride=1) -> LayerGrad:
    """Gradients w.r.t. (input, kernels, bias) given d(loss)/d(out)."""
    x, kernels, upstream = _f64(x), _f64(kernels), _f64(upstream)
    K = kernels.shape[1]
    L_out = upstream.shape[-1]
    if L_out != conv_out_len(x.shape[-1], K, stride) or upstream.shape[:-1] != x.shape[:-1]:
        raise ShapeMismatch(f"upstream {upstream.shape} does not match forward output")
    span = stride * (L_out - 1) + 1
    axes = _batch_axes(x, 2) + (x.ndim - 1,)
    grad_x = np.zeros_like(x)
    grad_k = np.empty_like(kernels)
    for k in range(K):
        xs = x[..., k:k + span:stride]
        grad_k[:, k] = (xs * upstream).sum(axis=axes)
        grad_x[..., k:k + span:stride] += upstream * kernels[:, k, None]
    grad_b = upstream.sum(axis=axes)
    return LayerGrad(grad_x, (grad_k, grad_b))


# --- pointwise (1x1) convolution ---------------------------------------------

def conv1d_pointwise(x, weights, bias):
    """out[o, t] = sum_c weights[o, c] * x[c, t] + bias[o]."""
    x, weights, bias = _f64(x), _f64(weights), _f64(bias)
    if x.ndim < 2 or weights.ndim != 2 or weights.shape[1] != x.shape[-2]:
        raise ShapeMismatch(f"input {x.shape} incompatible with weights {weights.shape}")
    if bias.shape != (weights.shape[0],):
        raise ShapeMismatch(f"bias {bias.shape} does not match {weights.shape[0]} outputs")
    return np.matmul(weights, x) + bias[:, None]


def conv1d_pointwise_backward(x, weights, upstream) -> LayerGrad:
    x, weights, upstream = _f64(x), _f64(weights), _f64(upstream)
    if upstream.shape != x.shape[:-2] + (weights.shape[0], x.shape[-1]):
        raise ShapeMismatch(f"upstream {upstream.shape} does not match forward output")
    grad_x = np.matmul(weights.T, upstream)
    up2 = np.moveaxis(upstream, -2, 0).reshape(weights.shape[0], -1)
    x2 = np.moveaxis(x, -2, 0).reshape(weights.shape[1], -1)
    grad_w = up2 @ x2.T
    grad_b = up2.sum(axis=1)
    return LayerGrad(grad_x, (grad_w, grad_b))


# --- max pooling -------------------------------------------------------------

def maxpool1d(x, window, stride):
    """Max over each window; returns (out, argmax offsets within each window).

    Ties resolve to the lowest index.
    """
    x = _f64(x)
    if window < 1 or stride < 1:
        raise ShapeMismatch("window and stride must be >= 1")
    if x.shape[-1] < window:
        raise ShapeMismatch(f"input length {x.shape[-1]} < pool window {window}")
    views = np.lib.stride_tricks.sliding_window_view(x, window, axis=-1)[..., ::stride, :]
    arg = views.argmax(axis=-1)
    out = np.take_along_axis(views, arg[..., None], axis=-1)[..., 0]
    return out, arg


def maxpool1d_backward(input_shape, argmax, upstream, window, stride) -> LayerGrad:
    """Route each upstream value to the input position that won its window."""
    upstream = _f64(upstream)
    if upstream.shape != argmax.shape:
        raise ShapeMismatch("upstream and argmax shapes differ")
    L_out = upstream.shape[-1]
    span = stride * (L_out - 1) + 1
    grad_x = np.zeros(input_shape)
    for j in range(window):
        grad_x[..., j:j + span:stride] += np.where(argmax == j, upstream, 0.0)
    return LayerGrad(grad_x)


def maxpool1d_argmax_positions(argmax, stride):
    """Absolute input index of each pooled maximum."""
    return argmax + stride * np.arange(argmax.shape[-1])


# --- fully connected ---------------------------------------------------------

def dense(x, weights, bias):
    """out = weights @ x + bias for x of shape [..., N]."""
    x, weights, bias = _f64(x), _f64(weights), _f64(bias)
    if weights.ndim != 2 or x.shape[-1] != weights.shape[1] or bias.shape != (weights.shape[0],):
        raise ShapeMismatch(
            f"input {x.shape}, weights {weights.shape}, bias {bias.shape} do not agree")
    return x @ weights.T + bias


def dense_backward(x, weights, upstream) -> LayerGrad:
    x, weights, upstream = _f64(x), _f64(weights), _f64(upstream)
    if upstream.shape != x.shape[:-1] + (weights.shape[0],):
        raise ShapeMismatch(f"upstream {upstream.shape} does not match forward output")
    up2 = upstream.reshape(-1, weights.shape[0])
    x2 = x.reshape(-1, weights.shape[1])
    return LayerGrad(upstream @ weights, (up2.T @ x2, up2.sum(axis=0)))


# --- activations -------------------------------------------------------------

def relu(x):
    return np.maximum(_f64(x), 0.0)


def relu_backward(x, upstream) -> LayerGrad:
    return LayerGrad(np.where(_f64(x) > 0, upstream, 0.0))


def tanh_act(x):
    return np.tanh(_f64(x))


def tanh_backward(y, upstream) -> LayerGrad:
    """Takes the forward *output* y = tanh(x)."""
    return LayerGrad(_f64(upstream) * (1.0 - _f64(y) ** 2))


def softmax(logits):
    z = _f64(logits)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(p, upstream) -> LayerGrad:
    """Takes the forward output p = softmax(z)."""
    p, upstream = _f64(p), _f64(upstream)
    return LayerGrad(p * (upstream - (upstream * p).sum(axis=-1, keepdims=True)))


def log_softmax(logits):
    z = _f64(logits)
    top = z.argmax(axis=-1)[..., None]
    z = z - np.take_along_axis(z, top, axis=-1)
    e = np.exp(z)
    # the max term contributes exactly 1; log1p keeps tiny remainders accurate
    np.put_along_axis(e, top, 0.0, axis=-1)
    return z - np.log1p(e.sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits, target):
    """Fused -log softmax(logits)[true class] and its gradient p - target.

    Batched inputs ``[..., K]`` give per-example losses and gradients.
    """
    logits, target = _f64(logits), _f64(target)
    if logits.shape != target.shape:
        raise ShapeMismatch(f"logits {logits.shape} vs target {target.shape}")
    if not (np.all((target == 0) | (target == 1)) and np.all(target.sum(axis=-1) == 1)):
        raise InvalidTarget("target is not one-hot")
    logp = log_softmax(logits)
    loss = -(logp * target).sum(axis=-1)
    return loss, np.exp(logp) - target


# --- finite-difference gradient check ----------------------------------------

def relative_error(analytic, numeric):
    a, n = np.abs(analytic), np.abs(numeric)
    return np.abs(analytic - numeric) / np.maximum(np.maximum(a, n), 1e-8)


def numerical_gradient(fn, params, epsilon=1e-5):
    """Central differences of scalar ``fn(params)`` for every entry of every array."""
    grads = []
    for p in params:
        g = np.empty_like(p, dtype=np.float64)
        flat = p.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            fp = fn(params)
            flat[i] = orig - epsilon
            fm = fn(params)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericalFailure(f"non-finite forward value near entry {i}")
            g.reshape(-1)[i] = (fp - fm) / (2 * epsilon)
        grads.append(g)
    return grads


def grad_check(fn, params, epsilon=1e-5, value_fn=None):
    """Max relative error between analytic and central-difference gradients.

    ``fn(params)`` returns ``(value, grads)`` where ``grads`` parallels the list
    ``params``. ``value_fn``, if given, is a cheaper forward-only version of
    ``fn`` used for the perturbed evaluations. Arrays in ``params`` are
    perturbed in place and restored.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    params = [p if isinstance(p, np.ndarray) and p.dtype == np.float64 else _f64(p).copy()
              for p in params]
    value, analytic = fn(params)
    if not np.isfinite(value):
        raise NumericalFailure(f"non-finite forward value {value!r}")
    if value_fn is None:
        value_fn = lambda ps: fn(ps)[0]  # noqa: E731
    numeric = numerical_gradient(value_fn, params, epsilon)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        if np.shape(a) != n.shape:
            raise ShapeMismatch(f"analytic gradient {np.shape(a)} vs parameter {n.shape}")
        if n.size:
            worst = max(worst, float(relative_error(_f64(a), n).max()))
    return worst
