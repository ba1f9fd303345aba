import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from harcnn import kernels as K
from harcnn.errors import InvalidTarget, NumericalFailure, ShapeMismatch


# --- forward values ----------------------------------------------------------

def test_depthwise_example():
    out = K.conv1d_depthwise([[1, 2, 3, 4]], [[1, 0, -1]], [0], 1)
    np.testing.assert_array_equal(out, [[-2, -2]])


def test_depthwise_identity(rng):
    x = rng.normal(size=(3, 9))
    np.testing.assert_array_equal(K.conv1d_depthwise(x, np.ones((3, 1)), np.zeros(3)), x)


def test_depthwise_matches_loop(rng):
    x, k, b = rng.normal(size=(3, 40)), rng.normal(size=(3, 5)), rng.normal(size=3)
    out = K.conv1d_depthwise(x, k, b, stride=2)
    ref = oracles.depthwise_conv(x, k, b, 2)
    assert out.shape == (3, 18)
    assert np.max(np.abs(out - ref)) < 1e-12


def test_depthwise_same_order_is_bitwise(rng):
    x, k, b = rng.normal(size=(4, 30)), rng.normal(size=(4, 7)), rng.normal(size=4)
    np.testing.assert_array_equal(K.conv1d_depthwise(x, k, b, 1),
                                  oracles.depthwise_conv(x, k, b, 1))


def test_depthwise_reversed_kernel_is_convolution(rng):
    x, k = rng.normal(size=(2, 25)), rng.normal(size=(2, 4))
    out = K.conv1d_depthwise(x, k[:, ::-1], np.zeros(2), 1)
    for c in range(2):
        np.testing.assert_allclose(out[c], np.convolve(x[c], k[c], mode="valid"),
                                   rtol=0, atol=1e-12)


def test_depthwise_too_short():
    with pytest.raises(ShapeMismatch):
        K.conv1d_depthwise(np.zeros((1, 3)), np.zeros((1, 4)), np.zeros(1))


def test_pointwise_examples(rng):
    np.testing.assert_array_equal(K.conv1d_pointwise([[1, 1], [2, 2]], [[1, 1]], [0]), [[3, 3]])
    x = rng.normal(size=(4, 11))
    np.testing.assert_array_equal(K.conv1d_pointwise(x, np.eye(4), np.zeros(4)), x)
    w, b = rng.normal(size=(6, 4)), rng.normal(size=6)
    assert np.max(np.abs(K.conv1d_pointwise(x, w, b) - (w @ x + b[:, None]))) < 1e-12
    with pytest.raises(ShapeMismatch):
        K.conv1d_pointwise(x, np.zeros((6, 3)), b)


def test_maxpool_examples():
    out, arg = K.maxpool1d([[1, 3, 2, 5]], 2, 2)
    np.testing.assert_array_equal(out, [[3, 5]])
    np.testing.assert_array_equal(K.maxpool1d_argmax_positions(arg, 2), [[1, 3]])
    out, _ = K.maxpool1d(np.full((2, 9), 4.5), 3, 2)
    np.testing.assert_array_equal(out, 4.5)
    assert K.maxpool1d(np.zeros((1, 141)), 20, 2)[0].shape == (1, 61)
    with pytest.raises(ShapeMismatch):
        K.maxpool1d(np.zeros((1, 5)), 6, 1)


def test_maxpool_tie_lowest_index():
    _, arg = K.maxpool1d([[2, 2, 1, 7, 7]], 2, 1)
    np.testing.assert_array_equal(arg, [[0, 0, 1, 0]])


def test_dense_examples(rng):
    np.testing.assert_array_equal(K.dense([1, 2], [[3, 4]], [1]), [12])
    x = rng.normal(size=5)
    np.testing.assert_array_equal(K.dense(x, np.eye(5), np.zeros(5)), x)
    x, w, b = rng.normal(size=3360), rng.normal(size=(1000, 3360)), rng.normal(size=1000)
    assert np.max(np.abs(K.dense(x, w, b) - (np.dot(w, x) + b))) < 1e-10
    with pytest.raises(ShapeMismatch):
        K.dense(x, w[:, :10], b)


def test_activations():
    np.testing.assert_array_equal(K.relu([-1, 0, 2]), [0, 0, 2])
    np.testing.assert_array_equal(K.softmax([0, 0, 0, 0]), [0.25] * 4)
    p = K.softmax([1000.0, 1000.0])
    np.testing.assert_array_equal(p, [0.5, 0.5])
    np.testing.assert_allclose(K.tanh_act([0.0, 1.0]), [0.0, math.tanh(1.0)], rtol=0, atol=0)


@given(arrays(np.float64, st.integers(1, 30), elements=st.floats(-500, 500)),
       st.floats(-1e3, 1e3))
def test_softmax_properties(z, shift):
    p = K.softmax(z)
    assert np.all((p >= 0) & (p <= 1))
    assert abs(p.sum() - 1) < 1e-9
    assert np.max(np.abs(K.softmax(z + shift) - p)) < 1e-12


def test_cross_entropy_values():
    loss, grad = K.softmax_cross_entropy(np.zeros(20), np.eye(20)[0])
    assert abs(loss - math.log(20)) < 1e-12
    loss, grad = K.softmax_cross_entropy([10.0, -10.0], [1.0, 0.0])
    exact = math.log1p(math.exp(-20.0))
    assert abs(loss - exact) < 1e-9 * exact
    assert abs(loss - oracles.cross_entropy([10.0, -10.0], 0)) < 1e-9 * exact
    assert np.all(np.abs(grad) < 2.1e-9)
    with pytest.raises(InvalidTarget):
        K.softmax_cross_entropy([1.0, 2.0], [0.5, 0.5])
    with pytest.raises(ShapeMismatch):
        K.softmax_cross_entropy([1.0, 2.0], [1.0, 0.0, 0.0])


def test_cross_entropy_gradient_fd(rng):
    for _ in range(20):
        z = rng.normal(size=6)
        label = int(rng.integers(6))
        t = np.eye(6)[label]
        _, grad = K.softmax_cross_entropy(z, t)
        for i in range(6):
            zp, zm = z.copy(), z.copy()
            zp[i] += 1e-5
            zm[i] -= 1e-5
            fd = (oracles.cross_entropy(zp, label) - oracles.cross_entropy(zm, label)) / 2e-5
            assert abs(fd - grad[i]) <= 1e-6 * abs(grad[i])


# --- backward passes ---------------------------------------------------------

def _linear_probe(out_fn, shape_out, rng):
    r = rng.normal(size=shape_out)
    return r, lambda *a: float(np.sum(out_fn(*a) * r))


def test_grad_check_quadratic():
    err = K.grad_check(lambda ps: (float(ps[0][0] ** 2), [2 * ps[0]]), [np.array([3.0])])
    assert err < 1e-8


def test_grad_check_detects_corruption(rng):
    x = rng.normal(size=(2, 12))
    k, b = rng.normal(size=(2, 3)), rng.normal(size=2)
    r = rng.normal(size=(2, 10))

    def fn(ps):
        out = K.conv1d_depthwise(ps[0], ps[1], ps[2])
        g = K.conv1d_depthwise_backward(ps[0], ps[1], r)
        return float(np.sum(out * r)), [g.grad_input, 2 * g.grad_params[0], g.grad_params[1]]
    assert K.grad_check(fn, [x, k, b]) > 0.3


def test_grad_check_non_finite():
    with pytest.raises(NumericalFailure):
        K.grad_check(lambda ps: (float("nan"), [ps[0]]), [np.ones(1)])


def _layer_cases(rng):
    """(name, fn, params) triples with random small shapes for every layer."""
    C, L = int(rng.integers(1, 4)), int(rng.integers(8, 20))
    Kk, s = int(rng.integers(1, 6)), int(rng.integers(1, 3))
    x = rng.normal(size=(C, L))
    k, b = rng.normal(size=(C, Kk)), rng.normal(size=C)
    r = rng.normal(size=(C, K.conv_out_len(L, Kk, s)))

    def depthwise(ps):
        g = K.conv1d_depthwise_backward(ps[0], ps[1], r, s)
        return float(np.sum(K.conv1d_depthwise(ps[0], ps[1], ps[2], s) * r)), \
            [g.grad_input, *g.grad_params]
    yield "depthwise", depthwise, [x, k, b]

    O = int(rng.integers(1, 5))
    w, bo = rng.normal(size=(O, C)), rng.normal(size=O)
    rp = rng.normal(size=(O, L))

    def pointwise(ps):
        g = K.conv1d_pointwise_backward(ps[0], ps[1], rp)
        return float(np.sum(K.conv1d_pointwise(ps[0], ps[1], ps[2]) * rp)), \
            [g.grad_input, *g.grad_params]
    yield "pointwise", pointwise, [x.copy(), w, bo]

    win, ps_ = int(rng.integers(2, 5)), int(rng.integers(1, 3))
    rm = rng.normal(size=(C, K.conv_out_len(L, win, ps_)))

    def pool(ps):
        out, arg = K.maxpool1d(ps[0], win, ps_)
        g = K.maxpool1d_backward(ps[0].shape, arg, rm, win, ps_)
        return float(np.sum(out * rm)), [g.grad_input]
    yield "maxpool", pool, [x.copy()]

    N, M = int(rng.integers(1, 8)), int(rng.integers(1, 6))
    xd, wd, bd = rng.normal(size=N), rng.normal(size=(M, N)), rng.normal(size=M)
    rd = rng.normal(size=M)

    def dense(ps):
        g = K.dense_backward(ps[0], ps[1], rd)
        return float(np.dot(K.dense(ps[0], ps[1], ps[2]), rd)), [g.grad_input, *g.grad_params]
    yield "dense", dense, [xd, wd, bd]

    xa = rng.normal(size=7)
    xa[np.abs(xa) < 1e-3] = 0.5  # keep away from the ReLU kink
    ra = rng.normal(size=7)
    yield "relu", lambda ps: (float(np.dot(K.relu(ps[0]), ra)),
                              [K.relu_backward(ps[0], ra).grad_input]), [xa]
    yield "tanh", lambda ps: (float(np.dot(K.tanh_act(ps[0]), ra)),
                              [K.tanh_backward(K.tanh_act(ps[0]), ra).grad_input]), [xa.copy()]
    yield "softmax", lambda ps: (float(np.dot(K.softmax(ps[0]), ra)),
                                 [K.softmax_backward(K.softmax(ps[0]), ra).grad_input]), \
        [xa.copy()]
    t = np.eye(7)[rng.integers(7)]
    yield "cross_entropy", lambda ps: (float(K.softmax_cross_entropy(ps[0], t)[0]),
                                       [K.softmax_cross_entropy(ps[0], t)[1]]), [xa.copy()]


@pytest.mark.parametrize("seed", range(10))
def test_layer_gradients(seed):
    rng = np.random.default_rng(seed)
    for name, fn, params in _layer_cases(rng):
        assert K.grad_check(fn, params, 1e-5) < 1e-4, name


@given(st.integers(1, 4), st.integers(4, 30), st.integers(1, 6), st.integers(1, 4),
       st.integers(0, 10_000))
@settings(max_examples=50)
def test_maxpool_backward_conserves_mass(C, L, window, stride, seed):
    window = min(window, L)
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(C, L))
    out, arg = K.maxpool1d(x, window, stride)
    up = rng.normal(size=out.shape)
    g = K.maxpool1d_backward(x.shape, arg, up, window, stride).grad_input
    assert abs(g.sum() - up.sum()) < 1e-12


def test_batched_equals_per_example(rng):
    xb = rng.normal(size=(5, 3, 30))
    k, b = rng.normal(size=(3, 4)), rng.normal(size=3)
    out = K.conv1d_depthwise(xb, k, b, 2)
    for i in range(5):
        np.testing.assert_array_equal(out[i], K.conv1d_depthwise(xb[i], k, b, 2))
    up = rng.normal(size=out.shape)
    gb = K.conv1d_depthwise_backward(xb, k, up, 2)
    parts = [K.conv1d_depthwise_backward(xb[i], k, up[i], 2) for i in range(5)]
    np.testing.assert_allclose(gb.grad_params[0], sum(p.grad_params[0] for p in parts),
                               rtol=0, atol=1e-12)


def test_kernels_are_pure(rng):
    x, k, b = rng.normal(size=(3, 50)), rng.normal(size=(3, 6)), rng.normal(size=3)
    a1 = K.conv1d_depthwise(x, k, b, 2)
    a2 = K.conv1d_depthwise(x, k, b, 2)
    assert a1.tobytes() == a2.tobytes()
    w = rng.normal(size=(200, 50))
    assert K.dense(x[0], w, np.zeros(200)).tobytes() == K.dense(x[0], w, np.zeros(200)).tobytes()
