"""
Layer kernels and the gradient checker
======================================

Walks through the building blocks one at a time on tiny inputs, then checks
the whole backward pass of a small model against central differences.
"""

import numpy as np

from harcnn import kernels as K
from harcnn import model as M
from harcnn.preprocessing import one_hot

rng = np.random.default_rng(0)

# A depthwise convolution slides one kernel over each channel separately.
# With kernel [1, 0, -1] it is a first difference.
print(K.conv1d_depthwise([[1.0, 2.0, 3.0, 4.0]], [[1.0, 0.0, -1.0]], [0.0]))

# The pointwise step mixes channels at every time step, a 1x1 convolution.
x = rng.normal(size=(3, 6))
print(K.conv1d_pointwise(x, np.ones((1, 3)), [0.0]).round(3), x.sum(axis=0).round(3))

# Max-pooling keeps the argmax offsets so the backward pass can route gradients.
pooled, arg = K.maxpool1d(np.array([[1.0, 3.0, 2.0, 5.0, 4.0]]), 2, 1)
print(pooled, arg)

# The default stack on a 200-sample, 3-channel window
for name, shape in M.shape_trace(M.ModelConfig(channels=3, num_classes=20)):
    print(f"{name:8s}{shape}")

# Gradient check on a scaled-down model, every parameter entry
cfg = M.ModelConfig(input_len=40, channels=2, num_classes=3, conv1_kernel=8,
                    conv1_out_channels=3, pool_window=4, pool_stride=2, conv2_kernel=3,
                    conv2_out_channels=3, fc_units=16, l2_lambda=0.01)
params = M.init_params(cfg, seed=1)
xb = rng.normal(size=(2, cfg.channels, cfg.input_len))
t = one_hot(np.array([0, 2]), cfg.num_classes)
names = list(M.PARAM_NAMES)


def value(ps):
    d = dict(zip(names, ps))
    return M.loss(M.forward(d, xb, cfg)[0], t, d, cfg.l2_lambda)


def value_and_grad(ps):
    d = dict(zip(names, ps))
    logits, _, cache = M.forward(d, xb, cfg)
    g = M.backward(cache, t, d, cfg.l2_lambda)
    return M.loss(logits, t, d, cfg.l2_lambda), [g[n] for n in names]


err = K.grad_check(value_and_grad, [params[n] for n in names], 1e-5, value_fn=value)
print(f"max relative error over {sum(p.size for p in params.values())} entries: {err:.2e}")
