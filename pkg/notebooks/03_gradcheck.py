"""
Auditing backward rules with finite differences
===============================================

Every op records a closure for its gradient.  Here we compare those
closures with central differences on a small conv -> batch norm -> relu ->
pool -> linear chain, run in float64.
"""

import numpy as np

from serpann import autodiff as ad
from serpann.autodiff import Tensor
from serpann.autodiff.gradcheck import numerical_grad, relative_error, sample_coords
from serpann.prng import Prng

rng = np.random.default_rng(0)


def leaf(*shape, scale=1.0):
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True, dtype=np.float64)


x = leaf(2, 1, 8, 8)
w = leaf(4, 1, 3, 3, scale=0.5)
gamma, beta = leaf(4), leaf(4)
fc = leaf(3, 4)
state = ad.BatchNormState(4, np.float64)
labels = [0, 2]


def loss():
    h = ad.conv2d(x, w)
    h = ad.relu(ad.batch_norm2d(h, gamma, beta, state, training=True))
    h = ad.global_avg_pool(ad.avg_pool2d(h))
    return ad.softmax_cross_entropy(ad.linear(h, fc), labels)


loss().backward()
pick = Prng(1)
for name, t in {"x": x, "w": w, "gamma": gamma, "beta": beta, "fc": fc}.items():
    coords = sample_coords(t.size, 10, pick)
    with ad.no_grad():
        numeric = numerical_grad(lambda: loss().item(), t.data, coords)
    err = relative_error(t.grad.reshape(-1)[coords], numeric, floor=1e-6).max()
    print(f"{name:6s} worst relative error over {len(coords)} coords: {err:.2e}")
