"""Differentiable operators.

Every function takes and returns :class:`Tensor` objects; plain numbers and
arrays are promoted to constants of the other operand's dtype.  Backward
closures return one gradient per parent (``None`` where not needed).
"""

import math

import numpy as np

from ..errors import BoundsError, ConfigError, DegenerateBatchError, ShapeError
from .tensor import Tensor, make_result

_window = np.lib.stride_tricks.sliding_window_view


def _lift(x, like):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x), dtype=like.dtype)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# --- elementwise & shape ---------------------------------------------------

def add(a, b):
    a = _lift(a, b) if not isinstance(a, Tensor) else a
    b = _lift(b, a)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_result(a.data + b.data, (a, b), backward, "add")


def sub(a, b):
    a = _lift(a, b) if not isinstance(a, Tensor) else a
    b = _lift(b, a)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_result(a.data - b.data, (a, b), backward, "sub")


def mul(a, b):
    a = _lift(a, b) if not isinstance(a, Tensor) else a
    b = _lift(b, a)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make_result(a.data * b.data, (a, b), backward, "mul")


def div(a, b):
    a = _lift(a, b) if not isinstance(a, Tensor) else a
    b = _lift(b, a)

    def backward(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data  # make_result rejects inf/nan
    return make_result(out, (a, b), backward, "div")


def matmul(a, b):
    """Batched matrix product with numpy broadcasting over leading axes."""
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError(f"matmul shapes {a.shape} and {b.shape} do not align")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return make_result(a.data @ b.data, (a, b), backward, "matmul")


def sum(x, axis=None, keepdims=False):
    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_result(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), backward, "sum")


def mean(x, axis=None, keepdims=False):
    count = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, x.shape).astype(x.dtype),)

    return make_result(np.asarray(x.data.mean(axis=axis, keepdims=keepdims)), (x,), backward, "mean")


def reshape(x, shape):
    def backward(g):
        return (g.reshape(x.shape),)

    return make_result(x.data.reshape(shape), (x,), backward, "reshape")


def transpose(x, axes=None):
    axes = tuple(range(x.ndim))[::-1] if axes is None else tuple(axes)
    inverse = np.argsort(axes)

    def backward(g):
        return (np.transpose(g, inverse),)

    return make_result(np.transpose(x.data, axes), (x,), backward, "transpose")


def stack(tensors, axis=0):
    tensors = list(tensors)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return make_result(np.stack([t.data for t in tensors], axis=axis), tensors, backward, "stack")


def concat(tensors, axis=0):
    tensors = list(tensors)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
                     for i in range(len(tensors)))

    return make_result(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward,
                       "concat")


def relu(x):
    mask = x.data > 0

    def backward(g):
        return (g * mask,)

    return make_result(np.where(mask, x.data, 0).astype(x.dtype), (x,), backward, "relu")


def sigmoid(x):
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ez = np.exp(x.data[~pos])
    out[~pos] = ez / (1.0 + ez)

    def backward(g):
        return (g * out * (1.0 - out),)

    return make_result(out, (x,), backward, "sigmoid")


def absolute(x):
    def backward(g):
        return (g * np.sign(x.data),)

    return make_result(np.abs(x.data), (x,), backward, "abs")


def softmax(x, axis=-1):
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_result(out, (x,), backward, "softmax")


def dropout(x, p, training, rng=None):
    """Inverted dropout: kept units are scaled by ``1 / (1 - p)`` in training."""
    if not training or p == 0:
        return x
    if not 0 <= p < 1:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    keep = (rng.uniform(0.0, 1.0, x.shape) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)

    def backward(g):
        return (g * keep,)

    return make_result(x.data * keep, (x,), backward, "dropout")


# --- layers ----------------------------------------------------------------

def linear(x, weight, bias=None):
    """``x @ weight.T + bias`` for ``weight`` of shape ``(out, in)``."""
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear expects input dim {weight.shape[1]}, got {x.shape}")
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        x2 = x.data.reshape(-1, x.shape[-1])
        grads = [g @ weight.data, g2.T @ x2]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return grads

    return make_result(out, parents, backward, "linear")


def conv2d(x, weight, bias=None, padding=None):
    """Stride-1 cross-correlation with zero padding (default: "same")."""
    n, c, h, w = x.shape
    k, c_w, kh, kw = weight.shape
    if c != c_w:
        raise ShapeError(f"conv2d: input has {c} channels, kernel expects {c_w}")
    if padding is None:
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError("same padding needs odd kernel sizes")
        ph, pw = (kh - 1) // 2, (kw - 1) // 2
    elif isinstance(padding, int):
        ph = pw = padding
    else:
        ph, pw = padding
    oh, ow = h + 2 * ph - kh + 1, w + 2 * pw - kw + 1
    if oh < 1 or ow < 1:
        raise ShapeError("conv2d: kernel larger than padded input")

    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    # (n, c, oh, ow, kh, kw) -> rows of (c * kh * kw) patches
    cols = _window(xp, (kh, kw), axis=(2, 3)).transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, -1)
    wmat = weight.data.reshape(k, -1)
    out = cols @ wmat.T
    if bias is not None:
        out += bias.data
    out = np.ascontiguousarray(out.reshape(n, oh, ow, k).transpose(0, 3, 1, 2))
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gm = g.transpose(0, 2, 3, 1).reshape(-1, k)
        grads = [None, (gm.T @ cols).reshape(weight.shape)]
        if bias is not None:
            grads.append(gm.sum(axis=0))
        if x.requires_grad:
            dcols = (gm @ wmat).reshape(n, oh, ow, c, kh, kw)
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i:i + oh, j:j + ow] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            grads[0] = dxp[:, :, ph:ph + h, pw:pw + w]
        return grads

    return make_result(out, parents, backward, "conv2d")


class BatchNormState:
    """Running statistics of one batch-norm layer (mutated in train mode)."""

    def __init__(self, channels, dtype=np.float32):
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = 0.1
        self.eps = 1e-5


def batch_norm2d(x, gamma, beta, state, training):
    """Per-channel normalisation over (N, H, W).

    Training mode uses biased batch variance for the output and folds the
    unbiased variance into the running estimate with momentum 0.1.
    """
    n, c, h, w = x.shape
    axes = (0, 2, 3)
    count = n * h * w
    shape = (1, c, 1, 1)
    eps = state.eps
    if training:
        if count < 2:
            raise DegenerateBatchError(f"batch norm needs N*H*W >= 2 in train mode, got {count}")
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        m = state.momentum
        state.running_mean[...] = (1 - m) * state.running_mean + m * mu
        state.running_var[...] = (1 - m) * state.running_var + m * var * (count / (count - 1))
    else:
        mu, var = state.running_mean, state.running_var
    inv = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x.data - mu.reshape(shape)) * inv.reshape(shape)
    out = gamma.data.reshape(shape) * xhat + beta.data.reshape(shape)

    def backward(g):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        dxhat = g * gamma.data.reshape(shape)
        if training:
            dx = (inv.reshape(shape) / count) * (
                count * dxhat
                - dxhat.sum(axis=axes, keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True))
        else:
            dx = dxhat * inv.reshape(shape)
        return dx, dgamma, dbeta

    return make_result(out.astype(x.dtype), (x, gamma, beta), backward, "batch_norm2d")


def avg_pool2d(x):
    """2x2 average pooling; an odd trailing row/column is replicated first."""
    n, c, h, w = x.shape
    pad_h, pad_w = h % 2, w % 2
    xp = x.data
    if pad_h or pad_w:
        xp = np.pad(xp, ((0, 0), (0, 0), (0, pad_h), (0, pad_w)), mode="edge")
    hh, ww = xp.shape[2] // 2, xp.shape[3] // 2
    out = xp.reshape(n, c, hh, 2, ww, 2).mean(axis=(3, 5))

    def backward(g):
        gp = np.repeat(np.repeat(g / 4, 2, axis=2), 2, axis=3)
        dx = gp[:, :, :h, :w].copy()
        if pad_h:
            dx[:, :, h - 1, :] += gp[:, :, h, :w]
        if pad_w:
            dx[:, :, :, w - 1] += gp[:, :, :h, w]
        if pad_h and pad_w:
            dx[:, :, h - 1, w - 1] += gp[:, :, h, w]
        return (dx,)

    return make_result(out.astype(x.dtype), (x,), backward, "avg_pool2d")


def global_avg_pool(x):
    n, c, h, w = x.shape

    def backward(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * w), x.shape).astype(x.dtype),)

    return make_result(x.data.mean(axis=(2, 3)), (x,), backward, "global_avg_pool")


def layer_norm(x, gamma, beta, eps=1e-5):
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    d = x.shape[-1]

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        dxhat = g * gamma.data
        dx = (inv / d) * (d * dxhat - dxhat.sum(axis=-1, keepdims=True)
                          - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return make_result((gamma.data * xhat + beta.data).astype(x.dtype), (x, gamma, beta),
                       backward, "layer_norm")


def multi_head_attention(x, n_heads, wq, wk, wv, wo, return_weights=False):
    """Bidirectional scaled dot-product self-attention over ``x[..., T, d]``.

    Projection weights are ``(d, d)`` matrices applied as ``x @ W.T`` without
    bias.  With ``return_weights`` the per-head attention probabilities
    ``(..., heads, T, T)`` are returned alongside the output.
    """
    d = x.shape[-1]
    if d % n_heads:
        raise ConfigError(f"model dim {d} is not divisible by {n_heads} heads")
    dk = d // n_heads
    t = x.shape[-2]
    lead = x.shape[:-2]
    nl = len(lead)

    def split(z):
        z = reshape(z, lead + (t, n_heads, dk))
        return transpose(z, tuple(range(nl)) + (nl + 1, nl, nl + 2))

    q = split(linear(x, wq))
    k = split(linear(x, wk))
    v = split(linear(x, wv))
    kt = transpose(k, tuple(range(nl + 1)) + (nl + 2, nl + 1))
    scores = mul(matmul(q, kt), 1.0 / math.sqrt(dk))
    attn = softmax(scores, axis=-1)
    ctx = matmul(attn, v)
    ctx = transpose(ctx, tuple(range(nl)) + (nl + 1, nl, nl + 2))
    out = linear(reshape(ctx, lead + (t, d)), wo)
    return (out, attn.data) if return_weights else out


# --- losses ------------------------------------------------------------------

def softmax_cross_entropy(logits, targets):
    """Mean over the batch of ``-log softmax(logits)[target]``."""
    targets = np.asarray(targets, dtype=np.int64)
    n, k = logits.shape
    if targets.shape != (n,):
        raise ShapeError(f"expected {n} targets, got shape {targets.shape}")
    if np.any(targets < 0) or np.any(targets >= k):
        raise BoundsError(f"targets must lie in [0, {k})")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logsumexp
    rows = np.arange(n)
    loss = -logp[rows, targets].mean()

    def backward(g):
        grad = np.exp(logp)
        grad[rows, targets] -= 1.0
        return (grad * (g / n),)

    return make_result(np.asarray(loss, dtype=logits.dtype), (logits,), backward, "softmax_cross_entropy")


def masked_l1(pred, target, mask):
    """Mean absolute error over cells where ``mask`` is true (0 if none)."""
    target = np.asarray(target, dtype=pred.dtype)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), pred.shape)
    count = int(mask.sum())
    if count == 0:
        return make_result(np.asarray(0.0, dtype=pred.dtype), (pred,),
                           lambda g: (np.zeros_like(pred.data),), "masked_l1")
    diff = pred.data - target

    def backward(g):
        return (np.sign(diff) * mask * (g / count),)

    loss = np.abs(diff)[mask].sum() / count
    return make_result(np.asarray(loss, dtype=pred.dtype), (pred,), backward, "masked_l1")
