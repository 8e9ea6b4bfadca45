"""Layer objects and the parameter-owning model base class."""

import math

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor


def kaiming_uniform(rng, shape, fan_in, dtype):
    """U(-b, b) with b = sqrt(6 / fan_in), i.e. ReLU gain sqrt(2)."""
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, shape).astype(dtype)


class Layer:
    """One entry of a model's ordered layer list."""

    name = None

    def params(self):
        return {}

    def buffers(self):
        return {}

    def describe(self):
        raise NotImplementedError


class Conv2d(Layer):
    def __init__(self, name, c_in, c_out, kernel, rng, dtype):
        self.name = name
        fan_in = c_in * kernel * kernel
        self.weight = Tensor(kaiming_uniform(rng, (c_out, c_in, kernel, kernel), fan_in, dtype),
                             requires_grad=True, dtype=dtype)
        self.bias = Tensor(np.zeros(c_out), requires_grad=True, dtype=dtype)
        self.kernel = kernel

    def params(self):
        return {f"{self.name}.weight": self.weight, f"{self.name}.bias": self.bias}

    def __call__(self, x, training, rng):
        return ad.conv2d(x, self.weight, self.bias)

    def describe(self):
        k, c = self.weight.shape[:2]
        return f"conv2d in={c} out={k} kernel={self.kernel}x{self.kernel}"


class BatchNorm2d(Layer):
    def __init__(self, name, channels, dtype):
        self.name = name
        self.gamma = Tensor(np.ones(channels), requires_grad=True, dtype=dtype)
        self.beta = Tensor(np.zeros(channels), requires_grad=True, dtype=dtype)
        self.state = ad.BatchNormState(channels, dtype)

    def params(self):
        return {f"{self.name}.gamma": self.gamma, f"{self.name}.beta": self.beta}

    def buffers(self):
        return {f"{self.name}.running_mean": self.state.running_mean,
                f"{self.name}.running_var": self.state.running_var}

    def __call__(self, x, training, rng):
        return ad.batch_norm2d(x, self.gamma, self.beta, self.state, training)

    def describe(self):
        return f"batchnorm2d channels={self.gamma.shape[0]}"


class Linear(Layer):
    def __init__(self, name, d_in, d_out, rng, dtype, bias=True):
        self.name = name
        self.weight = Tensor(kaiming_uniform(rng, (d_out, d_in), d_in, dtype),
                             requires_grad=True, dtype=dtype)
        self.bias = Tensor(np.zeros(d_out), requires_grad=True, dtype=dtype) if bias else None

    def params(self):
        p = {f"{self.name}.weight": self.weight}
        if self.bias is not None:
            p[f"{self.name}.bias"] = self.bias
        return p

    @property
    def in_features(self):
        return self.weight.shape[1]

    @property
    def out_features(self):
        return self.weight.shape[0]

    def __call__(self, x, training=False, rng=None):
        return ad.linear(x, self.weight, self.bias)

    def describe(self):
        return f"linear in={self.in_features} out={self.out_features}"


class ReLU(Layer):
    def __call__(self, x, training, rng):
        return ad.relu(x)

    def describe(self):
        return "relu"


class AvgPool2d(Layer):
    def __call__(self, x, training, rng):
        return ad.avg_pool2d(x)

    def describe(self):
        return "avgpool2d size=2x2"


class GlobalAvgPool(Layer):
    def __call__(self, x, training, rng):
        return ad.global_avg_pool(x)

    def describe(self):
        return "globalavgpool"


class Dropout(Layer):
    """Listed in the layer sequence but omitted from architecture descriptions."""

    def __init__(self, p):
        self.p = p

    def __call__(self, x, training, rng):
        return ad.dropout(x, self.p, training, rng)

    def describe(self):
        return None


class Model:
    """Ordered collection of named parameters and buffers.

    Subclasses implement ``forward_batch(features, training, rng)`` taking a
    list of ``(frames, channels)`` arrays and returning a logits tensor.
    """

    output_activation = "softmax"

    def named_parameters(self):
        raise NotImplementedError

    def named_buffers(self):
        return {}

    def num_parameters(self):
        return int(sum(p.size for p in self.named_parameters().values()))

    def zero_grad(self):
        for p in self.named_parameters().values():
            p.zero_grad()

    def state_dict(self):
        """Copies of every parameter and buffer, in a stable order."""
        state = {k: v.data.copy() for k, v in self.named_parameters().items()}
        state.update({k: v.copy() for k, v in self.named_buffers().items()})
        return state

    def load_state_dict(self, state, strict=True):
        params = self.named_parameters()
        buffers = self.named_buffers()
        expected = set(params) | set(buffers)
        if strict and set(state) != expected:
            missing = sorted(expected - set(state))
            extra = sorted(set(state) - expected)
            raise KeyError(f"state mismatch: missing={missing} unexpected={extra}")
        for k, arr in state.items():
            target = params[k].data if k in params else buffers.get(k)
            if target is None:
                continue
            if target.shape != tuple(arr.shape):
                raise ValueError(f"{k}: shape {arr.shape} != {target.shape}")
            target[...] = arr

    def astype(self, dtype):
        """Convert every parameter and buffer in place (used by gradient checks)."""
        for p in self.named_parameters().values():
            p.data = p.data.astype(dtype)
            p.grad = None
        self._cast_buffers(dtype)
        return self

    def _cast_buffers(self, dtype):
        pass

    def describe(self):
        raise NotImplementedError

    def architecture(self):
        return "\n".join(self.describe()) + "\n"

    def probabilities(self, logits):
        """Apply the head's output activation to a logits array."""
        z = np.asarray(logits, dtype=np.float64)
        if self.output_activation == "sigmoid":
            return 1.0 / (1.0 + np.exp(-z))
        e = np.exp(z - z.max(axis=-1, keepdims=True))
        return e / e.sum(axis=-1, keepdims=True)
