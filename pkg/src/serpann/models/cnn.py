"""CNN6 / CNN10 / CNN14 log-mel classifiers."""

import enum
from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, get_default_dtype
from ..errors import ShapeError
from .base import (AvgPool2d, BatchNorm2d, Conv2d, Dropout, GlobalAvgPool, Layer, Linear, Model,
                   ReLU)

N_MELS = 64


class CnnVariant(enum.Enum):
    CNN6 = "cnn6"
    CNN10 = "cnn10"
    CNN14 = "cnn14"


_LAYOUT = {
    # (kernel, channels per stage, convs per stage, fc hidden)
    CnnVariant.CNN6: (5, (64, 128, 256, 512), 1, 512),
    CnnVariant.CNN10: (3, (64, 128, 256, 512), 2, 512),
    CnnVariant.CNN14: (3, (64, 128, 256, 512, 1024, 2048), 2, 2048),
}


@dataclass(frozen=True)
class CnnSpec:
    variant: CnnVariant = CnnVariant.CNN10
    head_units: int = 3
    dropout: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "variant", CnnVariant(self.variant))

    @property
    def kernel(self):
        return _LAYOUT[self.variant][0]

    @property
    def block_channels(self):
        return _LAYOUT[self.variant][1]

    @property
    def convs_per_block(self):
        return _LAYOUT[self.variant][2]

    @property
    def fc_hidden(self):
        return _LAYOUT[self.variant][3]


class CnnModel(Model):
    def __init__(self, spec, layers):
        self.spec = spec
        self.layers = layers
        self.output_activation = "sigmoid" if spec.head_units == 527 else "softmax"

    @property
    def head(self):
        return self.layers[-1]

    def named_parameters(self):
        out = {}
        for layer in self.layers:
            out.update(layer.params())
        return out

    def named_buffers(self):
        out = {}
        for layer in self.layers:
            out.update(layer.buffers())
        return out

    def _cast_buffers(self, dtype):
        for layer in self.layers:
            if isinstance(layer, BatchNorm2d):
                st = layer.state
                st.running_mean = st.running_mean.astype(dtype)
                st.running_var = st.running_var.astype(dtype)

    def describe(self):
        lines = [f"input frames=n mel_bins={N_MELS}"]
        lines += [d for d in (layer.describe() for layer in self.layers) if d]
        lines.append(self.output_activation)
        return lines

    def forward(self, x, training=False, rng=None):
        """Logits for a ``(N, 1, frames, 64)`` batch; no output activation."""
        if x.ndim != 4 or x.shape[1] != 1 or x.shape[3] != N_MELS:
            raise ShapeError(f"CNN input must be (N, 1, frames, {N_MELS}), got {x.shape}")
        for layer in self.layers:
            x = layer(x, training, rng)
        return x

    def forward_batch(self, features, training=False, rng=None):
        return self.forward(collate_logmel(features, self.head.weight.dtype), training, rng)


def collate_logmel(features, dtype=None):
    """Zero-pad ``(frames, 64)`` matrices along time into one ``(N, 1, T, 64)`` tensor."""
    t_max = max(f.shape[0] for f in features)
    batch = np.zeros((len(features), 1, t_max, features[0].shape[1]))
    for i, f in enumerate(features):
        batch[i, 0, :f.shape[0]] = f
    return Tensor(batch, dtype=dtype or get_default_dtype())


def build_cnn(spec, rng):
    """Layer list: [conv -> bn -> relu] blocks, 2x2 average pooling between
    stages, global average pooling, FC(hidden) + ReLU, dropout, FC(head).

    Weights are drawn from ``rng`` in layer order.
    """
    dtype = get_default_dtype()
    layers: list[Layer] = []
    c_in = 1
    idx = 0
    channels = spec.block_channels
    for stage, c_out in enumerate(channels):
        for _ in range(spec.convs_per_block):
            idx += 1
            layers.append(Conv2d(f"conv{idx}", c_in, c_out, spec.kernel, rng, dtype))
            layers.append(BatchNorm2d(f"bn{idx}", c_out, dtype))
            layers.append(ReLU())
            c_in = c_out
        if stage < len(channels) - 1:
            layers.append(AvgPool2d())
    layers.append(GlobalAvgPool())
    layers.append(Linear("fc1", c_in, spec.fc_hidden, rng, dtype))
    layers.append(ReLU())
    if spec.dropout > 0:
        layers.append(Dropout(spec.dropout))
    layers.append(Linear("head", spec.fc_hidden, spec.head_units, rng, dtype))
    return CnnModel(spec, layers)


def forward_cnn(model, batch, training=False, rng=None):
    return model.forward(batch, training, rng)
