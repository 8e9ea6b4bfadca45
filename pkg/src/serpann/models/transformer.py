"""MFCC-gram Transformer encoder: input projection, sinusoidal positions,
three post-norm encoder layers, and either a clip classifier (mean over
tokens) or a per-frame reconstruction head for time-alteration pretraining.
"""

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..augment import Axis, SpecAugmentParams, sample_masks
from ..autodiff import Tensor, get_default_dtype
from ..errors import ConfigError, ShapeError
from .base import Linear, Model


@dataclass(frozen=True)
class TransformerSpec:
    d: int = 128
    n_heads: int = 0  # 0 -> 8 heads for d=512, 4 otherwise
    input_dim: int = 40
    head_units: int = 3
    n_layers: int = 3
    dropout: float = 0.2
    task: str = "classify"  # or "reconstruct"

    def __post_init__(self):
        if self.n_heads == 0:
            object.__setattr__(self, "n_heads", 8 if self.d == 512 else 4)
        if self.n_layers != 3:
            raise ConfigError("the encoder has exactly 3 layers")
        if self.d % self.n_heads:
            raise ConfigError(f"d={self.d} not divisible by {self.n_heads} heads")
        if self.d % 2:
            raise ConfigError("d must be even for sinusoidal positions")
        if self.task not in ("classify", "reconstruct"):
            raise ConfigError(f"unknown task {self.task!r}")

    @property
    def ffn_dim(self):
        return 4 * self.d


def sinusoidal_positional_encoding(n_tokens, d):
    """PE[t, 2i] = sin(t / 10000**(2i/d)), PE[t, 2i+1] = cos(same)."""
    if d % 2:
        raise ValueError("d must be even")
    t = np.arange(n_tokens, dtype=np.float64)[:, None]
    rates = 10000.0 ** (np.arange(0, d, 2, dtype=np.float64) / d)
    pe = np.empty((n_tokens, d))
    pe[:, 0::2] = np.sin(t / rates)
    pe[:, 1::2] = np.cos(t / rates)
    return Tensor(pe, dtype=get_default_dtype())


class LayerNorm:
    def __init__(self, name, d, dtype):
        self.name = name
        self.gamma = Tensor(np.ones(d), requires_grad=True, dtype=dtype)
        self.beta = Tensor(np.zeros(d), requires_grad=True, dtype=dtype)

    def params(self):
        return {f"{self.name}.gamma": self.gamma, f"{self.name}.beta": self.beta}

    def __call__(self, x):
        return ad.layer_norm(x, self.gamma, self.beta)


class EncoderLayer:
    def __init__(self, name, spec, rng, dtype):
        d = spec.d
        self.name = name
        self.n_heads = spec.n_heads
        self.dropout = spec.dropout
        self.wq = Linear(f"{name}.attn.wq", d, d, rng, dtype, bias=False)
        self.wk = Linear(f"{name}.attn.wk", d, d, rng, dtype, bias=False)
        self.wv = Linear(f"{name}.attn.wv", d, d, rng, dtype, bias=False)
        self.wo = Linear(f"{name}.attn.wo", d, d, rng, dtype, bias=False)
        self.norm1 = LayerNorm(f"{name}.norm1", d, dtype)
        self.ffn1 = Linear(f"{name}.ffn1", d, spec.ffn_dim, rng, dtype)
        self.ffn2 = Linear(f"{name}.ffn2", spec.ffn_dim, d, rng, dtype)
        self.norm2 = LayerNorm(f"{name}.norm2", d, dtype)

    def params(self):
        out = {}
        for part in (self.wq, self.wk, self.wv, self.wo, self.norm1, self.ffn1, self.ffn2,
                     self.norm2):
            out.update(part.params())
        return out

    def __call__(self, x, training, rng):
        attn = ad.multi_head_attention(x, self.n_heads, self.wq.weight, self.wk.weight,
                                       self.wv.weight, self.wo.weight)
        x = self.norm1(x + ad.dropout(attn, self.dropout, training, rng))
        ff = self.ffn2(ad.relu(self.ffn1(x)))
        return self.norm2(x + ad.dropout(ff, self.dropout, training, rng))

    def describe(self):
        d = self.wq.in_features
        return (f"encoder_layer d={d} heads={self.n_heads} ffn={self.ffn1.out_features} "
                f"norm=post")


class TransformerModel(Model):
    def __init__(self, spec, rng):
        dtype = get_default_dtype()
        self.spec = spec
        self.input_proj = Linear("input_proj", spec.input_dim, spec.d, rng, dtype)
        self.layers = [EncoderLayer(f"layers.{i}", spec, rng, dtype) for i in range(spec.n_layers)]
        out_units = spec.input_dim if spec.task == "reconstruct" else spec.head_units
        self.head = Linear("head", spec.d, out_units, rng, dtype)
        self.task = spec.task

    def named_parameters(self):
        out = dict(self.input_proj.params())
        for layer in self.layers:
            out.update(layer.params())
        out.update(self.head.params())
        return out

    def describe(self):
        s = self.spec
        lines = [f"input frames=n coeffs={s.input_dim}",
                 self.input_proj.describe(),
                 "positional_encoding kind=sinusoidal"]
        lines += [layer.describe() for layer in self.layers]
        if self.task == "classify":
            lines.append("meanpool axis=time")
        lines.append(self.head.describe())
        lines.append("softmax" if self.task == "classify" else "identity")
        return lines

    def encode(self, x, training=False, rng=None):
        """``(T, input_dim)`` tensor -> ``(T, d)`` encoder output."""
        if x.ndim != 2 or x.shape[1] != self.spec.input_dim:
            raise ShapeError(f"expected (T, {self.spec.input_dim}) input, got {x.shape}")
        h = self.input_proj(x) + sinusoidal_positional_encoding(x.shape[0], self.spec.d)
        for layer in self.layers:
            h = layer(h, training, rng)
        return h

    def forward(self, x, training=False, rng=None):
        """Class logits ``(head_units,)`` or per-frame reconstruction ``(T, input_dim)``."""
        h = self.encode(x, training, rng)
        if self.task == "classify":
            return self.head(ad.mean(h, axis=0))
        return self.head(h)

    def forward_batch(self, features, training=False, rng=None):
        """Clips run one at a time, so padding never reaches attention or pooling."""
        dtype = self.head.weight.dtype
        return ad.stack([self.forward(Tensor(f, dtype=dtype), training, rng) for f in features])


def build_transformer(spec, rng):
    return TransformerModel(spec, rng)


def replace_head(model, new_units, rng):
    """Swap the final linear layer for a fresh one with ``new_units`` outputs.

    Every other weight is kept as-is.  A reconstruction-pretrained
    Transformer becomes a clip classifier.
    """
    dtype = model.head.weight.dtype.type
    new = Linear("head", model.head.in_features, new_units, rng, dtype)
    if isinstance(model, TransformerModel):
        model.head = new
        model.task = "classify"
    else:
        model.layers[-1] = new
        model.output_activation = "sigmoid" if new_units == 527 else "softmax"
    return model


def time_alteration_masks(batch, params, rng):
    """Boolean frame masks, one ``(T,)`` array per clip.

    Spans are drawn with SpecAugment's time-mask sampler.  If no frame of
    the whole batch gets masked the draw is repeated once.
    """
    def draw():
        out = []
        for x in batch:
            m = np.zeros(x.shape[0], dtype=bool)
            for spec in sample_masks(x.shape[0], x.shape[1], params, rng):
                if spec.axis is Axis.TIME:
                    m[spec.start:spec.start + spec.length] = True
            out.append(m)
        return out

    masks = draw()
    if not any(m.any() for m in masks):
        masks = draw()
    return masks


def time_alteration_loss(model, batch, masks, training=True, rng=None):
    """Mean absolute reconstruction error over masked frames (0 if none)."""
    if model.task != "reconstruct":
        raise ConfigError("time-alteration pretraining needs a reconstruction head")
    dtype = model.head.weight.dtype
    preds, targets, cells = [], [], []
    for x, m in zip(batch, masks):
        corrupted = np.where(m[:, None], 0.0, x)
        preds.append(ad.reshape(model.forward(Tensor(corrupted, dtype=dtype), training, rng), (-1,)))
        targets.append(np.asarray(x, dtype=np.float64).reshape(-1))
        cells.append(np.repeat(m, x.shape[1]))
    pred = ad.concat(preds)
    return ad.masked_l1(pred, np.concatenate(targets), np.concatenate(cells))


def time_alteration_pretrain_step(model, batch, mask_params, rng, optimizer):
    """One optimisation step of masked-frame reconstruction; returns the loss."""
    params = mask_params or SpecAugmentParams(n_freq_masks=0)
    params = SpecAugmentParams(params.time_mask_max, 0, params.n_time_masks, 0)
    masks = time_alteration_masks(batch, params, rng)
    model.zero_grad()
    loss = time_alteration_loss(model, batch, masks, training=True, rng=rng)
    loss.backward()
    optimizer.step(model.named_parameters())
    return loss.item()
