"""CNN6/CNN10/CNN14 and the MFCC-gram Transformer encoder."""

from importlib import resources

from .base import Model
from .cnn import CnnModel, CnnSpec, CnnVariant, build_cnn, collate_logmel, forward_cnn
from .transformer import (TransformerModel, TransformerSpec, build_transformer, replace_head,
                          sinusoidal_positional_encoding, time_alteration_loss,
                          time_alteration_masks, time_alteration_pretrain_step)


def golden_architecture(variant):
    """Reference layer listing for ``cnn6``/``cnn10``/``cnn14`` (527-unit head)."""
    return resources.files(__package__).joinpath("golden", f"{variant}.txt").read_text("utf-8")


__all__ = [
    "Model", "CnnModel", "CnnSpec", "CnnVariant", "build_cnn", "collate_logmel", "forward_cnn",
    "TransformerModel", "TransformerSpec", "build_transformer", "replace_head",
    "sinusoidal_positional_encoding", "time_alteration_loss", "time_alteration_masks",
    "time_alteration_pretrain_step", "golden_architecture",
]
