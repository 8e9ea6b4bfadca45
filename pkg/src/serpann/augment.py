"""SpecAugment time and frequency masking on frame-major feature matrices.

Matrices are ``(frames, channels)``: axis 0 is time, axis 1 is the mel bin
(or MFCC coefficient) axis.  Masked cells are set to 0.0 on the values the
network sees, i.e. after the logarithm.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .errors import BoundsError


class Axis(enum.Enum):
    TIME = 0
    FREQ = 1


@dataclass(frozen=True)
class SpecAugmentParams:
    time_mask_max: int = 64
    freq_mask_max: int = 8
    n_time_masks: int = 2
    n_freq_masks: int = 2

    def __post_init__(self):
        for name in ("time_mask_max", "freq_mask_max", "n_time_masks", "n_freq_masks"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class MaskSpec:
    axis: Axis
    start: int
    length: int


def sample_masks(n_frames, n_bins, params, rng):
    """Draw mask rectangles for a ``n_frames x n_bins`` matrix.

    PRNG consumption order is fixed: all time masks, then all frequency
    masks, and for each mask its length before its start.  Lengths are
    uniform on ``0..min(max, extent)`` inclusive, starts uniform on
    ``0..extent - length``.
    """
    if n_frames < 1 or n_bins < 1:
        raise ValueError("feature matrix must have at least one frame and one bin")
    masks = []
    plan = ((Axis.TIME, n_frames, params.time_mask_max, params.n_time_masks),
            (Axis.FREQ, n_bins, params.freq_mask_max, params.n_freq_masks))
    for axis, extent, max_len, count in plan:
        for _ in range(count):
            length = rng.randint(0, min(max_len, extent))
            start = rng.randint(0, extent - length)
            masks.append(MaskSpec(axis, start, length))
    return masks


def apply_masks(x, masks):
    """Return a copy of ``x`` with every mask rectangle zeroed."""
    out = np.array(x, copy=True)
    for m in masks:
        extent = out.shape[m.axis.value]
        if m.start < 0 or m.length < 0 or m.start + m.length > extent:
            raise BoundsError(f"{m} out of bounds for axis extent {extent}")
        if m.axis is Axis.TIME:
            out[m.start:m.start + m.length, :] = 0.0
        else:
            out[:, m.start:m.start + m.length] = 0.0
    return out


def spec_augment(x, params, rng):
    masks = sample_masks(x.shape[0], x.shape[1], params, rng)
    return apply_masks(x, masks)
