"""
SpecAugment on a log-mel matrix
===============================

Draw two time masks and two frequency masks and show which cells changed.
"""

import numpy as np

from serpann.augment import SpecAugmentParams, apply_masks, sample_masks
from serpann.features import FeatureExtractor
from serpann.prng import Prng
from serpann.synthetic import synthetic_waveforms

wave, label = synthetic_waveforms(1, seed=4, duration=2.0)[0]
x = FeatureExtractor()(wave, "logmel")
print("clip label:", label.wire_name, "features:", x.shape)

params = SpecAugmentParams()  # time masks up to 64 frames, freq masks up to 8 bins
masks = sample_masks(x.shape[0], x.shape[1], params, Prng(7))
for m in masks:
    print(f"  {m.axis.name.lower():4s} start={m.start:3d} length={m.length}")

y = apply_masks(x, masks)
changed = x != y
print("cells zeroed:", int(changed.sum()), "of", x.size)

# A coarse picture: one character per 4 frames x 4 bins, '#' where anything was masked.
rows = []
for i in range(0, x.shape[0], 4):
    rows.append("".join("#" if changed[i:i + 4, j:j + 4].any() else "." for j in range(0, 64, 4)))
print("\n".join(rows[:30]))

# Over many draws the mean time-mask length settles near 64 / 2.
lengths = [m.length for s in range(2000)
           for m in sample_masks(500, 64, params, Prng(s)) if m.axis.name == "TIME"]
print("mean time-mask length over 4000 masks:", round(float(np.mean(lengths)), 2))
