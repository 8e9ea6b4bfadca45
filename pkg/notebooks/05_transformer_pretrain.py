"""
Masked-frame reconstruction, then a classifier head
===================================================

Pretrain a small MFCC-gram Transformer to fill in masked frame spans, swap
the reconstruction head for a 3-way classifier, and finetune.
"""

import numpy as np

from serpann.augment import SpecAugmentParams
from serpann.features import FeatureExtractor
from serpann.models import TransformerSpec, build_transformer, replace_head
from serpann.models import time_alteration_pretrain_step
from serpann.prng import Prng
from serpann.synthetic import synthetic_dataset
from serpann.training import (Adam, TrainConfig, evaluate, make_optimizer, train_epoch)

ex = FeatureExtractor()
clips = [f for f, _ in synthetic_dataset(32, ex, "mfcc", seed=3)]

model = build_transformer(TransformerSpec(d=128, task="reconstruct", dropout=0.0), Prng(0))
opt = Adam(lr=1e-3)
rng = Prng(1)
spans = SpecAugmentParams(time_mask_max=16, freq_mask_max=0, n_time_masks=2, n_freq_masks=0)
losses = []
for step in range(200):
    batch = [clips[(8 * step + i) % 32] for i in range(8)]
    losses.append(time_alteration_pretrain_step(model, batch, spans, rng, opt))
    if step % 25 == 0:
        print(f"step {step:3d} masked L1 {losses[-1]:.3f}")
print(f"first loss {losses[0]:.3f}, mean of last 10 {np.mean(losses[-10:]):.3f}")

# Keep the encoder, replace the head, and finetune on labelled clips.  With
# only 16 clips the warmup schedule would spend every epoch in its first few
# dozen steps, so a constant rate is used here.
replace_head(model, 3, Prng(2))
labelled = synthetic_dataset(16, ex, "mfcc", seed=100)
cfg = TrainConfig(model="transformer128", batch_size=4, schedule="constant", augment=None)
opt = make_optimizer(cfg)
for epoch in range(1, 41):
    train_epoch(model, labelled, cfg, rng, opt)
    f1, _ = evaluate(model, labelled)
    if epoch % 5 == 0 or f1 >= 0.9:
        print(f"finetune epoch {epoch:2d} train macro-F1 {f1:.3f}")
    if f1 >= 0.9:
        break
