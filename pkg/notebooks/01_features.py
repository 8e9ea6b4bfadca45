"""
From waveform to log-mel and MFCC-gram
======================================

Walk one synthetic clip through the feature pipeline and look at the
intermediate shapes and a few numbers along the way.
"""

import numpy as np

from serpann.audio_io import Label, resample
from serpann.features import FeatureExtractor, build_mel_filterbank, stft
from serpann.prng import Prng
from serpann.synthetic import sinusoid_clip

# A one second clip of the "non-neutral female" class recorded at 16 kHz.
clip = sinusoid_clip(Label.NON_NEUTRAL_FEMALE, Prng(0), duration=1.0, sample_rate=16000)
print("input:", clip.samples.shape, "samples at", clip.sample_rate, "Hz")

# Everything runs at 32 kHz, so the clip is upsampled first.
clip32 = resample(clip, 32000)
print("resampled:", clip32.samples.shape)

# 1024-sample Hann window, hop 320 -> floor(L / 320) + 1 frames of 513 bins.
spec = stft(clip32)
print("power spectrogram:", spec.frames.shape)

# The strongest bins sit near the class partials (4.2, 6.1 and 7.9 kHz, detuned a little).
mean_power = spec.frames.mean(axis=0)
top = np.sort(np.argsort(mean_power)[-3:])
print("loudest bins (Hz):", np.round(top * 32000 / 1024))

# 64 triangular mel filters between 50 Hz and 14 kHz.
fb = build_mel_filterbank()
print("filterbank:", fb.weights.shape, "first centres (Hz):", np.round(fb.centers_hz[:4], 1))

ex = FeatureExtractor()
logmel = ex(clip, "logmel")
mfccs = ex(clip, "mfcc")
print("log-mel:", logmel.shape, "range", logmel.min().round(2), "..", logmel.max().round(2))
print("MFCC-gram:", mfccs.shape)

# Silence hits the log floor: ln(1e-10) is about -23.03.
silence = ex(clip.__class__(np.zeros(16000), 16000), "logmel")
print("silence log-mel value:", silence[0, 0])
