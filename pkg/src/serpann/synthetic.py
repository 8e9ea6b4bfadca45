"""Class-distinct sinusoid-mixture clips for tests, demos and smoke runs.

Each class owns a band of partial frequencies; clips draw random phases,
amplitudes and a little white noise from a :class:`Prng`.
"""

from pathlib import Path

import numpy as np

from .audio_io import Label, Manifest, Waveform, write_manifest, write_wav
from .prng import Prng

CLASS_BANDS = {
    Label.NEUTRAL: (220.0, 440.0, 660.0),
    Label.NON_NEUTRAL_MALE: (1500.0, 2300.0),
    Label.NON_NEUTRAL_FEMALE: (4200.0, 6100.0, 7900.0),
}


def sinusoid_clip(label, rng, duration=0.5, sample_rate=32000, noise=0.01):
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    x = np.zeros(n)
    for f in CLASS_BANDS[Label(label)]:
        detune = 1.0 + 0.05 * (rng.random() - 0.5)
        amp = 0.1 + 0.2 * rng.random()
        x += amp * np.sin(2 * np.pi * f * detune * t + 2 * np.pi * rng.random())
    x += noise * (rng.uniform(-1.0, 1.0, n))
    return Waveform(np.clip(x, -1.0, 1.0), sample_rate)


def balanced_labels(n):
    return [Label(i % 3) for i in range(n)]


def synthetic_waveforms(n, seed=0, duration=0.5, sample_rate=32000):
    """``n`` (waveform, label) pairs cycling through the three labels."""
    rng = Prng(seed)
    return [(sinusoid_clip(lab, rng, duration, sample_rate), lab) for lab in balanced_labels(n)]


def synthetic_dataset(n, extractor, kind="logmel", seed=0, duration=0.5):
    """``n`` (features, label) pairs ready for training."""
    return [(extractor(w, kind), lab)
            for w, lab in synthetic_waveforms(n, seed, duration, extractor.sample_rate)]


def write_synthetic_corpus(directory, n, seed=0, duration=0.5, sample_rate=16000):
    """Write ``n`` WAV files plus ``manifest.csv`` (relative paths) into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (w, lab) in enumerate(synthetic_waveforms(n, seed, duration, sample_rate)):
        name = f"clip_{i:04d}_{lab.wire_name}.wav"
        write_wav(directory / name, w)
        entries.append((name, lab))
    manifest = Manifest(entries)
    write_manifest(manifest, directory / "manifest.csv")
    return directory / "manifest.csv"
