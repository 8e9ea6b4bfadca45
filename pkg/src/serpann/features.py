"""Log-mel spectrograms for the CNNs and MFCC-grams for the Transformer."""

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .audio_io import PIPELINE_RATE, resample
from .errors import DegenerateFilterError, EmptyInputError, ShapeError

WINDOW_SIZE = 1024
HOP = 320
N_MELS = 64
F_MIN = 50.0
F_MAX = 14000.0
LOG_FLOOR = 1e-10
N_MFCC = 40


@dataclass
class Spectrogram:
    frames: np.ndarray  # (T, window_size // 2 + 1) power values
    hop: int
    window_size: int


@dataclass
class MelFilterbank:
    weights: np.ndarray  # (n_mels, window_size // 2 + 1)
    f_min: float
    f_max: float
    centers_hz: np.ndarray


def hann(n):
    """Periodic Hann window of length ``n``."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_count(length, hop=HOP):
    return length // hop + 1


def stft(w, window_size=WINDOW_SIZE, hop=HOP):
    """Power spectrogram of centered, reflect-padded, Hann-windowed frames."""
    x = np.asarray(w.samples, dtype=np.float64)
    if x.shape[0] < 1:
        raise EmptyInputError("cannot transform an empty waveform")
    pad = window_size // 2
    padded = np.pad(x, pad, mode="reflect")
    n_frames = frame_count(x.shape[0], hop)
    frames = np.lib.stride_tricks.sliding_window_view(padded, window_size)[::hop][:n_frames]
    spec = np.fft.rfft(frames * hann(window_size), axis=1)
    power = spec.real ** 2 + spec.imag ** 2
    return Spectrogram(power, hop, window_size)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def build_mel_filterbank(window_size=WINDOW_SIZE, sample_rate=PIPELINE_RATE,
                         n_mels=N_MELS, f_min=F_MIN, f_max=F_MAX):
    """Triangular filters with edges equally spaced on the HTK mel scale.

    Filter ``m`` rises linearly from edge ``m`` to edge ``m + 1`` and falls
    back to zero at edge ``m + 2``; it is sampled at the FFT bin frequencies
    and left unnormalised (peak height <= 1).
    """
    if not 0 <= f_min < f_max <= sample_rate / 2:
        raise ValueError(f"need 0 <= f_min < f_max <= {sample_rate / 2}, got {f_min}, {f_max}")
    n_bins = window_size // 2 + 1
    bin_hz = np.arange(n_bins) * sample_rate / window_size
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))

    nearest = np.round(edges * window_size / sample_rate).astype(np.int64)
    if np.any(np.diff(nearest) <= 0):
        raise DegenerateFilterError(
            f"{n_mels} mel filters between {f_min} and {f_max} Hz do not fit "
            f"distinct bins of a {window_size}-point FFT")

    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bin_hz[None, :] - lo) / (mid - lo)
    falling = (hi - bin_hz[None, :]) / (hi - mid)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    if np.any(weights.max(axis=1) <= 0):
        raise DegenerateFilterError("a mel filter covers no FFT bin")
    return MelFilterbank(weights, float(f_min), float(f_max), edges[1:-1])


def log_mel(s, fb):
    frames = s.frames if isinstance(s, Spectrogram) else np.asarray(s)
    if frames.shape[1] != fb.weights.shape[1]:
        raise ShapeError(f"spectrogram has {frames.shape[1]} bins, filterbank expects "
                         f"{fb.weights.shape[1]}")
    return np.log(np.maximum(frames @ fb.weights.T, LOG_FLOOR))


def mfcc(lm, n_coeffs=N_MFCC):
    """Orthonormal DCT-II along the mel axis, keeping the first ``n_coeffs``."""
    lm = np.asarray(lm, dtype=np.float64)
    if n_coeffs > lm.shape[1]:
        raise ValueError(f"n_coeffs={n_coeffs} exceeds {lm.shape[1]} mel bins")
    return scipy.fft.dct(lm, type=2, norm="ortho", axis=1)[:, :n_coeffs]


class FeatureExtractor:
    """Waveform -> (log-mel, MFCC) with the pipeline's fixed front end.

    The filterbank is built once and shared; instances are read-only after
    construction.
    """

    def __init__(self, sample_rate=PIPELINE_RATE, window_size=WINDOW_SIZE, hop=HOP,
                 n_mels=N_MELS, f_min=F_MIN, f_max=F_MAX, n_mfcc=N_MFCC):
        self.sample_rate = sample_rate
        self.window_size = window_size
        self.hop = hop
        self.n_mfcc = n_mfcc
        self.filterbank = build_mel_filterbank(window_size, sample_rate, n_mels, f_min, f_max)

    def log_mel(self, w):
        w = resample(w, self.sample_rate)
        return log_mel(stft(w, self.window_size, self.hop), self.filterbank)

    def mfcc(self, w):
        return mfcc(self.log_mel(w), self.n_mfcc)

    def __call__(self, w, kind="logmel"):
        if kind == "logmel":
            return self.log_mel(w)
        if kind == "mfcc":
            return self.mfcc(w)
        raise ValueError(f"unknown feature kind {kind!r}")
