"""WAV reading, band-limited resampling and labeled dataset manifests."""

import csv
import enum
import itertools
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, InsufficientClassError, LabelError, UnsupportedError
from .prng import Prng

PIPELINE_RATE = 32000

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_IEEE_FLOAT = 0x0003
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


class Label(enum.IntEnum):
    """The three classes; the integer value is the row/column index everywhere."""

    NEUTRAL = 0
    NON_NEUTRAL_MALE = 1
    NON_NEUTRAL_FEMALE = 2

    @property
    def wire_name(self):
        return self.name.lower()

    @classmethod
    def parse(cls, text):
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise LabelError(f"unknown label {text!r}; expected one of "
                             f"{[lab.wire_name for lab in cls]}") from None


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("waveform samples must be one-dimensional")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self):
        return len(self) / self.sample_rate


def read_wav(path):
    """Read a PCM-16 or float-32 RIFF/WAVE file as a mono waveform.

    Multi-channel audio is averaged across channels.  Integer samples are
    divided by 32768 so that -32768 maps to exactly -1.0.
    """
    data = Path(path).read_bytes()
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise FormatError(f"{path}: truncated {chunk_id!r} chunk")
        if chunk_id == b"fmt ":
            if size < 16:
                raise FormatError(f"{path}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
            if fmt[0] == _WAVE_FORMAT_EXTENSIBLE:
                if size < 40:
                    raise FormatError(f"{path}: extensible fmt chunk too short")
                (sub_format,) = struct.unpack_from("<H", body, 24)
                fmt = (sub_format,) + fmt[1:]
        elif chunk_id == b"data":
            payload = body
        pos += 8 + size + (size & 1)

    if fmt is None or payload is None:
        raise FormatError(f"{path}: missing fmt or data chunk")
    tag, channels, rate, _, block_align, bits = fmt
    if channels < 1 or rate < 1:
        raise FormatError(f"{path}: invalid channel count or sample rate")

    if tag == _WAVE_FORMAT_PCM and bits == 16:
        frames = np.frombuffer(payload, dtype="<i2", count=len(payload) // 2)
        frames = frames.astype(np.float64) / 32768.0
    elif tag == _WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        frames = np.frombuffer(payload, dtype="<f4", count=len(payload) // 4)
        frames = frames.astype(np.float64)
    else:
        raise UnsupportedError(f"{path}: unsupported encoding (format tag {tag:#x}, {bits} bits)")

    n = frames.shape[0] // channels
    if n == 0:
        raise FormatError(f"{path}: no audio frames")
    frames = frames[:n * channels].reshape(n, channels)
    mono = frames[:, 0] if channels == 1 else frames.mean(axis=1)
    if not np.all(np.isfinite(mono)):
        raise FormatError(f"{path}: non-finite samples")
    return Waveform(mono, rate)


def write_wav(path, waveform, encoding="pcm16"):
    """Write a mono waveform as PCM-16 (clipped) or IEEE float-32."""
    x = np.asarray(waveform.samples, dtype=np.float64)
    if encoding == "pcm16":
        ints = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
        tag, bits, payload = _WAVE_FORMAT_PCM, 16, ints.tobytes()
    elif encoding == "float32":
        tag, bits, payload = _WAVE_FORMAT_IEEE_FLOAT, 32, x.astype("<f4").tobytes()
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    block = bits // 8
    header = struct.pack("<4sI4s4sIHHIIHH4sI",
                         b"RIFF", 36 + len(payload), b"WAVE",
                         b"fmt ", 16, tag, 1, waveform.sample_rate,
                         waveform.sample_rate * block, block, bits,
                         b"data", len(payload))
    Path(path).write_bytes(header + payload)


# --- resampling ----------------------------------------------------------

KAISER_BETA = 8.6
ZERO_CROSSINGS = 64


def _resampler_taps(up, down):
    """Polyphase table of a Kaiser-windowed sinc, shape ``(up, 2 * half + 1)``.

    Row ``p`` holds the taps for output samples whose position falls
    ``p / up`` input samples past an input sample.
    """
    cutoff = min(1.0, up / down)
    half = int(math.ceil(ZERO_CROSSINGS / cutoff))
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    phase = np.arange(up, dtype=np.float64)[:, None] / up
    # distance from output instant to each input tap, in input samples
    dist = phase - offsets[None, :]
    arg = np.clip(dist / (half + 1.0), -1.0, 1.0)
    window = np.i0(KAISER_BETA * np.sqrt(1.0 - arg ** 2)) / np.i0(KAISER_BETA)
    return cutoff * np.sinc(cutoff * dist) * window, half


def resample(w, target_rate, chunk=8192):
    """Resample to ``target_rate`` with a Kaiser-windowed sinc interpolator.

    Output length is ``round(len(w) * target_rate / w.sample_rate)``.  Equal
    rates return the same sample buffer untouched.  The signal is treated as
    zero outside its support.
    """
    target_rate = int(target_rate)
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == w.sample_rate:
        return Waveform(w.samples, w.sample_rate)

    g = math.gcd(target_rate, w.sample_rate)
    up, down = target_rate // g, w.sample_rate // g
    n_in = len(w)
    n_out = (2 * n_in * target_rate + w.sample_rate) // (2 * w.sample_rate)
    taps, half = _resampler_taps(up, down)
    width = taps.shape[1]

    padded = np.concatenate([np.zeros(half), w.samples, np.zeros(half + 1)])
    windows = np.lib.stride_tricks.sliding_window_view(padded, width)
    out = np.empty(n_out, dtype=np.float64)
    for start in range(0, n_out, chunk):
        idx = np.arange(start, min(start + chunk, n_out), dtype=np.int64)
        pos = idx * down
        base = pos // up
        phase = pos - base * up
        # tap j of window `base` sits on input sample base - half + j
        out[idx] = np.einsum("ij,ij->i", windows[base], taps[phase])
    return Waveform(out, target_rate)


# --- manifests -----------------------------------------------------------

@dataclass
class Manifest:
    entries: list = field(default_factory=list)

    def __post_init__(self):
        self.entries = [(str(p), Label(lab)) for p, lab in self.entries]
        paths = [p for p, _ in self.entries]
        if len(set(paths)) != len(paths):
            raise FormatError("manifest paths must be unique")

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def label_counts(self):
        counts = {lab: 0 for lab in Label}
        for _, lab in self.entries:
            counts[lab] += 1
        return counts


def read_manifest(path):
    """Load a ``path,label`` CSV.  Relative paths are kept as written."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["path", "label"]:
            raise FormatError(f"{path}: expected header 'path,label'")
        entries = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise FormatError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            entries.append((row[0], Label.parse(row[1])))
    return Manifest(entries)


def write_manifest(manifest, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "label"])
        for p, lab in manifest.entries:
            writer.writerow([p, lab.wire_name])


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    valid_fraction: float = 0.1
    test_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        fr = self.fractions
        if min(fr) <= 0 or abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must be positive and sum to 1, got {fr}")

    @property
    def fractions(self):
        return (self.train_fraction, self.valid_fraction, self.test_fraction)


def _largest_remainder(total, fractions, priority):
    ideal = [total * f for f in fractions]
    counts = [int(math.floor(q)) for q in ideal]
    order = sorted(range(len(fractions)),
                   key=lambda s: (-(ideal[s] - counts[s]), priority.index(s)))
    for s in order[:total - sum(counts)]:
        counts[s] += 1
    return counts


def split_counts(class_sizes, fractions):
    """Per-class (train, valid, test) counts.

    Each class starts from the floor of its ideal counts; its leftover files
    go one each to distinct splits in which its ideal count is fractional,
    which keeps every count strictly within one file of
    ``fraction * class_size``.  Among those assignments we take the one whose
    split totals are closest to largest-remainder rounding of the global
    ideal sizes (ties go valid, then test, then train), then the one covering
    the largest fractional parts.
    """
    priority = [1, 2, 0]
    totals = _largest_remainder(sum(class_sizes), fractions, priority)
    ideal = [[n * f for f in fractions] for n in class_sizes]
    base = [[int(math.floor(q)) for q in row] for row in ideal]
    frac = [[q - b for q, b in zip(qs, bs)] for qs, bs in zip(ideal, base)]

    options = []
    for c, n in enumerate(class_sizes):
        extra = n - sum(base[c])
        eligible = [s for s in priority if frac[c][s] > 1e-12]
        options.append(list(itertools.combinations(eligible, extra)))

    best, best_key = None, None
    for choice in itertools.product(*options):
        counts = [list(row) for row in base]
        for c, splits in enumerate(choice):
            for s in splits:
                counts[c][s] += 1
        got = [sum(row[s] for row in counts) for s in range(3)]
        key = (sum(abs(g - t) for g, t in zip(got, totals)),
               -sum(frac[c][s] for c, splits in enumerate(choice) for s in splits))
        if best_key is None or key < best_key:
            best, best_key = counts, key
    return best


def stratified_split(manifest, spec):
    """Class-balanced train/valid/test partition of a manifest.

    Entries of each class (in manifest order, classes in label order) are
    Fisher-Yates shuffled with one :class:`Prng` seeded by ``spec.seed`` and
    cut into consecutive train/valid/test runs.  Each output keeps the
    original manifest order.
    """
    by_class = {lab: [] for lab in Label}
    for i, (_, lab) in enumerate(manifest.entries):
        by_class[lab].append(i)
    for lab, idx in by_class.items():
        if len(idx) < 3:
            raise InsufficientClassError(
                f"class {lab.wire_name} has {len(idx)} entries; at least 3 required")

    counts = split_counts([len(by_class[lab]) for lab in Label], spec.fractions)
    rng = Prng(spec.seed)
    parts = ([], [], [])
    for lab in Label:
        idx = rng.shuffle(list(by_class[lab]))
        n_train, n_valid, _ = counts[lab]
        parts[0].extend(idx[:n_train])
        parts[1].extend(idx[n_train:n_train + n_valid])
        parts[2].extend(idx[n_train + n_valid:])
    return tuple(Manifest([manifest.entries[i] for i in sorted(p)]) for p in parts)
