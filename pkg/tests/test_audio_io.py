import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from serpann.audio_io import (Label, Manifest, SplitSpec, Waveform, read_manifest, read_wav,
                              resample, split_counts, stratified_split, write_manifest, write_wav)
from serpann.errors import FormatError, InsufficientClassError, LabelError, UnsupportedError


def raw_wav(path, frames, rate, tag=1, bits=16, channels=None):
    """Hand-assemble a RIFF file so the reader is not checked against our writer."""
    frames = np.asarray(frames)
    if channels is None:
        channels = 1 if frames.ndim == 1 else frames.shape[1]
    dtype = {16: "<i2", 32: "<f4" if tag == 3 else "<i4", 8: "u1"}[bits]
    payload = frames.astype(dtype).tobytes()
    block = channels * bits // 8
    fmt = struct.pack("<HHIIHH", tag, channels, rate, rate * block, block, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    path.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
    return path


def test_read_zero_pcm16(tmp_path):
    w = read_wav(raw_wav(tmp_path / "z.wav", np.zeros(16000, dtype=np.int16), 16000))
    assert w.sample_rate == 16000
    assert len(w) == 16000
    assert not np.any(w.samples)


def test_stereo_symmetric_downmix(tmp_path):
    frames = np.tile([[16384, -16384]], (100, 1))
    w = read_wav(raw_wav(tmp_path / "s.wav", frames, 8000))
    assert len(w) == 100
    assert not np.any(w.samples)


def test_pcm_scaling_extremes(tmp_path):
    w = read_wav(raw_wav(tmp_path / "x.wav", np.array([-32768, 32767, 1, 0], dtype=np.int16), 8000))
    assert w.samples[0] == -1.0
    assert w.samples[1] == 32767 / 32768
    assert w.samples[2] == 1 / 32768


def test_float32_wav(tmp_path):
    x = np.array([0.25, -0.5, 0.125], dtype=np.float32)
    w = read_wav(raw_wav(tmp_path / "f.wav", x, 22050, tag=3, bits=32))
    np.testing.assert_array_equal(w.samples, x.astype(np.float64))


def test_unsupported_encoding(tmp_path):
    with pytest.raises(UnsupportedError):
        read_wav(raw_wav(tmp_path / "u8.wav", np.zeros(10), 8000, bits=8))
    with pytest.raises(UnsupportedError):
        read_wav(raw_wav(tmp_path / "adpcm.wav", np.zeros(10, dtype=np.int16), 8000, tag=2))


def test_malformed_header(tmp_path):
    p = tmp_path / "bad.wav"
    p.write_bytes(b"RIFX0000WAVEjunk")
    with pytest.raises(FormatError):
        read_wav(p)
    p.write_bytes(b"RIFF\x04\x00\x00\x00WAVE")
    with pytest.raises(FormatError):
        read_wav(p)


@pytest.mark.parametrize("encoding", ["pcm16", "float32"])
def test_write_read_roundtrip(tmp_path, encoding):
    x = np.linspace(-1, 1 - 1 / 32768, 257)
    write_wav(tmp_path / "r.wav", Waveform(x, 16000), encoding)
    w = read_wav(tmp_path / "r.wav")
    np.testing.assert_allclose(w.samples, x, atol=1 / 32768 if encoding == "pcm16" else 1e-7)


# --- resampling ---------------------------------------------------------------

def test_resample_length_doubling():
    out = resample(Waveform(np.zeros(16000), 16000), 32000)
    assert len(out) == 32000 and out.sample_rate == 32000


def test_resample_identity_returns_same_buffer():
    x = np.random.default_rng(0).uniform(-1, 1, 1000)
    w = Waveform(x, 32000)
    out = resample(w, 32000)
    assert out.samples is w.samples


@pytest.mark.parametrize("n,src,dst", [(1000, 44100, 32000), (333, 16000, 32000),
                                       (7, 8000, 32000), (48000, 48000, 32000), (5, 32000, 22050)])
def test_resample_length_rounds_half_up(n, src, dst):
    out = resample(Waveform(np.zeros(n), src), dst)
    assert len(out) == int(np.floor(n * dst / src + 0.5))
    assert not np.any(out.samples)


def test_resample_sine_against_analytic():
    src, dst, f = 16000, 32000, 1000.0
    w = Waveform(np.sin(2 * np.pi * f * np.arange(src) / src), src)
    out = resample(w, dst)
    analytic = np.sin(2 * np.pi * f * np.arange(len(out)) / dst)
    # zero extension outside the clip disturbs one filter half-width at each end
    edge = 2 * 64 * dst // src
    assert np.max(np.abs(out.samples - analytic)[edge:-edge]) < 1e-3


def test_resample_downsampling_sine():
    src, dst, f = 44100, 32000, 3000.0
    w = Waveform(np.sin(2 * np.pi * f * np.arange(src) / src), src)
    out = resample(w, dst)
    analytic = np.sin(2 * np.pi * f * np.arange(len(out)) / dst)
    edge = 128
    assert np.max(np.abs(out.samples - analytic)[edge:-edge]) < 1e-3


# --- manifests & splitting ----------------------------------------------------

def balanced_manifest(per_class):
    entries = []
    for lab in Label:
        n = per_class[lab] if isinstance(per_class, dict) else per_class
        entries += [(f"{lab.wire_name}/{i:04d}.wav", lab) for i in range(n)]
    return Manifest(entries)


def test_label_wire_names():
    assert [lab.wire_name for lab in Label] == ["neutral", "non_neutral_male", "non_neutral_female"]
    assert Label.parse("Non_Neutral_Female") is Label.NON_NEUTRAL_FEMALE
    with pytest.raises(LabelError):
        Label.parse("happy")


def test_manifest_csv_roundtrip(tmp_path):
    m = balanced_manifest(4)
    write_manifest(m, tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "path,label"
    assert read_manifest(tmp_path / "m.csv").entries == m.entries


def test_manifest_rejects_bad_label_and_header(tmp_path):
    (tmp_path / "a.csv").write_text("path,label\nx.wav,angry\n")
    with pytest.raises(LabelError):
        read_manifest(tmp_path / "a.csv")
    (tmp_path / "b.csv").write_text("file,class\nx.wav,neutral\n")
    with pytest.raises(FormatError):
        read_manifest(tmp_path / "b.csv")


def test_manifest_paths_unique():
    with pytest.raises(FormatError):
        Manifest([("a.wav", Label.NEUTRAL), ("a.wav", Label.NEUTRAL)])


def test_split_625_matches_reported_sizes():
    m = balanced_manifest({Label.NEUTRAL: 209, Label.NON_NEUTRAL_MALE: 208,
                           Label.NON_NEUTRAL_FEMALE: 208})
    train, valid, test = stratified_split(m, SplitSpec(seed=1))
    assert (len(train), len(valid), len(test)) == (500, 63, 62)


def test_split_exact_division():
    train, valid, test = stratified_split(balanced_manifest(10), SplitSpec(seed=3))
    for part, n in ((train, 8), (valid, 1), (test, 1)):
        assert all(c == n for c in part.label_counts().values())


def test_split_deterministic_and_seed_sensitive():
    m = balanced_manifest(30)
    a = stratified_split(m, SplitSpec(seed=5))
    b = stratified_split(m, SplitSpec(seed=5))
    c = stratified_split(m, SplitSpec(seed=6))
    assert [p.entries for p in a] == [p.entries for p in b]
    assert [p.entries for p in a] != [p.entries for p in c]


def test_split_insufficient_class():
    m = balanced_manifest({Label.NEUTRAL: 5, Label.NON_NEUTRAL_MALE: 2, Label.NON_NEUTRAL_FEMALE: 5})
    with pytest.raises(InsufficientClassError):
        stratified_split(m, SplitSpec())


def test_split_spec_validation():
    with pytest.raises(ValueError):
        SplitSpec(0.8, 0.1, 0.2)
    with pytest.raises(ValueError):
        SplitSpec(1.0, 0.0, 0.0)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.integers(3, 120), min_size=3, max_size=3), st.integers(0, 2**64 - 1),
       st.sampled_from([(0.8, 0.1, 0.1), (0.6, 0.2, 0.2), (0.7, 0.15, 0.15), (0.5, 0.3, 0.2)]))
def test_split_partition_and_balance(sizes, seed, fractions):
    m = balanced_manifest(dict(zip(Label, sizes)))
    parts = stratified_split(m, SplitSpec(*fractions, seed=seed))
    all_entries = [e for p in parts for e in p.entries]
    assert sorted(all_entries) == sorted(m.entries)
    assert len(set(all_entries)) == len(all_entries)
    for part, f in zip(parts, fractions):
        for lab, count in part.label_counts().items():
            assert abs(count - f * sizes[lab]) < 1


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(3, 500), min_size=3, max_size=3))
def test_split_counts_hit_rounded_totals(sizes):
    counts = split_counts(sizes, (0.8, 0.1, 0.1))
    totals = [sum(row[s] for row in counts) for s in range(3)]
    assert sum(totals) == sum(sizes)
    for s, f in enumerate((0.8, 0.1, 0.1)):
        assert abs(totals[s] - f * sum(sizes)) < 1
