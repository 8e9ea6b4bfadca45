"""Acceptance gate: one test per numbered criterion.

Each test carries a ``criterion`` marker; the terminal summary prints one
PASS/FAIL line per criterion (see conftest.py).
"""

import math
import os
import subprocess
import sys
import time
from fractions import Fraction

import numpy as np
import pytest

from gradutil import check_gradients
from serpann import autodiff as ad
from serpann.audio_io import Label, Manifest, SplitSpec, Waveform, stratified_split
from serpann.augment import Axis, SpecAugmentParams, apply_masks, sample_masks
from serpann.autodiff import Tensor
from serpann.checkpoint import load_checkpoint, save_checkpoint
from serpann.features import Spectrogram, build_mel_filterbank, hann, log_mel, mfcc, stft
from serpann.metrics import ConfusionMatrix, f1_from_confusion
from serpann.models import (CnnSpec, TransformerSpec, build_cnn, build_transformer,
                            golden_architecture, time_alteration_pretrain_step)
from serpann.prng import Prng
from serpann.synthetic import synthetic_dataset, write_synthetic_corpus
from serpann.training import (Adam, TrainConfig, build_model, evaluate, make_optimizer,
                              train_epoch, warmup_lr)


def criterion(number, title):
    return pytest.mark.criterion(number, title)


# 1 ---------------------------------------------------------------------------------

@criterion(1, "macro-F1 of the submitted CNN10 confusion matrix")
def test_c01_metrics_oracle():
    start = time.perf_counter()
    counts = [[244, 2, 5], [14, 8, 2], [6, 1, 26]]
    report = f1_from_confusion(ConfusionMatrix(counts))
    # exact per-class oracle: F1_k = 2 tp / (row_k + col_k)
    oracle = [Fraction(2 * counts[k][k], sum(counts[k]) + sum(r[k] for r in counts))
              for k in range(3)]
    assert abs(report.macro_f1 - 0.73) <= 0.005
    for got, exact, ref in zip(report.per_class_f1, oracle, (0.947, 0.457, 0.788)):
        assert abs(got - ref) <= 0.005
        assert abs(got - float(exact)) < 1e-12
    assert time.perf_counter() - start < 1.0


# 2 ---------------------------------------------------------------------------------

@criterion(2, "625-entry balanced manifest splits 500/63/62")
def test_c02_split_reproduction():
    start = time.perf_counter()
    manifest = Manifest([(f"clip{i:03d}.wav", Label(i % 3)) for i in range(625)])
    spec = SplitSpec(0.8, 0.1, 0.1, seed=0)
    parts = stratified_split(manifest, spec)
    assert [len(p) for p in parts] == [500, 63, 62]
    class_sizes = manifest.label_counts()
    for part, frac in zip(parts, (0.8, 0.1, 0.1)):
        for lab, n in part.label_counts().items():
            assert abs(n - frac * class_sizes[lab]) <= 1.0
    all_paths = sorted(p for part in parts for p, _ in part)
    assert all_paths == sorted(p for p, _ in manifest)
    assert time.perf_counter() - start < 1.0


# 3 ---------------------------------------------------------------------------------

def _mirror_frames(x, window, hop):
    pad = window // 2
    n = len(x)
    period = 2 * (n - 1)
    frames = []
    for t in range(n // hop + 1):
        idx = []
        for j in range(window):
            i = t * hop + j - pad
            if period:
                i = abs(i) % period
                i = i if i < n else period - i
            else:
                i = 0
            idx.append(i)
        frames.append(x[idx])
    return np.array(frames)


@criterion(3, "STFT / mel / MFCC match brute-force oracles; frame count formula")
def test_c03_dsp_oracles():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    n_fft, hop = 1024, 320
    k = np.arange(n_fft // 2 + 1)[:, None]
    basis = np.exp(-2j * np.pi * k * np.arange(n_fft)[None, :] / n_fft)  # O(N^2) DFT
    win = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n_fft) / n_fft)
    assert np.allclose(hann(n_fft), win)
    worst = 0.0
    for _ in range(100):
        x = rng.standard_normal(int(rng.integers(600, 3000))) * rng.uniform(0.01, 1.0)
        got = stft(Waveform(x, 32000), n_fft, hop).frames
        frames = _mirror_frames(x, n_fft, hop) * win
        oracle = np.abs(frames @ basis.T) ** 2
        assert got.shape == oracle.shape
        rel = np.max(np.abs(got - oracle), axis=1) / np.max(oracle, axis=1)
        worst = max(worst, float(rel.max()))
    assert worst < 1e-4, worst

    fb = build_mel_filterbank()
    spec = rng.exponential(1.0, (20, 513))
    lm = log_mel(Spectrogram(spec, hop, n_fft), fb)
    brute = np.array([[math.log(max(sum(fb.weights[m, b] * spec[t, b] for b in range(513)), 1e-10))
                       for m in range(64)] for t in range(20)])
    assert np.max(np.abs(lm - brute)) < 1e-6

    cc = mfcc(lm, 40)
    n = 64
    dct = np.array([[math.sqrt((1 if q == 0 else 2) / n) * math.cos(math.pi * q * (2 * i + 1) / (2 * n))
                     for i in range(n)] for q in range(40)])
    assert np.max(np.abs(cc - lm @ dct.T)) < 1e-6

    lengths = sorted(set(rng.integers(1, 10_001, 400).tolist())
                     | {1, 2, 319, 320, 321, 639, 640, 9999, 10_000})
    for length in lengths:
        frames = stft(Waveform(rng.standard_normal(length), 32000), n_fft, hop).frames
        assert frames.shape[0] == length // 320 + 1
    assert time.perf_counter() - start < 120


# 4 ---------------------------------------------------------------------------------

@criterion(4, "SpecAugment bounds, rectangle oracle and mean time-mask length")
def test_c04_specaugment_properties():
    start = time.perf_counter()
    params = SpecAugmentParams()
    frames, bins = 500, 64
    base = np.random.default_rng(9).standard_normal((frames, bins)) + 10.0  # no zeros
    time_lengths = []
    for seed in range(10_000):
        masks = sample_masks(frames, bins, params, Prng(seed))
        assert [m.axis for m in masks] == [Axis.TIME, Axis.TIME, Axis.FREQ, Axis.FREQ]
        covered = np.zeros((frames, bins), dtype=bool)
        for m in masks:
            extent, cap = (frames, 64) if m.axis is Axis.TIME else (bins, 8)
            assert 0 <= m.length <= cap
            assert 0 <= m.start <= extent - m.length
            if m.axis is Axis.TIME:
                covered[m.start:m.start + m.length, :] = True
                time_lengths.append(m.length)
            else:
                covered[:, m.start:m.start + m.length] = True
        out = apply_masks(base, masks)
        assert np.array_equal(out == 0.0, covered)
        assert out[~covered].tobytes() == base[~covered].tobytes()
    assert abs(np.mean(time_lengths) - 32.0) <= 1.0
    assert time.perf_counter() - start < 60


# 5 ---------------------------------------------------------------------------------

def _leaf(rng, *shape, lo=-1.0, hi=1.0):
    return Tensor(rng.uniform(lo, hi, shape), requires_grad=True, dtype=np.float64)


def _probe(out):
    w = np.random.default_rng(77).uniform(-1, 1, out.shape)
    return ad.sum(ad.mul(out, Tensor(w, dtype=np.float64)))


def _op_cases():
    r = np.random.default_rng(5)
    a, b = _leaf(r, 3, 4), _leaf(r, 4)
    pos = _leaf(r, 3, 4, lo=0.5, hi=2.0)
    kinked = Tensor(np.where(r.random((4, 5)) < 0.5, -1, 1) * r.uniform(0.1, 2, (4, 5)),
                    requires_grad=True, dtype=np.float64)
    m1, m2 = _leaf(r, 2, 3, 4), _leaf(r, 4, 5)
    s1, s2 = _leaf(r, 2, 3), _leaf(r, 2, 3)
    x4, w4, b4 = _leaf(r, 2, 2, 5, 6), _leaf(r, 3, 2, 3, 3), _leaf(r, 3)
    g2, be2 = _leaf(r, 2, lo=0.5, hi=1.5), _leaf(r, 2)
    state = ad.BatchNormState(2, np.float64)
    odd = _leaf(r, 1, 2, 5, 3)
    t3, lg, lb = _leaf(r, 4, 8), _leaf(r, 8, lo=0.5, hi=1.5), _leaf(r, 8)
    att = {n: _leaf(r, 8, 8, lo=-0.5, hi=0.5) for n in ("q", "k", "v", "o")}
    lin_w, lin_b = _leaf(r, 3, 8), _leaf(r, 3)
    logits = _leaf(r, 4, 3, lo=-2, hi=2)
    target = kinked.data + 0.3
    mask = r.random((4, 5)) < 0.6
    return {
        "add": (lambda: _probe(ad.add(a, b)), {"a": a, "b": b}),
        "sub": (lambda: _probe(ad.sub(a, b)), {"a": a, "b": b}),
        "mul": (lambda: _probe(ad.mul(a, pos)), {"a": a, "pos": pos}),
        "div": (lambda: _probe(ad.div(a, pos)), {"a": a, "pos": pos}),
        "matmul": (lambda: _probe(ad.matmul(m1, m2)), {"m1": m1, "m2": m2}),
        "sum": (lambda: _probe(ad.sum(m1, axis=2)), {"m1": m1}),
        "mean": (lambda: _probe(ad.mean(m1, axis=(0, 1))), {"m1": m1}),
        "reshape": (lambda: _probe(ad.reshape(m1, (6, 4))), {"m1": m1}),
        "transpose": (lambda: _probe(ad.transpose(m1, (1, 2, 0))), {"m1": m1}),
        "stack": (lambda: _probe(ad.stack([s1, s2], axis=0)), {"s1": s1, "s2": s2}),
        "concat": (lambda: _probe(ad.concat([s1, s2], axis=1)), {"s1": s1, "s2": s2}),
        "relu": (lambda: _probe(ad.relu(kinked)), {"x": kinked}),
        "sigmoid": (lambda: _probe(ad.sigmoid(a)), {"a": a}),
        "absolute": (lambda: _probe(ad.absolute(kinked)), {"x": kinked}),
        "softmax": (lambda: _probe(ad.softmax(a)), {"a": a}),
        "dropout": (lambda: _probe(ad.dropout(a, 0.25, True, Prng(1))), {"a": a}),
        "linear": (lambda: _probe(ad.linear(t3, lin_w, lin_b)), {"x": t3, "w": lin_w, "b": lin_b}),
        "conv2d": (lambda: _probe(ad.conv2d(x4, w4, b4)), {"x": x4, "w": w4, "b": b4}),
        "batch_norm2d": (lambda: _probe(ad.batch_norm2d(x4, g2, be2, state, True)),
                         {"x": x4, "g": g2, "b": be2}),
        "avg_pool2d": (lambda: _probe(ad.avg_pool2d(odd)), {"x": odd}),
        "global_avg_pool": (lambda: _probe(ad.global_avg_pool(x4)), {"x": x4}),
        "layer_norm": (lambda: _probe(ad.layer_norm(t3, lg, lb)), {"x": t3, "g": lg, "b": lb}),
        "multi_head_attention": (
            lambda: _probe(ad.multi_head_attention(t3, 2, att["q"], att["k"], att["v"], att["o"])),
            {"x": t3, **att}),
        "softmax_cross_entropy": (lambda: ad.softmax_cross_entropy(logits, [0, 2, 1, 1]),
                                  {"logits": logits}),
        "masked_l1": (lambda: ad.masked_l1(kinked, target, mask), {"x": kinked}),
    }


@criterion(5, "finite-difference gradient checks: every op, CNN6 and Transformer end to end")
def test_c05_gradient_checks():
    start = time.perf_counter()
    failures = {}
    for name, (fn, tensors) in _op_cases().items():
        worst = max(check_gradients(fn, tensors, k=20).values())
        if worst >= 1e-3:
            failures[name] = worst
    assert not failures, failures

    with ad.default_dtype(np.float64):
        cnn = build_cnn(CnnSpec("cnn6", dropout=0.0), Prng(11))
        enc = build_transformer(TransformerSpec(d=32, input_dim=10, dropout=0.0), Prng(12))
    r = np.random.default_rng(13)
    cnn_in = [r.standard_normal((12, 64)) for _ in range(3)]
    enc_in = [r.standard_normal((7, 10)), r.standard_normal((5, 10))]
    worst_cnn = check_gradients(
        lambda: ad.softmax_cross_entropy(cnn.forward_batch(cnn_in, training=True), [0, 1, 2]),
        cnn.named_parameters(), k=20)
    worst_enc = check_gradients(
        lambda: ad.softmax_cross_entropy(enc.forward_batch(enc_in, training=True), [1, 2]),
        enc.named_parameters(), k=20)
    assert max(worst_cnn.values()) < 1e-2, worst_cnn
    assert max(worst_enc.values()) < 1e-2, worst_enc
    assert time.perf_counter() - start < 600


# 6 ---------------------------------------------------------------------------------

# Integers fixed from the per-layer count formula before the models existed
# (kh*kw*Cin*Cout + Cout per conv, 2*C per batch norm, in*out + out per FC).
PINNED_COUNTS = {"cnn6": 4_838_287, "cnn10": 5_221_071, "cnn14": 80_761_551}


@criterion(6, "CNN6/10/14 layer sequences and parameter counts")
def test_c06_architecture_audit():
    layouts = {"cnn6": (5, [64, 128, 256, 512], 1, 512),
               "cnn10": (3, [64, 128, 256, 512], 2, 512),
               "cnn14": (3, [64, 128, 256, 512, 1024, 2048], 2, 2048)}
    for variant, (k, chans, reps, hidden) in layouts.items():
        total, c_in = 0, 1
        for c in chans:
            for _ in range(reps):
                total += k * k * c_in * c + c + 2 * c
                c_in = c
        total += c_in * hidden + hidden + hidden * 527 + 527
        assert total == PINNED_COUNTS[variant]
        model = build_cnn(CnnSpec(variant, head_units=527), Prng(0))
        assert model.num_parameters() == PINNED_COUNTS[variant]
        assert model.architecture() == golden_architecture(variant)


# 7 ---------------------------------------------------------------------------------

def _epochs_to_reach(cfg, data, target, max_epochs, seed):
    rng = Prng(seed)
    model = build_model(cfg, rng)
    opt = make_optimizer(cfg)
    for epoch in range(1, max_epochs + 1):
        train_epoch(model, data, cfg, rng, opt)
        f1, _ = evaluate(model, data)
        if f1 >= target:
            return epoch, f1
    return None, f1


@criterion(7, "CNN6 and Transformer-128 fit a 16-clip synthetic set")
def test_c07_trainability(extractor):
    start = time.perf_counter()
    cnn_cfg = TrainConfig(model="cnn6", batch_size=16, augment=None)
    cnn_data = synthetic_dataset(16, extractor, "logmel", seed=100)
    epoch, f1 = _epochs_to_reach(cnn_cfg, cnn_data, 0.95, 200, seed=1)
    assert epoch is not None, f"CNN6 stalled at macro-F1 {f1:.3f}"

    tr_cfg = TrainConfig(model="transformer128", batch_size=16, schedule="warmup", augment=None)
    tr_data = synthetic_dataset(16, extractor, "mfcc", seed=100)
    epoch, f1 = _epochs_to_reach(tr_cfg, tr_data, 0.90, 300, seed=1)
    assert epoch is not None, f"Transformer stalled at macro-F1 {f1:.3f}"
    assert time.perf_counter() - start < 900


# 8 ---------------------------------------------------------------------------------

@criterion(8, "masked-frame reconstruction loss halves within 200 steps")
def test_c08_pretraining_objective(extractor):
    clips = [f for f, _ in synthetic_dataset(32, extractor, "mfcc", seed=3)]
    model = build_transformer(TransformerSpec(d=128, task="reconstruct", dropout=0.0), Prng(0))
    opt = Adam(lr=1e-3)
    rng = Prng(1)
    params = SpecAugmentParams(time_mask_max=16, freq_mask_max=0, n_time_masks=2, n_freq_masks=0)
    losses = []
    for step in range(200):
        batch = [clips[(8 * step + i) % 32] for i in range(8)]
        losses.append(time_alteration_pretrain_step(model, batch, params, rng, opt))
    assert np.mean(losses[-10:]) <= 0.5 * losses[0], (losses[0], losses[-10:])


# 9 ---------------------------------------------------------------------------------

@criterion(9, "warmup learning-rate schedule")
def test_c09_schedule():
    expected = 512 ** -0.5 * 4000 ** -0.5
    assert abs(warmup_lr(4000, 512, 4000) - expected) <= 1e-9 * expected
    lrs = [warmup_lr(s, 512, 4000) for s in range(1, 8001)]
    assert all(b >= a for a, b in zip(lrs[:3999], lrs[1:4000]))
    assert all(b <= a for a, b in zip(lrs[3999:], lrs[4000:]))


# 10 --------------------------------------------------------------------------------

@criterion(10, "byte-identical experiment reports and bit-exact checkpoints")
def test_c10_reproducibility(tmp_path):
    manifest = write_synthetic_corpus(tmp_path / "wav", 24, seed=8, duration=0.25)
    cfg = tmp_path / "run.cfg"
    cfg.write_text("model = transformer128\nepochs = 2\nbatch_size = 4\nwarmup_steps = 20\n"
                   "n_runs = 2\nseed = 5\n")
    env = dict(os.environ, OPENBLAS_NUM_THREADS="1", OMP_NUM_THREADS="1", MKL_NUM_THREADS="1")
    reports = []
    for i in range(2):
        out = tmp_path / f"report{i}.json"
        subprocess.run([sys.executable, "-m", "serpann", "experiment", "--config", str(cfg),
                        "--manifest", str(manifest), "--out", str(out)],
                       check=True, env=env, capture_output=True)
        reports.append(out.read_bytes())
    assert reports[0] == reports[1]

    builders = [lambda s: build_cnn(CnnSpec(v), Prng(s)) for v in ("cnn6", "cnn10", "cnn14")]
    builders += [lambda s: build_transformer(TransformerSpec(d=d), Prng(s)) for d in (128, 512)]
    for i, build in enumerate(builders):
        model = build(40 + i)
        for buf in model.named_buffers().values():
            buf[...] = np.random.default_rng(i).uniform(0.5, 2.0, buf.shape)
        path = tmp_path / f"m{i}.serw"
        save_checkpoint(model, path)
        restored = build(99)
        restored.load_state_dict(load_checkpoint(path))
        a, b = model.state_dict(), restored.state_dict()
        assert all(a[k].tobytes() == b[k].tobytes() for k in a)
