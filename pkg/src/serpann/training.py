"""Finetuning protocol: Adam, learning-rate schedules, epochs, best-validation
checkpoint selection and multi-seed experiments."""

import io
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .augment import SpecAugmentParams, spec_augment
from .errors import ConfigError, DomainError, EmptyInputError, NumericError
from .metrics import (aggregate_runs, confusion_matrix, f1_from_confusion, format_mean_std)
from .models import CnnSpec, TransformerSpec, build_cnn, build_transformer
from .prng import Prng

log = logging.getLogger(__name__)

MODEL_NAMES = ("cnn6", "cnn10", "cnn14", "transformer128", "transformer512")


@dataclass
class TrainConfig:
    model: str = "cnn10"
    batch_size: int = 16
    epochs: int = 100
    base_lr: float = 1e-4
    schedule: str = "constant"  # or "warmup"
    warmup_steps: int = 4000
    seed: int = 0
    augment: SpecAugmentParams = field(default_factory=SpecAugmentParams)
    dropout: float = 0.2
    input_dim: int = 40

    def __post_init__(self):
        if self.model not in MODEL_NAMES:
            raise ConfigError(f"unknown model {self.model!r}; expected one of {MODEL_NAMES}")
        if self.batch_size < 1 or self.epochs < 1 or self.base_lr <= 0:
            raise ConfigError("batch_size and epochs must be >= 1 and base_lr > 0")
        if self.schedule not in ("constant", "warmup"):
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if self.warmup_steps < 1:
            raise ConfigError("warmup_steps must be >= 1")

    @property
    def feature_kind(self):
        return "mfcc" if self.model.startswith("transformer") else "logmel"

    @property
    def model_dim(self):
        return int(self.model[len("transformer"):]) if self.feature_kind == "mfcc" else None


def build_model(cfg, rng, head_units=3):
    if cfg.feature_kind == "mfcc":
        spec = TransformerSpec(d=cfg.model_dim, input_dim=cfg.input_dim, head_units=head_units,
                               dropout=cfg.dropout)
        return build_transformer(spec, rng)
    return build_cnn(CnnSpec(cfg.model, head_units=head_units, dropout=cfg.dropout), rng)


# --- optimisation ------------------------------------------------------------

BETA1 = 0.9
BETA2 = 0.999
ADAM_EPS = 1e-8


def adam_step(params, grads, state, lr):
    """One bias-corrected Adam update of ``params`` (name -> array) in place.

    ``state`` holds ``t`` plus first/second moment arrays per name and is
    created on first use.
    """
    t = state.get("t", 0) + 1
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name}")
        m = state.setdefault(("m", name), np.zeros_like(p))
        v = state.setdefault(("v", name), np.zeros_like(p))
        m *= BETA1
        m += (1 - BETA1) * g
        v *= BETA2
        v += (1 - BETA2) * (g * g)
        m_hat = m / (1 - BETA1 ** t)
        v_hat = v / (1 - BETA2 ** t)
        p -= (lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)).astype(p.dtype)
    state["t"] = t


class Adam:
    def __init__(self, lr=1e-4, schedule=None):
        self.lr = lr
        self.schedule = schedule
        self.state = {}

    @property
    def steps(self):
        return self.state.get("t", 0)

    def current_lr(self):
        return self.schedule(self.steps + 1) if self.schedule else self.lr

    def step(self, named_params):
        lr = self.current_lr()
        adam_step({k: p.data for k, p in named_params.items()},
                  {k: p.grad for k, p in named_params.items()}, self.state, lr)
        return lr


def warmup_lr(step, d, warmup_steps=4000):
    """``d**-0.5 * min(step**-0.5, step * warmup_steps**-1.5)``."""
    if step < 1:
        raise DomainError(f"warmup schedule is defined for step >= 1, got {step}")
    return d ** -0.5 * min(step ** -0.5, step * warmup_steps ** -1.5)


def make_optimizer(cfg):
    if cfg.schedule == "warmup":
        d = cfg.model_dim or 512
        return Adam(schedule=lambda s: warmup_lr(s, d, cfg.warmup_steps))
    return Adam(lr=cfg.base_lr)


# --- epochs ------------------------------------------------------------------

@dataclass
class EpochStats:
    loss: float
    confusion: object
    steps: int


def train_epoch(model, train_set, cfg, rng, optimizer):
    """One pass over ``train_set`` (list of ``(features, label)``).

    Order is a seeded Fisher-Yates shuffle; the last partial batch is kept.
    SpecAugment (when ``cfg.augment`` is set) is drawn per clip.
    """
    if not train_set:
        raise EmptyInputError("training set is empty")
    order = rng.shuffle(list(range(len(train_set))))
    total, preds, truth, steps = 0.0, [], [], 0
    for b, start in enumerate(range(0, len(order), cfg.batch_size)):
        idx = order[start:start + cfg.batch_size]
        feats = [train_set[i][0] for i in idx]
        if cfg.augment is not None:
            feats = [spec_augment(f, cfg.augment, rng) for f in feats]
        labels = np.array([int(train_set[i][1]) for i in idx])
        try:
            model.zero_grad()
            logits = model.forward_batch(feats, training=True, rng=rng)
            loss = ad.softmax_cross_entropy(logits, labels)
            loss.backward()
            optimizer.step(model.named_parameters())
        except NumericError as exc:
            raise NumericError(f"batch {b}: {exc}") from exc
        steps += 1
        total += loss.item() * len(idx)
        preds.extend(np.argmax(logits.data, axis=1).tolist())
        truth.extend(labels.tolist())
    return EpochStats(total / len(train_set), confusion_matrix(truth, preds), steps)


def predict(model, dataset, batch_size=16):
    """Eval-mode argmax predictions; consecutive equal-length clips share a batch."""
    preds = []
    with ad.no_grad():
        i = 0
        while i < len(dataset):
            j = i + 1
            n = dataset[i][0].shape[0]
            while j < len(dataset) and j - i < batch_size and dataset[j][0].shape[0] == n:
                j += 1
            logits = model.forward_batch([dataset[k][0] for k in range(i, j)], training=False)
            preds.extend(np.argmax(logits.data, axis=1).tolist())
            i = j
    return preds


def evaluate(model, dataset, batch_size=16):
    """Macro-F1 and confusion matrix in eval mode (no augmentation, no dropout,
    running batch-norm statistics)."""
    if not dataset:
        raise EmptyInputError("evaluation set is empty")
    preds = predict(model, dataset, batch_size)
    cm = confusion_matrix([int(lab) for _, lab in dataset], preds)
    return f1_from_confusion(cm).macro_f1, cm


# --- experiments -------------------------------------------------------------

@dataclass
class CheckpointSelection:
    best_metric: float = -math.inf
    best_epoch: int = 0
    weights: dict = None

    def offer(self, epoch, metric, model):
        if metric > self.best_metric:
            self.best_metric = metric
            self.best_epoch = epoch
            self.weights = model.state_dict()
            return True
        return False


@dataclass
class RunResult:
    seed: int
    best_epoch: int = 0
    val_f1: float = 0.0
    test_f1: dict = field(default_factory=dict)
    confusion: dict = field(default_factory=dict)
    epochs: list = field(default_factory=list)  # (epoch, loss, val_f1)
    error: str = None
    model: object = None

    def to_dict(self, test_names):
        if self.error is not None:
            return {"seed": self.seed, "failed": True, "error": self.error}
        out = {"seed": self.seed, "best_epoch": self.best_epoch, "val_f1": self.val_f1,
               "test_f1": self.test_f1["test"], "confusion": self.confusion["test"]}
        for name in test_names:
            if name != "test":
                out[f"{name}_f1"] = self.test_f1[name]
                out[f"{name}_confusion"] = self.confusion[name]
        return out


@dataclass
class ExperimentReport:
    model: str
    runs: list
    test_names: tuple = ("test",)

    @property
    def n_runs(self):
        return len(self.runs)

    @property
    def completed(self):
        return [r for r in self.runs if r.error is None]

    def aggregate(self):
        ok = self.completed
        if not ok:
            return {}
        agg = {}
        mean, std = aggregate_runs([r.val_f1 for r in ok])
        agg["val"] = {"mean": mean, "std": std}
        for name in self.test_names:
            mean, std = aggregate_runs([r.test_f1[name] for r in ok])
            agg[name] = {"mean": mean, "std": std}
        return agg

    def to_dict(self):
        return {
            "model": self.model,
            "n_runs": self.n_runs,
            "per_run": [r.to_dict(self.test_names) for r in self.runs],
            "aggregate": self.aggregate(),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    def table_row(self):
        agg = self.aggregate()
        cells = [format_mean_std(agg[k]["mean"], agg[k]["std"]) if k in agg else "n/a"
                 for k in ("val",) + tuple(self.test_names)]
        return " | ".join([self.model] + cells)

    def training_log(self, run_index=0):
        buf = io.StringIO()
        buf.write("epoch,loss,val_f1\n")
        for epoch, loss, f1 in self.runs[run_index].epochs:
            buf.write(f"{epoch},{loss!r},{f1!r}\n")
        return buf.getvalue()


def train_run(cfg, splits, seed, model=None):
    """Train one model from ``seed`` and evaluate its best-validation weights."""
    rng = Prng(seed)
    if model is None:
        model = build_model(cfg, rng)
    optimizer = make_optimizer(cfg)
    selection = CheckpointSelection()
    result = RunResult(seed=seed)
    for epoch in range(1, cfg.epochs + 1):
        stats = train_epoch(model, splits["train"], cfg, rng, optimizer)
        val_f1, _ = evaluate(model, splits["valid"])
        selection.offer(epoch, val_f1, model)
        result.epochs.append((epoch, stats.loss, val_f1))
        log.debug("seed %d epoch %d loss %.4f val_f1 %.4f", seed, epoch, stats.loss, val_f1)
    model.load_state_dict(selection.weights)
    result.best_epoch = selection.best_epoch
    result.val_f1 = selection.best_metric
    for name in eval_split_names(splits):
        f1, cm = evaluate(model, splits[name])
        result.test_f1[name] = f1
        result.confusion[name] = cm.tolist()
    result.model = model
    return result


def eval_split_names(splits):
    return ("test",) + tuple(sorted(k for k in splits if k not in ("train", "valid", "test")))


def run_experiment(cfg, n_runs, splits):
    """Run ``n_runs`` independent trainings seeded ``cfg.seed + r``.

    A failing run is recorded (with its index) and left out of the
    aggregate; if every run fails the last error is re-raised.
    """
    if n_runs < 1:
        raise ConfigError("n_runs must be >= 1")
    runs = []
    last_exc = None
    for r in range(n_runs):
        seed = cfg.seed + r
        try:
            runs.append(train_run(cfg, splits, seed))
        except Exception as exc:  # recorded in the report, re-raised if all fail
            log.error("run %d (seed %d) failed: %s", r, seed, exc)
            last_exc = exc
            runs.append(RunResult(seed=seed, error=f"run {r}: {type(exc).__name__}: {exc}"))
    if all(r.error is not None for r in runs):
        raise RuntimeError(f"all {n_runs} runs failed") from last_exc
    return ExperimentReport(cfg.model, runs, eval_split_names(splits))
