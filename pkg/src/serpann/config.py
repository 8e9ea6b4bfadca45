"""Flat ``key = value`` run configuration files.

Blank lines and lines starting with ``#`` are ignored.  Every key must be
known; values are typed by key.  ``format_config`` prints every key (defaults
filled in) in sorted order, so parse -> print -> parse is a fixpoint.
"""

from dataclasses import dataclass, field
from pathlib import Path

from .audio_io import SplitSpec
from .augment import SpecAugmentParams
from .errors import ConfigError
from .features import FeatureExtractor
from .training import MODEL_NAMES, TrainConfig


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {options}, got {text!r}")
        return text
    return parse


SCHEMA = {
    "model": _choice(*MODEL_NAMES),
    "epochs": int,
    "batch_size": int,
    "lr": float,
    "schedule": _choice("constant", "warmup"),
    "warmup_steps": int,
    "seed": int,
    "n_runs": int,
    "dropout": float,
    "augment.enabled": _bool,
    "augment.time_mask_max": int,
    "augment.freq_mask_max": int,
    "augment.n_time_masks": int,
    "augment.n_freq_masks": int,
    "mel.sample_rate": int,
    "mel.window_size": int,
    "mel.hop": int,
    "mel.n_mels": int,
    "mel.f_min": float,
    "mel.f_max": float,
    "mfcc.n_coeffs": int,
    "split.train": float,
    "split.valid": float,
    "split.test": float,
    "split.seed": int,
}

DEFAULTS = {
    "model": "cnn10",
    "batch_size": 16,
    "lr": 1e-4,
    "warmup_steps": 4000,
    "seed": 0,
    "n_runs": 25,
    "dropout": 0.2,
    "augment.enabled": True,
    "augment.time_mask_max": 64,
    "augment.freq_mask_max": 8,
    "augment.n_time_masks": 2,
    "augment.n_freq_masks": 2,
    "mel.sample_rate": 32000,
    "mel.window_size": 1024,
    "mel.hop": 320,
    "mel.n_mels": 64,
    "mel.f_min": 50.0,
    "mel.f_max": 14000.0,
    "mfcc.n_coeffs": 40,
    "split.train": 0.8,
    "split.valid": 0.1,
    "split.test": 0.1,
    "split.seed": 0,
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        if key in self.values:
            return self.values[key]
        transformer = self.get_model().startswith("transformer")
        if key == "epochs":
            return 20 if transformer else 100
        if key == "schedule":
            return "warmup" if transformer else "constant"
        return DEFAULTS[key]

    def get_model(self):
        return self.values.get("model", DEFAULTS["model"])

    def resolved(self):
        return {k: self[k] for k in sorted(SCHEMA)}

    def train_config(self):
        aug = None
        if self["augment.enabled"]:
            aug = SpecAugmentParams(self["augment.time_mask_max"], self["augment.freq_mask_max"],
                                    self["augment.n_time_masks"], self["augment.n_freq_masks"])
        try:
            return TrainConfig(model=self["model"], batch_size=self["batch_size"],
                               epochs=self["epochs"], base_lr=self["lr"],
                               schedule=self["schedule"], warmup_steps=self["warmup_steps"],
                               seed=self["seed"], augment=aug, dropout=self["dropout"],
                               input_dim=self["mfcc.n_coeffs"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def split_spec(self):
        try:
            return SplitSpec(self["split.train"], self["split.valid"], self["split.test"],
                             self["split.seed"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def feature_extractor(self):
        try:
            return FeatureExtractor(self["mel.sample_rate"], self["mel.window_size"],
                                    self["mel.hop"], self["mel.n_mels"], self["mel.f_min"],
                                    self["mel.f_max"], self["mfcc.n_coeffs"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def parse_config(text):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = (s.strip() for s in line.partition("="))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = SCHEMA[key](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return RunConfig(values)


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def format_config(cfg):
    return "".join(f"{k} = {_format_value(v)}\n" for k, v in cfg.resolved().items())


def load_config(path):
    return parse_config(Path(path).read_text(encoding="utf-8"))
