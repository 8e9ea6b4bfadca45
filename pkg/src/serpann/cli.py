"""Command-line entry point (``serpann`` / ``python -m serpann``)."""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .audio_io import Manifest, read_manifest, read_wav, stratified_split, write_manifest
from .augment import sample_masks, apply_masks, SpecAugmentParams
from .checkpoint import load_checkpoint, load_tensors, save_checkpoint, save_tensors
from .config import RunConfig, load_config
from .errors import (ConfigError, FormatError, IntegrityError, LabelError, NumericError,
                     SerError, UnsupportedError, VersionError)
from .metrics import f1_from_confusion
from .prng import Prng
from .training import build_model, evaluate, run_experiment, train_run

EXIT_CODES = {
    "ok": 0,
    "internal": 1,
    "usage": 2,
    "missing_file": 3,
    "config": 4,
    "label": 5,
    "format": 6,
    "numeric": 7,
}

EPILOG = "exit codes: " + ", ".join(f"{v}={k}" for k, v in EXIT_CODES.items())


def _resolve(manifest_path, entry_path):
    p = Path(entry_path)
    return p if p.is_absolute() else Path(manifest_path).parent / p


def load_dataset(manifest_path, extractor, kind):
    """Features and labels for every manifest entry, in manifest order."""
    manifest = read_manifest(manifest_path)
    return [(extractor(read_wav(_resolve(manifest_path, p)), kind), lab) for p, lab in manifest]


def _config(args):
    return load_config(args.config) if args.config else RunConfig()


def cmd_prepare_split(args):
    cfg = _config(args)
    manifest = read_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    parts = stratified_split(manifest, cfg.split_spec())
    for name, part in zip(("train", "valid", "test"), parts):
        rebased = Manifest([(os.path.relpath(_resolve(args.manifest, p), out), lab)
                            for p, lab in part])
        write_manifest(rebased, out / f"{name}.csv")
        print(f"{name}: {len(part)}")


def cmd_extract_features(args):
    cfg = _config(args)
    kind = cfg.train_config().feature_kind
    extractor = cfg.feature_extractor()
    manifest = read_manifest(args.manifest)
    tensors = {p: extractor(read_wav(_resolve(args.manifest, p)), kind) for p, _ in manifest}
    save_tensors(tensors, args.out)
    print(f"wrote {len(tensors)} {kind} matrices to {args.out}")


def cmd_train(args):
    cfg = _config(args)
    tc = cfg.train_config()
    extractor = cfg.feature_extractor()
    splits = {"train": load_dataset(args.manifest, extractor, tc.feature_kind),
              "valid": load_dataset(args.dataset, extractor, tc.feature_kind)}
    splits["test"] = splits["valid"]
    result = train_run(tc, splits, tc.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(result.model, out / "model.serw")
    with open(out / "train_log.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,loss,val_f1\n")
        for epoch, loss, f1 in result.epochs:
            fh.write(f"{epoch},{loss!r},{f1!r}\n")
    print(json.dumps({"best_epoch": result.best_epoch, "val_f1": result.val_f1}))


def cmd_evaluate(args):
    cfg = _config(args)
    tc = cfg.train_config()
    model = build_model(tc, Prng(tc.seed))
    model.load_state_dict(load_checkpoint(args.checkpoint))
    dataset = load_dataset(args.manifest, cfg.feature_extractor(), tc.feature_kind)
    _, cm = evaluate(model, dataset)
    report = f1_from_confusion(cm).to_dict()
    report["confusion"] = cm.tolist()
    print(json.dumps(report))


def cmd_experiment(args):
    cfg = _config(args)
    tc = cfg.train_config()
    extractor = cfg.feature_extractor()
    manifest = read_manifest(args.manifest)
    parts = stratified_split(manifest, cfg.split_spec())
    splits = {}
    for name, part in zip(("train", "valid", "test"), parts):
        splits[name] = [(extractor(read_wav(_resolve(args.manifest, p)), tc.feature_kind), lab)
                        for p, lab in part]
    if args.dataset:
        splits["official_test"] = load_dataset(args.dataset, extractor, tc.feature_kind)
    report = run_experiment(tc, cfg["n_runs"], splits)
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    print(report.table_row())


def cmd_augment_preview(args):
    cfg = _config(args)
    tc = cfg.train_config()
    manifest = read_manifest(args.manifest)
    path, _ = manifest.entries[args.index]
    x = cfg.feature_extractor()(read_wav(_resolve(args.manifest, path)), tc.feature_kind)
    params = tc.augment or SpecAugmentParams()
    masks = sample_masks(x.shape[0], x.shape[1], params, Prng(tc.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "before.csv", x, delimiter=",", fmt="%.9g")
    np.savetxt(out / "after.csv", apply_masks(x, masks), delimiter=",", fmt="%.9g")
    for m in masks:
        print(f"{m.axis.name.lower()} start={m.start} length={m.length}")


def cmd_inspect_checkpoint(args):
    tensors = load_tensors(args.checkpoint)
    for name, arr in tensors.items():
        print(f"{name} {'x'.join(str(d) for d in arr.shape)}")
    print(f"total {sum(a.size for a in tensors.values())}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="serpann", description="Speech emotion recognition training toolkit.",
        epilog=EPILOG)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_, *flags):
        p = sub.add_parser(name, help=help_, description=help_, epilog=EPILOG)
        p.add_argument("--config", help="key = value run configuration file")
        for flag, kwargs in flags:
            p.add_argument(flag, **kwargs)
        p.set_defaults(func=func)
        return p

    req = {"required": True}
    add("prepare-split", cmd_prepare_split, "write class-balanced train/valid/test manifests",
        ("--manifest", req), ("--out", {"required": True, "help": "output directory"}))
    add("extract-features", cmd_extract_features, "cache features in a SERW container",
        ("--manifest", req), ("--out", {"required": True, "help": "output container file"}))
    add("train", cmd_train, "train one model; write checkpoint and epoch log",
        ("--manifest", {"required": True, "help": "training manifest"}),
        ("--dataset", {"required": True, "help": "validation manifest"}),
        ("--out", {"required": True, "help": "output directory"}))
    add("evaluate", cmd_evaluate, "print F1 report JSON for a checkpoint",
        ("--checkpoint", req), ("--manifest", req))
    add("experiment", cmd_experiment, "split, train n_runs seeds, write aggregated JSON report",
        ("--manifest", req),
        ("--dataset", {"help": "extra labeled test manifest (reported as official_test)"}),
        ("--out", {"help": "report path (default: stdout)"}))
    p = add("augment-preview", cmd_augment_preview, "dump before/after SpecAugment CSV matrices",
            ("--manifest", req), ("--out", {"required": True, "help": "output directory"}))
    p.add_argument("--index", type=int, default=0, help="manifest row to preview")
    sub_inspect = sub.add_parser("inspect-checkpoint", help="list tensor names and shapes",
                                 epilog=EPILOG)
    sub_inspect.add_argument("--checkpoint", required=True)
    sub_inspect.set_defaults(func=cmd_inspect_checkpoint)
    return parser


def _classify(exc):
    if isinstance(exc, FileNotFoundError):
        return "missing_file"
    if isinstance(exc, ConfigError):
        return "config"
    if isinstance(exc, LabelError):
        return "label"
    if isinstance(exc, (FormatError, UnsupportedError, IntegrityError, VersionError)):
        return "format"
    if isinstance(exc, NumericError):
        return "numeric"
    return "internal"


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (SerError, OSError, KeyError, ValueError) as exc:
        kind = _classify(exc)
        message = str(exc).replace("\n", " ")
        print(f"error: code={kind} exit={EXIT_CODES[kind]} message={message}", file=sys.stderr)
        return EXIT_CODES[kind]
    return 0


if __name__ == "__main__":
    sys.exit(main())
