"""Command-line front end: ``scenemotion <command> [--config PATH] [--seed N] [--out DIR] [--bundle PATH]``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import pipeline
from .bundle import file_hash, load_bundle
from .config import load_config, stage_seed
from .dataio import Emotion, load_audio, segment
from .errors import ConfigError, DataError, SceneEmotionError
from .features import write_feature_store
from .synthetic import fuse_corpus, make_tone_corpus


def _config(args):
    cfg = load_config(args.config, seed=args.seed)
    return cfg.with_overrides(out_dir=args.out)


def _out_dir(cfg) -> Path:
    out = cfg.path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require_bundle(args):
    if not args.bundle:
        raise ConfigError("--bundle is required for this command")
    return load_bundle(args.bundle)


def cmd_synth(args) -> int:
    cfg = _config(args)
    out = _out_dir(cfg)
    seed = stage_seed(cfg.seed, "synth")
    if args.tones or not (cfg.music_manifest and cfg.speech_manifest):
        manifest = make_tone_corpus(out, cfg.per_class, seed, cfg.sample_rate, cfg.window_seconds)
    else:
        manifest = fuse_corpus(cfg.path(cfg.music_manifest), cfg.path(cfg.speech_manifest), out, cfg.per_class,
                               seed, cfg.sample_rate)
    print(manifest)
    return 0


def _with_manifest(cfg, manifest):
    if manifest:
        return replace(cfg, manifest=str(Path(manifest).resolve()))
    return cfg


def cmd_extract(args) -> int:
    cfg = _with_manifest(_config(args), args.manifest)
    table = pipeline.load_features(cfg)
    path = _out_dir(cfg) / "features.tsv"
    write_feature_store(path, table.ids, [Emotion(v).tag for v in table.y], table.X, cfg.frame)
    print(f"{len(table)} segments x {table.X.shape[1]} features -> {path}")
    return 0


def cmd_train(args) -> int:
    cfg = _with_manifest(_config(args), args.manifest)
    table = pipeline.load_features(cfg)
    res = pipeline.train_from_features(table, cfg)
    paths = pipeline.write_outputs(res, cfg, _out_dir(cfg))
    print(pipeline.summary_text(res))
    print(f"bundle {paths['bundle']} sha256 {paths['bundle_sha256']}")
    return 0


def cmd_evaluate(args) -> int:
    model = _require_bundle(args)
    manifest = args.manifest
    if not manifest:
        cfg = _config(args)
        if not cfg.manifest:
            raise ConfigError("no manifest given")
        manifest = cfg.path(cfg.manifest)
    report = pipeline.evaluate_manifest(model, manifest, pad_short=args.pad_short)
    print(pipeline.json_dump(report.to_dict()) if args.json else report)
    return 0


def cmd_predict(args) -> int:
    model = _require_bundle(args)
    w = load_audio(args.wav, model.prep.sample_rate)
    segs = segment(w, model.prep.window_seconds, source_id=Path(args.wav).name)
    if not segs:
        raise DataError(f"{args.wav} is shorter than one {model.prep.window_seconds:g} s window")
    pred = model.predict_samples([s.samples for s in segs])
    lines = [f"{s.source_id}\t{Emotion(int(p)).tag}" for s, p in zip(segs, pred)]
    counts = pipeline.label_counts(pred)
    lines.append("summary\t" + "\t".join(f"{k}={v / len(segs):.2f}" for k, v in counts.items()))
    print("\n".join(lines))
    return 0


def cmd_report(args) -> int:
    model = _require_bundle(args)
    prep = model.prep
    lines = [
        f"bundle {args.bundle}",
        f"sha256 {file_hash(args.bundle)}",
        f"sample rate {prep.sample_rate} Hz, window {prep.window_seconds:g} s",
        f"selected features {prep.mask.width} of {prep.mask.keep.size} (survivors per stage {prep.mask.stage_counts})",
        f"preprocessing state {prep.state_hash()}",
        f"meta learner C = {model.meta.hyper.C:g}, gamma = {model.meta.hyper.gamma:g}, "
        f"input width {model.meta.n_features}",
        "base learners:",
    ]
    for tag, m in zip(model.bank.tags, model.bank.models):
        detail = (f"C = {m.hyper.C:g}, gamma = {m.hyper.gamma:g}" if hasattr(m, "hyper")
                  else f"{m.arch.name}, {m.epochs_trained} epochs")
        lines.append(f"  {tag:<15} {detail}")
    print("\n".join(lines))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration")
    common.add_argument("--seed", type=int, help="overrides [run] seed")
    common.add_argument("--out", help="output directory (overrides [paths] out_dir)")
    common.add_argument("--bundle", help="model bundle path")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="scenemotion", description="Audio scene emotion classifier.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("synth", parents=[common], help="build a labelled corpus")
    p.add_argument("--tones", action="store_true", help="generate the synthetic tone corpus")
    p.set_defaults(func=cmd_synth)
    for name, func, helptext in (("extract", cmd_extract, "write the 195-feature table"),
                                 ("train", cmd_train, "train and write a model bundle")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("manifest", nargs="?", help="labelled manifest (overrides [paths] manifest)")
        p.set_defaults(func=func)
    p = sub.add_parser("evaluate", parents=[common], help="score a bundle on a labelled manifest")
    p.add_argument("manifest", nargs="?")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("--pad-short", action="store_true", help="zero-pad clips shorter than one window")
    p.set_defaults(func=cmd_evaluate)
    p = sub.add_parser("predict", parents=[common], help="label each window of a WAV file")
    p.add_argument("wav")
    p.set_defaults(func=cmd_predict)
    p = sub.add_parser("report", parents=[common], help="describe a model bundle")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except SceneEmotionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
