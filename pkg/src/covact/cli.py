"""Command line: ``covact {synth,extract,train,eval,ablate}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline as pl
from .config import add_config_flags, load_config, overrides_from_args
from .dataset import read_manifest
from .io import atomic_open
from .synth import MOTIONS, SynthSpec, generate

log = logging.getLogger("covact")


def _config(args):
    ov = overrides_from_args(args)
    if getattr(args, "seed", None) is not None:
        ov["pipeline.seed"] = args.seed
    return load_config(args.config, ov)


def cmd_synth(args) -> int:
    spec = SynthSpec(
        classes=tuple(c.strip() for c in args.classes.split(",") if c.strip()),
        videos_per_class=args.videos,
        frames=args.frames,
        width=args.width,
        height=args.height,
        groups=args.groups,
        color_context=args.color_context,
        depth=args.depth,
        noise=args.noise,
        seed=args.seed if args.seed is not None else 0,
    )
    m = generate(spec, args.out)
    print(f"wrote {len(m.records)} videos to {args.out}")
    return 0


def cmd_extract(args) -> int:
    cfg = _config(args)
    manifest = read_manifest(args.manifest)
    covs, _ = pl.extract(manifest, cfg, args.out)
    print(f"wrote {len(covs)} clip descriptors (d={cfg.feature_mask().d}) to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    cov, logs = pl.load_store(args.store)
    if not cov.records:
        raise ValueError(f"{args.store}: descriptor store is empty")
    model, test = pl.train(cov.records, logs.records, cfg, cov.features)
    pl.save_model(model, args.out)
    hist = " ".join(f"{k}={v}" for k, v in model.histogram().items())
    print(f"dictionary: {len(model.covs)} atoms ({hist}); held-out videos: {len(test)}")
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    model = pl.load_model(args.dictionary)
    cov, logs = pl.load_store(args.store)
    if cov.features and model.features and cov.features != model.features:
        raise ValueError("descriptor store and dictionary were built with different features")
    _, test = pl.split_videos(cov.records, cfg)
    pl.check_split(model, test)
    classes = read_manifest(args.manifest, check_files=False).classes if args.manifest else None
    reports, preds = pl.evaluate_model(
        model, cov.records, logs.records, [v.video_id for v in test], cfg, classes
    )
    pl.write_reports(reports, preds, args.out)
    for r in reports:
        print(r.table())
        print()
    return 0


def cmd_ablate(args) -> int:
    cfg = _config(args)
    cov, _ = pl.load_store(args.store)
    masks = [m.strip() for m in args.masks.split(",") if m.strip()]
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    classes = read_manifest(args.manifest, check_files=False).classes if args.manifest else None
    reports = pl.run_ablation(cov.records, cov.features, masks, methods, cfg, classes)
    pl.write_ablation(reports, args.out)
    print(Path(args.out, "ablation.txt").read_text(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="covact", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI config file")
        sp.add_argument("--seed", type=int, help="shorthand for --pipeline-seed")
        add_config_flags(sp)

    s = sub.add_parser("synth", help="generate a synthetic motion dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--classes", default=",".join(MOTIONS))
    s.add_argument("--videos", type=int, default=10, help="videos per class")
    s.add_argument("--frames", type=int, default=40)
    s.add_argument("--width", type=int, default=64)
    s.add_argument("--height", type=int, default=48)
    s.add_argument("--groups", type=int, default=5)
    s.add_argument("--noise", type=float, default=1.5)
    s.add_argument("--color-context", action="store_true", help="tint each class differently")
    s.add_argument("--depth", action="store_true", help="also write 16-bit depth maps")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("extract", help="clip covariance and log descriptors")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True, help="descriptor store directory")
    common(s)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("train", help="build dictionaries from the training split")
    s.add_argument("--store", required=True)
    s.add_argument("--out", required=True, help="dictionary directory")
    common(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="classify held-out videos and write reports")
    s.add_argument("--store", required=True)
    s.add_argument("--dictionary", required=True)
    s.add_argument("--manifest", help="declares the class set and its order")
    s.add_argument("--out", required=True)
    common(s)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("ablate", help="feature-set x method accuracy grid")
    s.add_argument("--store", required=True, help="store extracted with the union of the masks")
    s.add_argument("--masks", default="AF,MF,AMF")
    s.add_argument("--methods", default="omp,tsc,nn")
    s.add_argument("--manifest")
    s.add_argument("--out", required=True)
    common(s)
    s.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"covact {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
