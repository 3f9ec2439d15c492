"""Command-line entry point: ``contrailseg <subcommand>`` or ``python -m contrailseg``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import config as config_mod
from . import raster
from .dataset import load_dataset, load_scene_file, prepare, save_dataset, synthetic_scenes
from .gradcheck import check_losses, check_network
from .harness import evaluate, predict, render_overlay, train
from .metrics import binarize
from .synth import SynthParams


def _cmd_prepare(args):
    scenes = prepare(args.annotations, args.bandstacks, args.out, size=args.size, png=args.png)
    with_contrail = sum(1 for s in scenes if s[2].any())
    print(f"wrote {len(scenes)} scenes ({with_contrail} with contrails) to {args.out}")


def _cmd_synth(args):
    params = config_mod.load(args.config).synth if args.config else SynthParams()
    if args.seed is not None:
        params = SynthParams(**{**params.__dict__, "seed": args.seed})
    size = args.size or params.height
    scenes = synthetic_scenes(params, args.count, size)
    save_dataset(args.out, scenes, png=args.png)
    print(f"wrote {len(scenes)} synthetic scenes to {args.out}")


def _cmd_train(args):
    cfg = config_mod.load(args.config)
    result = train(cfg, out_dir=args.out)
    print(f"train scenes {len(result.train_scenes)}, test scenes {len(result.test_scenes)}")
    print(f"final train IoU {result.final_train_iou:.4f}")
    print(f"checkpoint {result.checkpoint_path}")
    print(f"log {result.log_path}")


def _cmd_eval(args):
    scenes = load_dataset(args.dataset)
    report = evaluate(args.checkpoint, scenes, args.threshold)
    text = report.to_csv()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text)


def _cmd_gradcheck(args):
    ok = True
    for res in check_losses(n_pairs=args.pairs, seed=args.seed):
        print(res.line())
        ok &= res.passed
    net_res = check_network(seed=args.seed, max_entries=args.max_entries).result()
    print(net_res.line())
    ok &= net_res.passed
    if not ok:
        print("gradient check FAILED", file=sys.stderr)
        return 1
    return 0


def _cmd_overlay(args):
    scene = load_scene_file(args.scene)
    prob = predict(args.checkpoint, [scene])[0]
    panel = render_overlay(scene[1], scene[2], binarize(prob, args.threshold))
    out = args.out or os.path.splitext(args.scene)[0] + "_overlay.png"
    raster.image_to_png(panel, out)
    print(f"wrote {out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contrailseg", description="Contrail segmentation toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="annotations + band stacks -> resized image/mask pairs")
    p.add_argument("--annotations", required=True)
    p.add_argument("--bandstacks", required=True, help="directory of <scene_id>.bstk files")
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--png", action="store_true", help="also write PNG previews")
    p.set_defaults(func=_cmd_prepare)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=25)
    p.add_argument("--config", help="take generator settings from this run config's [synth] section")
    p.add_argument("--seed", type=int)
    p.add_argument("--size", type=int, default=0, help="resize to this size (default: generator size)")
    p.add_argument("--png", action="store_true")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train from a run config")
    p.add_argument("config")
    p.add_argument("--out", default="run")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset directory")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", help="write the CSV report here as well")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference checks of losses and network")
    p.add_argument("--pairs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-entries", type=int, default=64, help="entries sampled per tensor (0: all)")
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("overlay", help="render input / truth / prediction / disagreement panels")
    p.add_argument("checkpoint")
    p.add_argument("scene", help="scene .npz file from a dataset directory")
    p.add_argument("--out")
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=_cmd_overlay)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "max_entries", None) == 0:
        args.max_entries = None
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args) or 0
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
