"""Command-line entry points: synth, train, infer, eval.

Device selection comes from the DESMOKE_DEVICE environment variable
(default cpu). Errors exit with a category code: 2 config, 3 data,
4 checkpoint, 1 anything else.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import load_run_config, load_scene_configs
from .errors import DesmokeError


def _device() -> str:
    return os.environ.get("DESMOKE_DEVICE", "cpu")


def cmd_synth(args) -> int:
    from .synthesis import generate_clip, write_clip_dir

    scenes = load_scene_configs(args.config)
    if args.count is not None:
        base = args.seed if args.seed is not None else scenes[0].seed
        expanded = []
        for i in range(args.count):
            template = scenes[i % len(scenes)]
            seed = int(np.random.SeedSequence([base, i]).generate_state(1)[0])
            expanded.append(dataclasses.replace(template, seed=seed))
        scenes = expanded
    elif args.seed is not None:
        scenes = [dataclasses.replace(s, seed=args.seed + i) for i, s in enumerate(scenes)]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, scene in enumerate(scenes):
        clip = generate_clip(scene)
        clip_dir = write_clip_dir(clip, out / f"clip_{i:04d}")
        print(f"wrote {clip_dir} ({scene.scenario}, seed {scene.seed})")
    return 0


def cmd_train(args) -> int:
    from .train import train

    run_cfg = load_run_config(args.config)
    summary = train(run_cfg, args.data, args.out, device=_device())
    print(json.dumps(summary, indent=2))
    return 0


def cmd_infer(args) -> int:
    from .infer import infer_clip

    in_dir = Path(args.input)
    out_dir = Path(args.out)
    clip_dirs = sorted(p for p in in_dir.iterdir() if p.is_dir() and (p / "smoky").is_dir())
    if not clip_dirs:
        clip_dirs = [in_dir]
    for clip_dir in clip_dirs:
        target = out_dir / clip_dir.name if len(clip_dirs) > 1 or clip_dir != in_dir else out_dir
        record = infer_clip(args.ckpt, clip_dir, target, device=_device())
        active = sum(1 for a in record["activation"] if a["diffusion"] or a["ambient"])
        print(f"{clip_dir.name}: {record['frames']} frames, {active} with an active branch")
    return 0


def cmd_eval(args) -> int:
    from .metrics import evaluate_dirs

    report = evaluate_dirs(args.pred, args.gt)
    text = report.to_json()
    if args.json:
        Path(args.json).parent.mkdir(parents=True, exist_ok=True)
        Path(args.json).write_text(text)
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="desmoke",
                                     description="Smoke-type-aware surgical video desmoking")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate paired clean/smoky clips")
    p.add_argument("--config", required=True, help="scene config YAML")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--count", type=int, default=None, help="number of clips to generate")
    p.add_argument("--seed", type=int, default=None, help="base seed override")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model on a clip dataset")
    p.add_argument("--config", required=True, help="run config YAML")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="output directory for checkpoints/logs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="desmoke clips with a trained checkpoint")
    p.add_argument("--ckpt", required=True, help="checkpoint file")
    p.add_argument("--in", dest="input", required=True, help="clip dir or dataset dir")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="PSNR/SSIM of predictions against ground truth")
    p.add_argument("--pred", required=True, help="predictions directory")
    p.add_argument("--gt", required=True, help="ground-truth directory")
    p.add_argument("--json", default=None, help="write the report to this file")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DesmokeError as e:
        print(f"error ({type(e).__name__}): {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
