"""Command-line front end: gen / train / sample / eval / inspect.

Every subcommand is a thin shell over the library; all heavy lifting
(and all determinism guarantees) live in the modules it calls. Worker
count is capped by the ANSFIELD_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..fields import BBOX_RGB, TOPPOINT_RGB, load_raster, save_raster
from .config import ABLATION_PRESETS, HarnessConfig, config_hash
from .dataset import generate_dataset, load_dataset
from .evaluate import METHODS, evaluate, predict_fields
from .train import load_model, train


def _load_config(args) -> HarnessConfig:
    if args.config is not None:
        config = HarnessConfig.from_json(json.loads(Path(args.config).read_text()))
    else:
        config = HarnessConfig()
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "ablation", None) is not None:
        config = config.with_ablation(args.ablation)
    return config


def _cmd_gen(args) -> int:
    config = _load_config(args)
    manifest = generate_dataset(args.out, config)
    print(f"wrote {manifest}")
    print(f"config hash {config_hash(config)}")
    return 0


def _cmd_train(args) -> int:
    dataset = load_dataset(args.dataset)
    out = args.out if args.out is not None else Path(args.dataset) / "run"

    def progress(step: int, loss: float) -> None:
        print(f"step {step:6d}  loss {loss:.6f}")

    model, ckpt = train(dataset, out, progress=progress)
    print(f"wrote {ckpt}")
    return 0


def _cmd_sample(args) -> int:
    dataset = load_dataset(args.dataset)
    model = load_model(args.checkpoint)
    matches = [r for r in dataset.train_records + dataset.eval_records
               if r.question_id == args.question]
    if not matches:
        print(f"unknown question id {args.question!r}", file=sys.stderr)
        return 2
    record = matches[0]
    fields = predict_fields(model, dataset, [record], seed=args.seed or 0)
    raster = fields[record.question_id]

    out = Path(args.out if args.out is not None else ".")
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{record.question_id}_pred.ppm"
    save_raster(raster, path, question_id=record.question_id)
    print(f"wrote {path}")
    return 0


def _cmd_eval(args) -> int:
    dataset = load_dataset(args.dataset)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    model = load_model(args.checkpoint) if args.checkpoint is not None else None
    report = evaluate(methods, dataset, model=model, seed=args.seed or 0)
    print(report.format_table())
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.dumps())
        print(f"wrote {out / 'report.json'}")
    return 0


def _cmd_inspect(args) -> int:
    raster, meta = load_raster(args.raster)
    r = raster.pixels[:, :, 0].astype(np.float64)
    nav = raster.navmask
    toppoint = int(np.sum(np.all(raster.pixels == TOPPOINT_RGB, axis=2)))
    bbox = int(np.sum(np.all(raster.pixels == BBOX_RGB, axis=2)))
    flat = int(np.argmax(np.where(nav, r, -1.0)))
    row, col = divmod(flat, raster.width)
    print(f"size         {raster.width}x{raster.height}")
    print(f"question     {meta.get('question_id')}")
    print(f"navigable px {int(nav.sum())}/{nav.size}")
    if nav.any():
        print(f"R over nav   min {r[nav].min():.0f}  max {r[nav].max():.0f}  "
              f"mean {r[nav].mean():.2f}")
        print(f"max R pixel  row {row} col {col}")
    print(f"toppoint px  {toppoint}")
    print(f"bbox px      {bbox}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ansfield",
        description="Answerability-field benchmark pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a benchmark dataset")
    p.add_argument("--out", required=True, help="dataset directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None, help="HarnessConfig JSON path")
    p.add_argument("--ablation", choices=sorted(ABLATION_PRESETS), default=None)
    p.set_defaults(fn=_cmd_gen)

    p = sub.add_parser("train", help="train the diffusion model on a dataset")
    p.add_argument("dataset", help="dataset directory")
    p.add_argument("--out", default=None, help="run directory (default: <dataset>/run)")
    p.add_argument("--config", default=None, help="unused; config comes from the dataset")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("sample", help="sample a predicted field for one question")
    p.add_argument("dataset", help="dataset directory")
    p.add_argument("checkpoint", help="checkpoint path")
    p.add_argument("question", help="question id, e.g. eval_0003_q07")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=_cmd_sample)

    p = sub.add_parser("eval", help="run the method comparison")
    p.add_argument("dataset", help="dataset directory")
    p.add_argument("--methods", default="random,nearest,topdown,gtfield",
                   help=f"csv subset of {','.join(METHODS)}")
    p.add_argument("--checkpoint", default=None, help="needed for predfield")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="where to write report.json")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("inspect", help="print stats for a saved field raster")
    p.add_argument("raster", help="path to a .ppm with .meta.json sidecar")
    p.set_defaults(fn=_cmd_inspect)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
