"""Command-line entry points: pretraining, feature encoding, gradient
checking, cost estimation, and the expert-weight sweep."""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, write_arrays
from .config import preset
from .corpus import build_inputs, desk_corpus, generate_sample, load_corpus_config, load_sample
from .flops import cost_table
from .model import RamenModel
from .train import RunConfig, pretrain
from .verification import format_report, run_suite


def _corpus_from(args):
    if getattr(args, "config", None):
        return load_corpus_config(args.config)
    return desk_corpus()


def _dataset(corpus, name):
    if name is None:
        return corpus[0]
    for ds in corpus:
        if ds.name == name:
            return ds
    raise SystemExit(f"unknown dataset {name!r}; available: {[d.name for d in corpus]}")


def _build_model(preset_name: str, seed: int = 0) -> RamenModel:
    return RamenModel(preset(preset_name), seed=seed, dtype=np.float32)


def cmd_pretrain(args) -> int:
    run = RunConfig(
        out_dir=args.out,
        corpus_path=args.config,
        preset_name=args.preset,
        epochs=args.epochs,
        steps_per_epoch=args.steps_per_epoch,
        warmup_epochs=args.warmup_epochs,
        base_lr=args.base_lr,
        seed=args.seed,
        checkpoint_every=args.checkpoint_every,
        overfit=args.overfit,
        total_steps_override=args.steps,
        warmup_steps_override=args.warmup_steps,
    )
    summary = pretrain(run)
    print(
        f"pretrain done: {len(summary['losses'])} steps in {summary['seconds']:.1f}s, "
        f"final loss {summary['losses'][-1]:.4f}"
    )
    print(f"checkpoint: {summary['checkpoint']}")
    print(f"metrics: {summary['metrics']}")
    return 0


def cmd_encode(args) -> int:
    corpus = _corpus_from(args)
    ds = _dataset(corpus, args.dataset)
    if args.sample:
        sample = load_sample(args.sample)
        ds = _dataset(corpus, sample.dataset)
    else:
        sample = generate_sample(ds, args.sample_seed)
    model = _build_model(args.preset, seed=args.seed)
    meta = load_checkpoint(args.checkpoint, model)
    subset = tuple(args.modalities.split(",")) if args.modalities else None
    inputs = build_inputs(sample, ds, subset)
    features = model.encode_features(inputs, args.gsd_target)
    arrays = {f"{name}/features": grid for name, grid in features.items()}
    out_meta = {
        "kind": "features",
        "dataset": ds.name,
        "gsd_target": args.gsd_target,
        "checkpoint_step": meta.get("step"),
        "grids": {name: list(grid.shape) for name, grid in features.items()},
    }
    write_arrays(args.out, arrays, out_meta)
    for name, grid in features.items():
        print(f"{name}: {grid.shape[0]}x{grid.shape[1]}x{grid.shape[2]}")
    print(f"features written to {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    results = run_suite(args.preset, args.seed, corrupt=args.corrupt)
    print(format_report(results))
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} gradient check(s) FAILED", file=sys.stderr)
        return 1
    print("all gradient checks passed")
    return 0


def cmd_flops(args) -> int:
    corpus = _corpus_from(args)
    ds = _dataset(corpus, args.dataset)
    names = tuple(args.modalities.split(",")) if args.modalities else tuple(m.name for m in ds.modalities)
    if not names or names == ("",):
        raise SystemExit("empty modality set; nothing to cost")
    targets = [float(g) for g in args.gsd_targets.split(",")]
    rows = cost_table(preset(args.preset), ds, names, targets)
    header = ["gsd_target", "n_tokens", "total_ops", "attention_quadratic_ops"]
    print("  ".join(f"{h:>22}" for h in header))
    for r in rows:
        print(f"{r.gsd_target:>22g}  {r.n_tokens:>22d}  {r.total_ops:>22.4e}  {r.attention_quadratic_ops:>22.4e}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["gsd_target", "n_tokens", "input_ops", "embed_ops",
                 "attention_quadratic_ops", "attention_linear_ops", "mlp_ops", "total_ops"]
            )
            for r in rows:
                writer.writerow(
                    [r.gsd_target, r.n_tokens, r.input_ops, r.embed_ops,
                     r.attention_quadratic_ops, r.attention_linear_ops, r.mlp_ops, r.total_ops]
                )
        print(f"cost table written to {args.out}")
    return 0


def cmd_expert_sweep(args) -> int:
    model = _build_model(args.preset, seed=args.seed)
    load_checkpoint(args.checkpoint, model)
    ratios = np.geomspace(args.ratio_min, args.ratio_max, args.points)
    n = model.cfg.n_conv
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ratio"] + [f"w_{i + 1}" for i in range(n)])
        for ratio in ratios:
            w = model.resampler.gate.weights(math.log(ratio)).data
            writer.writerow([repr(float(ratio))] + [repr(float(v)) for v in w])
    print(f"expert weight sweep ({args.points} points) written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ramen",
        description="Resolution-adjustable multimodal encoder: pretraining and diagnostics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="masked-reconstruction pretraining on the synthetic corpus")
    p.add_argument("--config", help="corpus configuration YAML (defaults to the built-in desk corpus)")
    p.add_argument("--preset", default="desk", choices=["desk", "paper"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--steps-per-epoch", type=int, default=100)
    p.add_argument("--warmup-epochs", type=int, default=4)
    p.add_argument("--steps", type=int, default=None, help="override total step count")
    p.add_argument("--warmup-steps", type=int, default=None, help="override warmup step count")
    p.add_argument("--base-lr", type=float, default=1.5e-4)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--overfit", action="store_true",
                   help="train repeatedly on one frozen two-dataset batch")
    p.add_argument("--out", required=True, help="run directory for metrics and checkpoints")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("encode", help="full (unmasked) encoding of one sample at a target GSD")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config")
    p.add_argument("--preset", default="desk", choices=["desk", "paper"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dataset", help="dataset preset name (default: first in corpus)")
    p.add_argument("--sample", help="sample container file to encode")
    p.add_argument("--sample-seed", type=int, default=0, help="generate the sample from this seed")
    p.add_argument("--modalities", help="comma-separated subset (default: all)")
    p.add_argument("--gsd-target", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("gradcheck", help="finite-difference verification suite (64-bit)")
    p.add_argument("--preset", default="desk", choices=["desk", "paper"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt", action="store_true",
                   help="inject a gradient fault (negative-control hook)")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("flops", help="closed-form encoding cost across target GSDs")
    p.add_argument("--config")
    p.add_argument("--preset", default="desk", choices=["desk", "paper"])
    p.add_argument("--dataset")
    p.add_argument("--modalities")
    p.add_argument("--gsd-targets", required=True, help="comma-separated sweep, e.g. 300,150,75")
    p.add_argument("--out", help="optional CSV path")
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("expert-sweep", help="gate weights across a log-spaced ratio grid")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--preset", default="desk", choices=["desk", "paper"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratio-min", type=float, default=1e-2)
    p.add_argument("--ratio-max", type=float, default=10.0)
    p.add_argument("--points", type=int, default=25)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_expert_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
