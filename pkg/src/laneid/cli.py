"""
Command-line interface.

    python -m laneid gen --profile train --count 200 --seed 1 --out data/corpora/train
    python -m laneid train --config data/config.json --out data/checkpoints/convlstm.ckpt
    python -m laneid eval --ckpt a.ckpt b.ckpt --data data/corpora/test --brightness 130
    python -m laneid sweep-brightness --ckpt a.ckpt --data data/corpora/tunnel --thresholds 100,130,150,170
    python -m laneid sweep-decision --ckpt a.ckpt --data data/corpora/test
    python -m laneid infer --ckpt a.ckpt --data data/corpora/test --out results.jsonl
    python -m laneid eval --ckpt a.ckpt --data data/corpora/test --config data/config.json --entropy-sign 1
    python -m laneid profile --ckpt a.ckpt
    python -m laneid gradcheck --variant convlstm
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import torch

from .brightness import MEASURES, BrightnessConfig
from .checkpoint import load_model
from .config import RunConfig, load_run_config
from .dataset import load_corpus, make_corpus
from .decision import DecisionConfig, DecisionCriterion
from .errors import LaneIdError
from .evaluate import (
    DEFAULT_THRESHOLDS,
    ModelPredictor,
    evaluation_rows,
    infer,
    profile_model,
    sweep_brightness,
    sweep_decision,
    write_report,
)
from .logger import error_tracker, get_user_friendly_error, logger, set_console_level
from .paths import REPORTS, worker_count
from .synthgen import PROFILES
from .train import model_grad_check, train


def _thresholds(value: str) -> List[float]:
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{value}'")


def _brightness(value: str) -> BrightnessConfig:
    try:
        return BrightnessConfig.parse(value)
    except (ValueError, LaneIdError) as e:
        raise argparse.ArgumentTypeError(f"expected 'off' or a threshold, got '{value}' ({e})")


def _criterion(value: str) -> str:
    try:
        return DecisionCriterion.from_name(value).value
    except LaneIdError as e:
        raise argparse.ArgumentTypeError(str(e))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="laneid", description="Lane ID estimation toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug output on the console")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic corpus")
    p.add_argument("--profile", choices=PROFILES, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--frames", type=int, default=16)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=128)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--data", type=Path, help="training corpus (overrides the config)")
    p.add_argument("--iterations", type=int, help="iteration count (overrides the config)")

    def evaluation_args(p, multi: bool):
        p.add_argument("--ckpt", type=Path, required=True, nargs="+" if multi else None)
        p.add_argument("--data", type=Path, required=True)
        p.add_argument("--config", type=Path, help="run config supplying the brightness and decision sections")
        p.add_argument("--criterion", type=_criterion, help="decision criterion (overrides the config)")
        p.add_argument("--no-penalty", action="store_true", help="disable the temporal penalty")
        p.add_argument("--entropy-sign", type=int, choices=[-1, 1], help="sign applied to the entropy criterion")
        p.add_argument("--measure", choices=MEASURES, help="perceived brightness measure")
        p.add_argument("--window", type=int, help="running brightness mean over the last N frames")
        p.add_argument("--limit", type=int, help="evaluate only the first N sequences")

    p = sub.add_parser("eval", help="accuracy of one or more checkpoints")
    evaluation_args(p, multi=True)
    p.add_argument("--brightness", type=_brightness, help="'off' or a threshold (overrides the config)")
    p.add_argument("--report", type=Path, help="CSV report path")

    p = sub.add_parser("sweep-brightness", help="accuracy per brightness threshold")
    evaluation_args(p, multi=True)
    p.add_argument("--thresholds", type=_thresholds, default=list(DEFAULT_THRESHOLDS))
    p.add_argument("--out", type=Path, default=REPORTS / "sweep_brightness.csv")

    p = sub.add_parser("sweep-decision", help="final accuracy per decision criterion")
    evaluation_args(p, multi=False)
    p.add_argument("--brightness", type=_brightness, help="'off' or a threshold (overrides the config)")
    p.add_argument("--out", type=Path, default=REPORTS / "sweep_decision.csv")

    p = sub.add_parser("infer", help="per-frame decisions as JSON lines")
    evaluation_args(p, multi=False)
    p.add_argument("--brightness", type=_brightness, help="'off' or a threshold (overrides the config)")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("profile", help="parameter count, size and speed of a checkpoint")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--frames", type=int, default=20)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    p.add_argument("--variant", choices=["basic", "stdlstm", "convlstm"], default="convlstm")
    p.add_argument("--frames", type=int, default=2)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-coords", type=int, help="sample at most this many coordinates per tensor")
    p.add_argument("--tolerance", type=float, default=1e-4)
    return parser


def _run_config(args) -> RunConfig:
    return load_run_config(args.config) if args.config is not None else RunConfig()


def _decision(args, config: RunConfig) -> DecisionConfig:
    base = config.decision
    return DecisionConfig(
        criterion=args.criterion or base.criterion,
        entropy_sign=base.entropy_sign if args.entropy_sign is None else args.entropy_sign,
        temporal_penalty=base.temporal_penalty and not args.no_penalty,
    ).validate()


def _brightness_config(args, config: RunConfig) -> BrightnessConfig:
    chosen = getattr(args, "brightness", None)
    base = config.brightness
    if chosen is not None:
        base = dataclasses.replace(base, enabled=chosen.enabled, threshold=chosen.threshold)
    return dataclasses.replace(
        base,
        measure=args.measure or base.measure,
        window=base.window if args.window is None else args.window,
    ).validate()


def _predictors(paths: List[Path]) -> dict:
    predictors = {}
    for path in paths:
        model = load_model(path)
        predictors[f"{path.stem}:{model.config.variant}"] = ModelPredictor(model)
    return predictors


def run(args) -> int:
    if args.command == "gen":
        manifest = make_corpus(args.profile, args.count, args.seed, args.out, args.frames, args.height, args.width)
        print(f"Wrote {manifest['count']} sequences to {args.out}")
        return 0

    if args.command == "train":
        config = load_run_config(args.config)
        if args.data is not None:
            config.paths.train_corpus = str(args.data)
        if args.iterations is not None:
            config.iterations = args.iterations
        result = train(config, out=args.out)
        print(f"Checkpoint: {result.checkpoint} (final loss {result.final_loss:.4f})")
        return 0

    if args.command == "gradcheck":
        error = model_grad_check(args.variant, args.frames, args.eps, args.seed, args.max_coords)
        print(f"max relative error: {error:.3e}")
        return 0 if error < args.tolerance else 1

    if args.command == "profile":
        print(json.dumps(profile_model(load_model(args.ckpt), args.frames), indent=2))
        return 0

    run_config = _run_config(args)
    decision = _decision(args, run_config)
    brightness = _brightness_config(args, run_config)
    records = load_corpus(args.data, args.limit)

    if args.command == "eval":
        rows = evaluation_rows(_predictors(args.ckpt), records, brightness, decision)
        for row in rows:
            print(json.dumps(row))
        if args.report is not None:
            write_report(rows, args.report, {"criterion": decision.criterion})
        return 0

    if args.command == "sweep-brightness":
        rows = sweep_brightness(
            _predictors(args.ckpt), records, args.thresholds, decision,
            measure=brightness.measure, out=args.out, window=brightness.window,
        )
        for row in rows:
            print(f"{row['model']:<32} {row['threshold']:>6} raw={row['raw']:.4f} final={row['final']:.4f}")
        return 0

    if args.command == "sweep-decision":
        predictor = ModelPredictor(load_model(args.ckpt))
        rows = sweep_decision(
            predictor, records, brightness, entropy_sign=decision.entropy_sign,
            temporal_penalty=decision.temporal_penalty, out=args.out,
        )
        for row in rows:
            print(f"{row['criterion']:<8} raw={row['raw']:.4f} final={row['final']:.4f}")
        return 0

    if args.command == "infer":
        rows = infer(ModelPredictor(load_model(args.ckpt)), records, brightness, decision, out=args.out)
        print(f"Wrote {len(rows)} frame results to {args.out}")
        return 0

    raise ValueError(f"unknown command '{args.command}'")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        set_console_level(logging.DEBUG)
    torch.set_num_threads(worker_count())
    try:
        return run(args)
    except (LaneIdError, OSError) as e:
        error_tracker.log_error(e, context={"command": args.command}, module="cli", function=args.command)
        logger.debug("Command failed", exc_info=True)
        print(f"Error: {get_user_friendly_error(e)}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
