"""Command-line entrypoint: dataset generation, analysis, training, evaluation, fusion and checks."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Callable, Sequence
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from .analysis import count_params
from .config import apply_settings_overrides, settings
from .datasets import load_split
from .ensemble import (
    EnsembleSpec,
    FusionStrategy,
    PredictionSet,
    derive_weights,
    fuse,
    read_predictions,
    write_predictions,
)
from .errors import StfactorError, TrainingAborted, UsageError
from .log_utils import init_logging
from .manifest import read_manifest
from .models import ARCH_NAMES, VIDEO_ARCHS, build_arch, canonical_name, input_kind, is_video_arch, network_arch
from .reports import HistoryRow, dumps_sorted
from .synthetic import DEFAULT_AUDIO_DURATION, SynthKind, generate_dataset
from .tensor import Rng, precision
from .training import (
    TrainConfig,
    confusion_metrics,
    decide,
    evaluate,
    load_checkpoint,
    predict_proba,
    train_loop,
    write_history_csv,
)
from .verification import LAYER_NAMES, gradcheck, oracle_suite, parameter_audit, summarize, write_reports

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _ints(text: str, count: int | None = None) -> tuple[int, ...]:
    try:
        values = tuple(int(part) for part in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc
    if count is not None and len(values) != count:
        raise argparse.ArgumentTypeError(f"expected {count} comma-separated integers, got {text!r}")
    return values


def _triple(text: str) -> tuple[int, int, int]:
    return _ints(text, 3)  # type: ignore[return-value]


def _pair(text: str) -> tuple[float, float]:
    values = _floats(text)
    if len(values) != 2:
        raise argparse.ArgumentTypeError(f"expected lo,hi, got {text!r}")
    return values  # type: ignore[return-value]


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _emit(line: str) -> None:
    sys.stdout.write(line + "\n")


def cmd_gen_synth(args: argparse.Namespace) -> int:
    counts = {"train": args.train, "val": args.val, "test": args.test}
    records = generate_dataset(
        args.kind,
        args.out,
        counts,
        args.seed,
        imbalance=args.imbalance,
        shape=args.shape,
        feat_dim=args.feat_dim,
        steps=args.steps,
        duration_range=args.duration,
    )
    positives = sum(record.label for record in records)
    _emit(json.dumps({"kind": args.kind, "out": str(args.out), "samples": len(records), "intoxicated": positives}, sort_keys=True))
    return EXIT_OK


def cmd_count_params(args: argparse.Namespace) -> int:
    if not args.all and not args.arch:
        raise UsageError("count-params needs --arch NAME or --all")
    names = list(VIDEO_ARCHS) if args.all else [canonical_name(args.arch)]
    for name in names:
        if not is_video_arch(name):
            model = build_arch(name, None, input_dim=args.input_dim)
            payload = {"name": name, "total_params": model.parameter_count()}
            _emit(json.dumps(payload, sort_keys=True) if args.json else f"{name}: {payload['total_params']} parameters")
            continue
        report = count_params(network_arch(name, args.channels), input_shape=args.flops)
        if args.json:
            _emit(dumps_sorted(report))
        else:
            flops = f", {report.flops} MACs" if report.flops is not None else ""
            _emit(
                f"{name}: {report.total_weights} conv weights, {report.total_biases} biases, "
                f"decrease factor {report.decrease_factor:.2f}{flops}"
            )
    return EXIT_OK


def cmd_audit(args: argparse.Namespace) -> int:
    reports = parameter_audit()
    if args.oracles:
        reports += oracle_suite(cases=args.oracles, seed=args.seed)
    for line in write_reports(args.out, reports):
        _emit(line)
    summary = summarize(reports)
    return EXIT_OK if summary["failed"] == 0 else EXIT_FAILURE


def _load_for(arch: str, data: Path, split: str, frame_step: int | None):
    return load_split(data, split, input_kind(arch), frame_step)


def _train_one(arch: str, args: argparse.Namespace, checkpoint: Path) -> list[HistoryRow]:
    arch = canonical_name(arch)
    train = _load_for(arch, args.data, "train", args.frame_step)
    val = _load_for(arch, args.data, "val", args.frame_step)
    rng = Rng(args.seed)
    input_dim = None if is_video_arch(arch) else train.x.shape[-1]
    model = build_arch(arch, rng, input_dim=input_dim)
    config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        seed=args.seed,
        checkpoint=checkpoint,
        precision=args.precision,
    )
    try:
        result = train_loop(model, train, val, config)
    except TrainingAborted as exc:
        if args.history and exc.history:
            write_history_csv(args.history, exc.history)
        raise
    _emit(dumps_sorted(result))
    return result.history


def _default_checkpoint(arch: str) -> Path:
    settings.ensure_dirs()
    return settings.checkpoint_dir / f"{canonical_name(arch)}.stc"


def cmd_train(args: argparse.Namespace) -> int:
    checkpoint = args.checkpoint or _default_checkpoint(args.arch)
    with precision(args.precision):
        history = _train_one(args.arch, args, checkpoint)
        if args.compare_with:
            other = canonical_name(args.compare_with)
            other_checkpoint = checkpoint.with_name(f"{checkpoint.stem}.{other}{checkpoint.suffix}")
            history += _train_one(other, args, other_checkpoint)
    if args.history:
        write_history_csv(args.history, history)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    arch = canonical_name(args.arch)
    with precision(args.precision):
        split = _load_for(arch, args.data, args.split, args.frame_step)
        model = build_arch(arch, None, input_dim=None if is_video_arch(arch) else split.x.shape[-1])
        load_checkpoint(args.checkpoint, model)
        metrics = evaluate(model, split)
        if args.preds:
            probs = predict_proba(model, split.x)
            write_predictions(
                args.preds,
                PredictionSet(model_id=arch, sample_ids=tuple(split.ids), probabilities=tuple(float(p) for p in probs)),
            )
    _emit(json.dumps({"arch": arch, "split": args.split, **metrics.model_dump()}, sort_keys=True))
    return EXIT_OK


def _fusion_spec(args: argparse.Namespace, count: int) -> EnsembleSpec:
    if args.val_acc is not None:
        return derive_weights(FusionStrategy.validation_accuracy, args.val_acc, m=count)
    if args.weights in (None, "equal"):
        return derive_weights(FusionStrategy.average, m=count)
    try:
        raw = _floats(args.weights)
    except argparse.ArgumentTypeError as exc:
        raise UsageError(str(exc)) from exc
    if len(raw) != count:
        raise UsageError(f"{len(raw)} weights for {count} prediction files")
    return EnsembleSpec.from_raw(raw)


def cmd_fuse(args: argparse.Namespace) -> int:
    paths = [Path(part) for part in args.preds.split(",") if part]
    if not paths:
        raise UsageError("fuse needs at least one prediction file")
    predictions = [read_predictions(path) for path in paths]
    spec = _fusion_spec(args, len(predictions))
    fused = fuse(predictions, spec)
    write_predictions(args.out, fused)
    logger.info("Fused %d models with weights %s", len(predictions), [round(w, 6) for w in spec.weights])
    if args.labels:
        labels = {record.id: record.label for record in read_manifest(args.labels, check_paths=False)}
        missing = [sample_id for sample_id in fused.sample_ids if sample_id not in labels]
        if missing:
            raise UsageError(f"{len(missing)} fused samples have no label in {args.labels} (e.g. {missing[0]})")
        for prediction in [*predictions, fused]:
            y_true = np.array([labels[i] for i in prediction.sample_ids])
            metrics = confusion_metrics(y_true, decide(prediction.as_array()))
            _emit(json.dumps({"model": prediction.model_id, **metrics.model_dump()}, sort_keys=True))
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    reports = [gradcheck(args.target, args.name, seed, args.eps, args.tol) for seed in range(args.seed, args.seed + args.seeds)]
    for line in write_reports(None, reports):
        _emit(line)
    return EXIT_OK if summarize(reports)["failed"] == 0 else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stfactor", description="Factorized spatio-temporal video and audio classifiers.")
    parser.add_argument("-v", "--verbose", action="store_true", help="Log at DEBUG level.")
    parser.add_argument("--threads", type=int, default=None, help="Cap worker processes (results do not change).")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-synth", help="Generate a seeded synthetic dataset with a manifest.")
    gen.add_argument("--kind", choices=[k.value for k in SynthKind], required=True)
    gen.add_argument("--out", type=Path, required=True)
    gen.add_argument("--train", type=int, required=True)
    gen.add_argument("--val", type=int, required=True)
    gen.add_argument("--test", type=int, required=True)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--shape", type=_triple, default=None, help="Video extents L,H,W.")
    gen.add_argument("--imbalance", type=float, default=1.0, help="Intoxicated-to-sober ratio.")
    gen.add_argument("--feat-dim", type=int, default=16)
    gen.add_argument("--steps", type=int, default=32, help="Frames per feature sequence.")
    gen.add_argument("--duration", type=_pair, default=DEFAULT_AUDIO_DURATION, help="Audio duration range lo,hi in seconds.")
    gen.set_defaults(handler=cmd_gen_synth)

    cp = sub.add_parser("count-params", help="Report parameter counts (and optionally MACs).")
    cp.add_argument("--arch", choices=[*ARCH_NAMES, "audio-dnn-512-256", "audio-dnn-256-128"])
    cp.add_argument("--all", action="store_true", help="Every named video architecture.")
    cp.add_argument("--channels", type=lambda s: _ints(s, 5), default=(3, 64, 64, 128, 128))
    cp.add_argument("--flops", type=_triple, default=None, help="Input extents L,H,W for MAC counting.")
    cp.add_argument("--input-dim", type=int, default=None, help="Feature dimension for audio models.")
    cp.add_argument("--json", action="store_true")
    cp.set_defaults(handler=cmd_count_params)

    audit = sub.add_parser("audit", help="Check parameter counts against the published comparison.")
    audit.add_argument("--oracles", type=int, default=0, help="Also run N random oracle cases per variant.")
    audit.add_argument("--seed", type=int, default=0)
    audit.add_argument("--out", type=Path, default=None)
    audit.set_defaults(handler=cmd_audit)

    train = sub.add_parser("train", help="Train a model keeping the best-validation checkpoint.")
    train.add_argument("--arch", required=True)
    train.add_argument("--data", type=Path, required=True)
    train.add_argument("--epochs", type=int, required=True)
    train.add_argument("--lr", type=float, default=settings.learning_rate)
    train.add_argument("--batch-size", type=int, default=settings.batch_size)
    train.add_argument("--seed", type=int, required=True)
    train.add_argument("--checkpoint", type=Path, default=None, help="Defaults to <data_dir>/checkpoints/<arch>.stc.")
    train.add_argument("--history", type=Path, default=None)
    train.add_argument("--compare-with", default=None, help="Train a second architecture with the same seed and data.")
    train.add_argument("--frame-step", type=int, default=None)
    train.add_argument("--precision", choices=["float32", "float64"], default=settings.precision)
    train.set_defaults(handler=cmd_train)

    ev = sub.add_parser("eval", help="Evaluate a checkpoint and write predictions.")
    ev.add_argument("--arch", required=True)
    ev.add_argument("--checkpoint", type=Path, required=True)
    ev.add_argument("--data", type=Path, required=True)
    ev.add_argument("--split", choices=["train", "val", "test"], default="test")
    ev.add_argument("--preds", type=Path, default=None)
    ev.add_argument("--frame-step", type=int, default=None)
    ev.add_argument("--precision", choices=["float32", "float64"], default=settings.precision)
    ev.set_defaults(handler=cmd_eval)

    fu = sub.add_parser("fuse", help="Weighted late fusion of prediction files.")
    fu.add_argument("--preds", required=True, help="Comma-separated prediction CSVs.")
    group = fu.add_mutually_exclusive_group()
    group.add_argument("--weights", default=None, help="'equal' or comma-separated weights.")
    group.add_argument("--val-acc", type=_floats, default=None, help="Per-model validation accuracies.")
    fu.add_argument("--out", type=Path, required=True)
    fu.add_argument("--labels", type=Path, default=None, help="Manifest for per-model and fused metrics.")
    fu.set_defaults(handler=cmd_fuse)

    gc = sub.add_parser("gradcheck", help="Finite-difference gradient check in 64-bit mode.")
    gc.add_argument("--target", choices=["layer", "block", "model"], required=True)
    gc.add_argument("--name", required=True, help=f"Layer ({', '.join(LAYER_NAMES)}), block kind or architecture.")
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--seeds", type=int, default=1, help="Number of consecutive seeds to check.")
    gc.add_argument("--eps", type=float, default=None)
    gc.add_argument("--tol", type=float, default=None)
    gc.set_defaults(handler=cmd_gradcheck)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    """Parse ``argv`` and run one subcommand, returning the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    init_logging(logging.DEBUG if args.verbose else settings.log_level)
    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        if args.threads is not None:
            if args.threads < 1:
                raise UsageError("--threads must be at least 1")
            apply_settings_overrides({"workers": args.threads})
        return handler(args)
    except (UsageError, ValidationError) as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except (StfactorError, OSError) as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return EXIT_FAILURE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
