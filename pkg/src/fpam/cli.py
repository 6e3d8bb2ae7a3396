"""Command-line entry point.

Exit codes are a stable scripting contract: 0 success, 1 usage error,
2 data error, 3 numeric abort. ``FPAM_THREADS`` caps featurization worker
threads (0 runs sequentially, the reference behavior).
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .checkpoint import load_checkpoint
from .config import resolve_config
from .data import load_metadata, synth_dataset
from .errors import ConfigError, DataError, FpamError, NumericError
from .featurize import featurize_index, load_feature_matrix
from .frontend import FrontendParams
from .goldens import emit_goldens
from .model import load_model_from_params
from .reporting import export_attention, export_metrics, write_csv_matrix
from .train import evaluate, mixup_ablation, train


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _threads() -> int:
    try:
        return max(0, int(os.environ.get("FPAM_THREADS", "0")))
    except ValueError:
        return 0


def _echo(lines) -> None:
    for line in lines:
        print(f"config: {line}")


def _frontend_from_args(args) -> FrontendParams:
    return FrontendParams(
        sample_rate=args.rate,
        seconds=args.seconds,
        n_mels=args.mels,
        fft_size=args.fft,
        win_length=args.win,
        hop_length=args.hop,
    )


def _add_frontend_flags(parser) -> None:
    parser.add_argument("--rate", type=int, default=16000)
    parser.add_argument("--seconds", type=float, default=5.0)
    parser.add_argument("--mels", type=int, default=64)
    parser.add_argument("--hop", type=int, default=400)
    parser.add_argument("--win", type=int, default=1024)
    parser.add_argument("--fft", type=int, default=1024)


def cmd_featurize(args) -> int:
    params = _frontend_from_args(args)
    _echo(
        [
            f"frontend.rate = {params.sample_rate}",
            f"frontend.seconds = {params.seconds}",
            f"frontend.mels = {params.n_mels}",
            f"frontend.hop = {params.hop_length}",
            f"frontend.win = {params.win_length}",
            f"frontend.fft = {params.fft_size}",
        ]
    )
    index = load_metadata(args.meta, args.data)
    summary = featurize_index(index, params, args.out, threads=_threads())
    for name, reason in summary.failures:
        print(f"featurize failed: {name}: {reason}", file=sys.stderr)
    print(
        f"featurized {summary.computed} clips ({summary.skipped} cached), "
        f"total frames {summary.total_frames}"
    )
    return 2 if summary.failures else 0


def _prepare_dataset(resolved):
    """Materialize the dataset (synthesizing if needed) and its feature cache."""
    if resolved.data_source == "synth":
        index = synth_dataset(resolved.synth_spec, resolved.synth_seed, resolved.data_root)
    else:
        index = load_metadata(resolved.meta_path, resolved.audio_dir)
    cache_dir = os.path.join(resolved.data_root, "features")
    summary = featurize_index(index, resolved.frontend, cache_dir, threads=_threads())
    if summary.failures:
        for name, reason in summary.failures:
            print(f"featurize failed: {name}: {reason}", file=sys.stderr)
        raise DataError(f"{len(summary.failures)} clips failed featurization")
    return index, cache_dir


def cmd_train(args) -> int:
    overrides = {
        "preset": args.preset,
        "seed": args.seed,
        "mixup": args.mixup,
        "folds": args.folds,
        "head": args.head,
    }
    resolved = resolve_config(args.config, overrides)
    _echo(resolved.echo_lines())
    index, cache_dir = _prepare_dataset(resolved)
    out_dir = args.out or os.path.join("runs", resolved.run_name)
    report, _ = train(resolved.train, index, cache_dir, out_dir)
    export_metrics(report, out_dir)
    for fold in report.folds:
        print(f"fold {fold.fold}: final accuracy {fold.final_accuracy:.4f}")
    print(f"mean cv accuracy: {report.mean_accuracy:.4f}")
    return 0


def cmd_ablation(args) -> int:
    resolved = resolve_config(args.config, {})
    _echo(resolved.echo_lines())
    index, cache_dir = _prepare_dataset(resolved)
    out_dir = args.out or os.path.join("runs", resolved.run_name + "_ablation")
    heads = ("fpam", "baseline") if args.heads == "both" else (args.heads,)
    rows = mixup_ablation(resolved.train, index, cache_dir, args.alpha, heads, out_dir)
    os.makedirs(out_dir, exist_ok=True)
    table = os.path.join(out_dir, "ablation.csv")
    with open(table, "w") as f:
        f.write("head,mixup,mean_accuracy\n")
        for head, with_mixup, acc in rows:
            f.write(f"{head},{'on' if with_mixup else 'off'},{acc:.9e}\n")
    for head, with_mixup, acc in rows:
        print(f"{head} mixup={'on' if with_mixup else 'off'}: mean accuracy {acc:.4f}")
    print(f"ablation table: {table}")
    return 0


def cmd_eval(args) -> int:
    if not 1 <= args.fold <= 5:
        raise ConfigError(f"fold {args.fold} outside 1..5")
    params = load_checkpoint(args.checkpoint)
    model = load_model_from_params(params)
    _echo([f"eval.checkpoint = {args.checkpoint}", f"eval.fold = {args.fold}"])
    index = load_metadata(args.meta, args.data)
    cache_dir = args.features or os.path.join(args.out, "features")
    featurize_index(index, _frontend_from_args(args), cache_dir, threads=_threads())
    test_entries = [e for e in index.entries if e.fold == args.fold]
    if not test_entries:
        raise DataError(f"fold {args.fold} has no clips")
    x = load_feature_matrix(index, test_entries, cache_dir)
    y = np.array([e.target for e in test_entries])
    accuracy, confusion, loss = evaluate(model, x, y, index.n_classes)
    os.makedirs(args.out, exist_ok=True)
    out_csv = os.path.join(args.out, f"confusion_fold{args.fold}.csv")
    write_csv_matrix(out_csv, confusion, fmt="%d")
    print(f"fold {args.fold}: accuracy {accuracy:.4f} loss {loss:.4f}")
    print(f"confusion: {out_csv}")
    return 0


def cmd_attn(args) -> int:
    params = load_checkpoint(args.checkpoint)
    model = load_model_from_params(params)
    if not hasattr(model, "forward_with_attention"):
        raise DataError("checkpoint holds a baseline model with no attention maps")
    _echo([f"attn.checkpoint = {args.checkpoint}", f"attn.clip = {args.clip}"])
    written = export_attention(model, args.clip, args.out, _frontend_from_args(args))
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_goldens(args) -> int:
    manifest = emit_goldens(args.out)
    _echo([f"goldens.out = {args.out}", f"goldens.count = {len(manifest['fixtures'])}"])
    for fx in manifest["fixtures"]:
        print(f"fixture {fx['name']}: {fx['wav']} {fx['tensor']}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="fpam", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("featurize", help="compute log-Mel feature caches for a dataset")
    p.add_argument("--data", required=True, help="audio directory")
    p.add_argument("--meta", required=True, help="metadata CSV")
    p.add_argument("--out", required=True, help="cache directory")
    _add_frontend_flags(p)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="train with 5-fold cross-validation")
    p.add_argument("--config", required=True)
    p.add_argument("--preset", choices=("tiny", "paper50"))
    p.add_argument("--seed")
    p.add_argument("--mixup", help="'off' or a Beta alpha")
    p.add_argument("--folds", help="'all' or a fold list like 1,2")
    p.add_argument("--head", choices=("fpam", "baseline"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablation", help="with/without-mixup comparison runs")
    p.add_argument("--config", required=True)
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--heads", choices=("fpam", "baseline", "both"), default="fpam")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one fold")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--meta", required=True)
    p.add_argument("--data", required=True, help="audio directory")
    p.add_argument("--fold", type=int, required=True)
    p.add_argument("--out", default="eval_out")
    p.add_argument("--features", help="existing feature cache directory")
    _add_frontend_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("attn", help="export attention maps for one clip")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--clip", required=True)
    p.add_argument("--out", required=True)
    _add_frontend_flags(p)
    p.set_defaults(func=cmd_attn)

    p = sub.add_parser("goldens", help="emit frontend golden-vector fixtures")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_goldens)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"fpam: config error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"fpam: numeric abort: {exc}", file=sys.stderr)
        return 3
    except (FpamError, OSError) as exc:
        print(f"fpam: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
