"""Command line entry points: train (single run), sweep (grid), report (chart data)."""

from __future__ import annotations

import argparse
import logging
import sys

from .activations import ActivationKind
from .sweep import (
    CHART_KINDS,
    RunSpec,
    SweepGrid,
    discover_runs,
    emit_chart_data,
    execute_run,
    run_sweep,
)


def _dims(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad dims {text!r}, expected e.g. 4000,1000,4000")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="setnet",
        description="Sparse-evolutionary MLP training and activation/sparsity sweeps",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a single model")
    p_train.add_argument("--activation", required=True, choices=[k.value for k in ActivationKind])
    p_train.add_argument("--sparsity", type=float, required=True)
    p_train.add_argument("--epochs", type=int, required=True)
    p_train.add_argument(
        "--dataset",
        required=True,
        help="cifar10:<dir> or synthetic:classes=2,features=16,per_class=100,separation=6,seed=0",
    )
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--out", required=True, help="run output directory")
    p_train.add_argument("--hidden-dims", type=_dims, default=(4000, 1000, 4000))
    p_train.add_argument("--learning-rate", type=float, default=0.01)
    p_train.add_argument("--momentum", type=float, default=0.9)
    p_train.add_argument("--zeta", type=float, default=0.3)
    p_train.add_argument("--batch-size", type=int, default=100)
    p_train.add_argument("--dropout", type=float, default=0.3)
    p_train.add_argument(
        "--no-evolution", action="store_true", help="disable prune/regrow even when sparse"
    )

    p_sweep = sub.add_parser("sweep", help="run an activation x sparsity grid")
    p_sweep.add_argument("--grid-config", required=True, help="JSON grid description")
    p_sweep.add_argument("--workers", type=int, default=None, help="override worker_count")
    p_sweep.add_argument(
        "--resume", action="store_true", help="skip runs with a completion marker"
    )

    p_report = sub.add_parser("report", help="emit chart CSVs from sweep results")
    p_report.add_argument("--results", required=True, help="sweep output root")
    p_report.add_argument(
        "--kind", required=True, choices=[k.replace("_", "-") for k in CHART_KINDS]
    )
    p_report.add_argument("--out", required=True, help="output CSV path")
    p_report.add_argument("--at-epoch", type=int, default=None)
    return parser


def _cmd_train(args) -> int:
    spec = RunSpec(
        activation=args.activation,
        sparsity=args.sparsity,
        seed=args.seed,
        epochs=args.epochs,
        dataset=args.dataset,
        out_dir=args.out,
        hidden_dims=args.hidden_dims,
        learning_rate=args.learning_rate,
        momentum=args.momentum,
        zeta=args.zeta,
        batch_size=args.batch_size,
        dropout_rate=args.dropout,
        evolution_enabled=False if args.no_evolution else None,
    )

    def show(rec):
        print(
            f"epoch {rec.epoch}: train_acc={rec.train_accuracy:.4f} "
            f"val_acc={rec.val_accuracy:.4f} train_loss={rec.train_loss:.4f} "
            f"val_loss={rec.val_loss:.4f} overfit={rec.overfit:+.4f}"
        )

    result = execute_run(spec, on_epoch=show)
    if result.diverged:
        print("training diverged; metrics truncated", file=sys.stderr)
        return 1
    print(f"run complete: {result.run_dir}")
    return 0


def _cmd_sweep(args) -> int:
    grid = SweepGrid.from_json(args.grid_config)
    if args.workers is not None:
        grid.worker_count = args.workers
    results = run_sweep(grid, resume=args.resume)
    diverged = sum(r.diverged for r in results)
    print(f"sweep complete: {len(results)} runs ({diverged} diverged)")
    return 0


def _cmd_report(args) -> int:
    results = discover_runs(args.results)
    kind = args.kind.replace("-", "_")
    out = emit_chart_data(results, kind, args.out, at_epoch=args.at_epoch)
    print(f"wrote {out}")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        return _cmd_report(args)
    except (ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
