"""Command-line entry point.

Subcommands mirror the pipeline stages::

    icsoh ingest   --config run.cfg           parse or synthesize the dataset
    icsoh synth    --config run.cfg           force synthetic generation
    icsoh features --config run.cfg           IC curves, HIs, screening, PCA
    icsoh train    --config run.cfg           PSO + AdaBoost + baseline
    icsoh predict  --config run.cfg           predictions CSV only
    icsoh eval     --config run.cfg           predictions + metrics CSVs
    icsoh all      --config run.cfg           the whole pipeline

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .errors import DataError, NumericalError, UsageError
from .pipeline import (
    PipelineConfig,
    cmd_all,
    cmd_features,
    cmd_ingest,
    cmd_predict_eval,
    cmd_train,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="icsoh", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("ingest", "parse the configured CSV (or synthesize) and write the dataset"),
        ("synth", "generate the synthetic dataset regardless of data_csv"),
        ("features", "extract IC curves, health indicators and the PCA model"),
        ("train", "run PSO hyperparameter search, AdaBoost fusion and the baseline"),
        ("predict", "write test-portion predictions"),
        ("eval", "write predictions and the metric report"),
        ("all", "run the full pipeline"),
    ):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", metavar="PATH", help="flat key=value config file")
        cmd.add_argument("--seed", type=int, help="override the config seed")
        cmd.add_argument(
            "--train-fraction", type=float, help="override the train fraction"
        )
        cmd.add_argument("--out", metavar="DIR", help="override the output directory")
    return parser


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    config = (
        PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    )
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.train_fraction is not None:
        overrides["train_fraction"] = args.train_fraction
    if args.out is not None:
        overrides["out_dir"] = args.out
    if overrides:
        config = dataclasses.replace(config, **overrides)
    return config


def _print_summary(command: str, summary: dict) -> None:
    if command in ("ingest", "synth"):
        print(f"battery: {summary['battery_id']}")
        print(f"cycles: {summary['n_cycles']}")
        print(
            "capacity range: "
            f"{summary['capacity_min_ah']:.4f} .. {summary['capacity_max_ah']:.4f} Ah"
        )
    elif command == "features":
        rates = ", ".join(f"{100 * r:.2f}%" for r in summary["contribution_rates"][:3])
        print(f"cycles: {summary['n_cycles']}")
        print(f"dropped features: {', '.join(summary['dropped_features'])}")
        print(f"top contribution rates: {rates}")
    elif command == "train":
        print(f"training pairs: {summary['n_train_pairs']}")
        print(f"selected hidden units: {summary['best_hidden']}")
        print(f"selected learning rate: {summary['best_lr']:.6g}")
        print(f"validation fitness (RMSE): {summary['best_fitness']:.6g}")
    elif command in ("predict", "eval"):
        print(f"test cycles: {summary['n_test']}")
        for model in ("pso_bilstm_adaboost", "bilstm_baseline"):
            if model in summary:
                report = summary[model]
                print(f"{model}: RMSE {report.rmse:.6g}, MAE {report.mae:.6g}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = _load_config(args)
        if args.command == "ingest":
            summary = cmd_ingest(config)
        elif args.command == "synth":
            summary = cmd_ingest(config, force_synth=True)
        elif args.command == "features":
            summary = cmd_features(config)
        elif args.command == "train":
            summary = cmd_train(config)
        elif args.command == "predict":
            summary = cmd_predict_eval(config, write_metrics=False)
        elif args.command == "eval":
            summary = cmd_predict_eval(config)
        else:
            summary = cmd_all(config)
            for stage in ("ingest", "features", "train", "eval"):
                print(f"[{stage}]")
                _print_summary(stage if stage != "eval" else "eval", summary[stage])
            return 0
        _print_summary(args.command, summary)
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
