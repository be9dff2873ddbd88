"""Command-line entry point.

Subcommands run the pipeline up to a stage, reusing any artifacts already in
the output directory: synth, prepare, train-cf, build-qubo, select, train-cbf,
evaluate, pipeline, stats.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 infeasible stage.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import errors
from .config import ExperimentConfig
from .pipeline import Pipeline, feature_selection_stats, stats_tsv, atomic_write_text

CONFIG_ERRORS = (errors.ConfigInvalid,)
DATA_ERRORS = (errors.ParseError, errors.NegativeValue, errors.EmptyDataset,
               errors.IndexOutOfRange, errors.DimensionMismatch, FileNotFoundError)
INFEASIBLE_ERRORS = (errors.QuotaInfeasible, errors.InfeasibleConfig,
                     errors.RankTooLarge, errors.TooLarge, errors.DegenerateCatalog,
                     errors.NegativeBase)

STAGES = (
    "synth", "prepare", "train-cf", "build-qubo", "select",
    "train-cbf", "evaluate", "pipeline", "stats",
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qubofs",
        description="QUBO-based feature selection for cold-start recommenders",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        cmd = sub.add_parser(name, help=f"run the {name} stage")
        cmd.add_argument("--config", required=True, help="experiment config JSON")
        cmd.add_argument("--out", default=None, help="output directory")
        cmd.add_argument("--seed", type=int, default=None, help="override config seed")
        cmd.add_argument("--workers", type=int, default=None, help="override worker count")
        cmd.add_argument(
            "--solver", choices=("exhaustive", "sa"), default=None,
            help="override QUBO solver",
        )
        cmd.add_argument(
            "--samples", type=int, default=None,
            help="override annealer sample count",
        )
    return parser


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json_file(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.workers is not None:
        cfg = cfg.replace(workers=args.workers)
    if args.solver is not None or args.samples is not None:
        solver = cfg.solver
        import dataclasses

        solver = dataclasses.replace(
            solver,
            kind=args.solver if args.solver is not None else solver.kind,
            num_samples=args.samples if args.samples is not None else solver.num_samples,
        )
        cfg = cfg.replace(solver=solver)
    return cfg


def run_stage(command: str, pipeline: Pipeline) -> None:
    if command == "synth":
        if pipeline.cfg.dataset.synth is None:
            raise errors.ConfigInvalid("synth stage needs a dataset.synth section")
        pipeline.ensure_dataset()
    elif command == "prepare":
        pipeline.ensure_splits()
    elif command == "train-cf":
        pipeline.ensure_cf_model()
    elif command == "build-qubo":
        pipeline.ensure_qubos()
    elif command == "select":
        pipeline.ensure_selections()
    elif command == "train-cbf":
        pipeline.ensure_final()
    elif command == "evaluate":
        pipeline.ensure_reports()
    elif command == "pipeline":
        pipeline.run()
    elif command == "stats":
        selections = pipeline.ensure_selections()
        ds = pipeline.ensure_dataset()
        rows = feature_selection_stats([s.selected() for s in selections], ds.n_features)
        text = stats_tsv(rows, ds.feature_ids)
        reports_dir = pipeline.out / "reports"
        reports_dir.mkdir(parents=True, exist_ok=True)
        atomic_write_text(reports_dir / "feature_stats.tsv", text)
        sys.stdout.write(text)
    else:  # pragma: no cover - argparse restricts choices
        raise errors.ConfigInvalid(f"unknown command {command}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
        out_dir = Path(args.out) if args.out else Path("runs") / cfg.config_hash()
        pipeline = Pipeline(cfg, out_dir)
        run_stage(args.command, pipeline)
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except INFEASIBLE_ERRORS as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 4
    print(f"{args.command}: done ({pipeline.out})")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
