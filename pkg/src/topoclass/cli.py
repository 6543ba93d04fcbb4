"""Command-line entry point: ``topoclass run | compare | stats``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import bench
from .datasets import DatasetError
from .harmonic import HarmonicConfig
from .models import ModelSpec, TrainConfig, TrainingError

DATASETS = ("karate", "email", "cora", "pubmed", "custom")


def _node_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad node list {text!r}") from None


def _add_dataset_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", choices=DATASETS, default="karate")
    p.add_argument("--data-dir", help="directory holding the email/cora/pubmed source files")
    p.add_argument("--edges", help="edge list file (u v per line)")
    p.add_argument("--labels", help="label file (node class per line)")
    p.add_argument("--cites", help="citation pairs file")
    p.add_argument("--content", help="citation content file (id features... class)")


def _add_run_args(p: argparse.ArgumentParser, multi_method: bool) -> None:
    _add_dataset_args(p)
    if multi_method:
        p.add_argument("--method", action="append", choices=bench.METHODS, dest="methods",
                       help="repeat for each method (default: all three)")
    else:
        p.add_argument("--method", choices=bench.METHODS, required=True)
    split = p.add_mutually_exclusive_group()
    split.add_argument("--train-ratio", type=float)
    split.add_argument("--train-count", type=int)
    split.add_argument("--train-nodes", type=_node_list)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--iterations", type=int, default=100, help="harmonic iteration budget")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden", type=int, default=16, help="GCN hidden width")
    p.add_argument("--heads", type=int, default=8, help="GAT first-layer heads")
    p.add_argument("--jobs", type=int, default=1, help="repetitions run in parallel")
    p.add_argument("--out", help="write the JSON report here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topoclass",
        description="Topology-only node classification benchmark (GCN, GAT, harmonic).",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_args(sub.add_parser("run", help="run one method with repeated splits"), False)
    _add_run_args(sub.add_parser("compare", help="run several methods on paired splits"), True)
    stats = sub.add_parser("stats", help="print dataset summary statistics")
    _add_dataset_args(stats)
    stats.add_argument("--out", help="write the statistics as JSON here")
    return parser


def _split(args, method: str) -> bench.SplitSpec:
    if args.train_nodes is not None:
        return bench.SplitSpec.from_nodes(args.train_nodes)
    if args.train_count is not None:
        return bench.SplitSpec.from_count(args.train_count, args.seed)
    if args.train_ratio is not None:
        return bench.SplitSpec.from_ratio(args.train_ratio, args.seed)
    return bench.default_split(args.dataset, method, args.seed)


def _source(args) -> bench.DatasetSource:
    return bench.DatasetSource(args.dataset, args.data_dir, args.edges, args.labels,
                               args.cites, args.content)


def _config(args, method: str) -> bench.ExperimentConfig:
    return bench.ExperimentConfig(
        dataset=_source(args),
        method=method,
        split=_split(args, method),
        train=TrainConfig(epochs=args.epochs, lr=args.lr, repetitions=args.repeats, seed=args.seed),
        harmonic=HarmonicConfig(max_iterations=args.iterations),
        model=ModelSpec(kind="gcn" if method == "harmonic" else method,
                        hidden_width=args.hidden, heads=args.heads),
        output_path=args.out,
        jobs=args.jobs,
    )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        bundle = _source(args).load()
        if args.command == "stats":
            stats = bundle.stats().as_dict()
            print(bench.format_stats(bundle.name, stats), end="")
            if args.out:
                with open(args.out, "w", encoding="utf-8") as fh:
                    json.dump({"dataset": bundle.name, **stats}, fh, indent=2)
            return 0
        if args.command == "run":
            report = bench.run_experiment(_config(args, args.method), bundle)
            print(bench.format_table({bundle.name: {args.method: report}}), end="")
            return 0
        methods = args.methods or list(bench.METHODS)
        # paired splits need one protocol; the first method's default decides it
        comparison = bench.compare_methods(_config(args, methods[0]), methods, bundle)
        print(bench.format_table({bundle.name: comparison.reports}), end="")
        verdict = "tie: " if comparison.is_tie else "best: "
        print(verdict + ", ".join(comparison.best))
        return 0
    except (DatasetError, bench.ExperimentError, TrainingError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
