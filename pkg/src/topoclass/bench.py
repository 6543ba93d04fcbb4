"""Repeated-split experiments, accuracy bookkeeping and result tables."""

from __future__ import annotations

import hashlib
import json
import logging
import statistics
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .datasets import (
    CORA_LABEL_ENCODING,
    DatasetBundle,
    load_citation_dataset,
    load_dataset,
    load_edge_list_dataset,
)
from .harmonic import HarmonicConfig, harmonic_classify
from .models import ModelSpec, TrainConfig, build_model, train

log = logging.getLogger(__name__)

METHODS = ("gcn", "gat", "harmonic")


class ExperimentError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# splits

@dataclass(frozen=True)
class SplitSpec:
    mode: Literal["ratio", "count", "explicit"]
    ratio: float | None = None
    count: int | None = None
    nodes: tuple[int, ...] | None = None
    seed: int = 0

    @classmethod
    def from_ratio(cls, ratio: float, seed: int = 0) -> "SplitSpec":
        if not 0.0 < ratio < 1.0:
            raise ValueError("train ratio must lie in (0, 1)")
        return cls("ratio", ratio=ratio, seed=seed)

    @classmethod
    def from_count(cls, count: int, seed: int = 0) -> "SplitSpec":
        if count < 1:
            raise ValueError("train count must be positive")
        return cls("count", count=count, seed=seed)

    @classmethod
    def from_nodes(cls, nodes: Sequence[int]) -> "SplitSpec":
        nodes = tuple(int(v) for v in nodes)
        if not nodes:
            raise ValueError("explicit split needs at least one node")
        if len(set(nodes)) != len(nodes):
            raise ValueError("explicit training nodes must be distinct")
        return cls("explicit", nodes=nodes)

    def size(self, n: int) -> int:
        if self.mode == "ratio":
            return int(np.floor(self.ratio * n))
        if self.mode == "count":
            return self.count
        return len(self.nodes)

    def describe(self) -> str:
        if self.mode == "ratio":
            return f"ratio {self.ratio}"
        if self.mode == "count":
            return f"count {self.count}"
        return f"nodes {list(self.nodes)}"


def sample_split(g, labels, spec: SplitSpec, repetition: int = 0) -> np.ndarray:
    """Sorted training node indices for one repetition.

    Random modes draw a uniform subset without replacement from a stream
    seeded with ``spec.seed + repetition``; explicit mode ignores both.
    """
    n = g.num_nodes
    if spec.mode == "explicit":
        idx = np.array(spec.nodes, dtype=np.int64)
        if idx.min() < 0 or idx.max() >= n:
            raise ValueError(f"training node out of range for {n} nodes")
        if len(idx) >= n:
            raise ValueError(f"requested {len(idx)} training nodes out of {n}")
        return np.sort(idx)
    k = spec.size(n)
    if k >= n:
        raise ValueError(f"requested {k} training nodes out of {n}")
    if k < 1:
        raise ValueError("split selects no training nodes")
    rng = np.random.default_rng(spec.seed + repetition)
    return np.sort(rng.choice(n, size=k, replace=False))


def default_split(dataset: str, method: str, seed: int = 0) -> SplitSpec:
    """Split protocol of the benchmark: the two instructors on karate, 5000
    nodes for the graph networks on pubmed, an 0.8 ratio otherwise."""
    if dataset == "karate":
        return SplitSpec.from_nodes([0, 33])
    if dataset == "pubmed" and method in ("gcn", "gat"):
        return SplitSpec.from_count(5000, seed)
    return SplitSpec.from_ratio(0.8, seed)


def mask_hash(mask: np.ndarray) -> str:
    return hashlib.sha256(np.sort(np.asarray(mask, dtype=np.int64)).tobytes()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# accuracy conversion

def test_accuracy_from_acc(acc: float, train_fraction: float) -> float:
    """Accuracy on unlabelled nodes implied by whole-graph accuracy ``acc``,
    assuming every training node is classified correctly."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train fraction must lie in (0, 1)")
    if acc < train_fraction:
        warnings.warn(
            f"accuracy {acc} below training fraction {train_fraction}; clamping to 0",
            RuntimeWarning,
            stacklevel=2,
        )
        return 0.0
    return (acc - train_fraction) / (1.0 - train_fraction)


def acc_from_test_accuracy(test_acc: float, train_fraction: float) -> float:
    return train_fraction + (1.0 - train_fraction) * test_acc


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class DatasetSource:
    """Where a dataset comes from: a benchmark name, or explicit files."""

    name: str = "karate"
    data_dir: str | None = None
    edges: str | None = None
    labels: str | None = None
    cites: str | None = None
    content: str | None = None

    def load(self) -> DatasetBundle:
        if self.edges or self.labels:
            if not (self.edges and self.labels):
                raise ExperimentError("--edges and --labels go together")
            return load_edge_list_dataset(self.edges, self.labels, name=self.name)
        if self.cites or self.content:
            if not (self.cites and self.content):
                raise ExperimentError("--cites and --content go together")
            encoding = CORA_LABEL_ENCODING if self.name == "cora" else None
            return load_citation_dataset(self.cites, self.content, encoding, name=self.name)
        if self.name == "custom":
            raise ExperimentError("custom dataset needs --edges/--labels or --cites/--content")
        return load_dataset(self.name, self.data_dir)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSource
    method: Literal["gcn", "gat", "harmonic"]
    split: SplitSpec
    train: TrainConfig = TrainConfig()
    harmonic: HarmonicConfig = HarmonicConfig()
    model: ModelSpec | None = None
    output_path: str | None = None
    jobs: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")

    def model_spec(self) -> ModelSpec:
        if self.model is not None:
            return replace(self.model, kind=self.method)
        return ModelSpec(kind=self.method)

    def echo(self) -> dict:
        out = {
            "dataset": asdict(self.dataset),
            "method": self.method,
            "split": {k: v for k, v in asdict(self.split).items() if v is not None},
            "repetitions": self.train.repetitions,
            "seed": self.train.seed,
        }
        if self.method == "harmonic":
            out["harmonic"] = asdict(self.harmonic)
        else:
            out["train"] = asdict(self.train)
            out["model"] = asdict(self.model_spec())
            out["optimizer"] = {"name": "adam", "lr": self.train.lr, "beta1": 0.9,
                                "beta2": 0.999, "eps": 1e-8}
            out["init"] = "glorot-uniform"
        return out


# ---------------------------------------------------------------------------
# results

@dataclass
class RepetitionResult:
    index: int
    acc: float
    test_acc: float
    train_accuracy: float
    measured_test_accuracy: float
    train_size: int
    train_fraction: float
    train_mask_hash: str
    wall_ms: float


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    mean = statistics.fmean(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, std


@dataclass
class ExperimentReport:
    config: dict
    dataset_stats: dict
    repetitions: list[RepetitionResult]
    acc_mean: float = 0.0
    acc_std: float = 0.0
    test_acc_mean: float = 0.0
    test_acc_std: float = 0.0
    flags: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.recompute()

    def recompute(self) -> None:
        self.acc_mean, self.acc_std = _mean_std([r.acc for r in self.repetitions])
        self.test_acc_mean, self.test_acc_std = _mean_std([r.test_acc for r in self.repetitions])
        if len(self.repetitions) < 2 and "insufficient repetitions" not in self.flags:
            self.flags.append("insufficient repetitions")

    @property
    def method(self) -> str:
        return self.config["method"]

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "dataset_stats": self.dataset_stats,
            "repetitions": [asdict(r) for r in self.repetitions],
            "aggregates": {
                "acc_mean": self.acc_mean,
                "acc_std": self.acc_std,
                "test_acc_mean": self.test_acc_mean,
                "test_acc_std": self.test_acc_std,
                "std_estimator": "sample (n-1)",
            },
            "flags": self.flags,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        reps = [RepetitionResult(**r) for r in d["repetitions"]]
        return cls(d["config"], d["dataset_stats"], reps, flags=list(d.get("flags", [])))


# ---------------------------------------------------------------------------
# running

def classify(method: str, bundle: DatasetBundle, train_mask: np.ndarray, cfg: ExperimentConfig,
             seed: int) -> np.ndarray:
    if method == "harmonic":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return harmonic_classify(bundle.graph, bundle.labels, train_mask, cfg.harmonic).predictions
    spec = replace(cfg.model_spec(), kind=method)
    model = build_model(spec, bundle.graph, bundle.labels.num_classes, seed)
    return train(model, bundle, train_mask, cfg.train, seed=seed).predictions


def _repetition(bundle: DatasetBundle, cfg: ExperimentConfig, k: int,
                mask: np.ndarray | None = None) -> RepetitionResult:
    y = np.asarray(bundle.labels.ground_truth)
    n = bundle.graph.num_nodes
    start = time.perf_counter()
    if mask is None:
        mask = sample_split(bundle.graph, bundle.labels, cfg.split, k)
    try:
        pred = classify(cfg.method, bundle, mask, cfg, cfg.train.seed + k)
    except Exception as exc:
        raise ExperimentError(f"repetition {k}: {exc}") from exc
    wall_ms = (time.perf_counter() - start) * 1e3

    correct = pred == y
    test = np.ones(n, dtype=bool)
    test[mask] = False
    fraction = len(mask) / n
    acc = float(correct.mean())
    train_acc = float(correct[mask].mean())
    if cfg.method != "harmonic" and train_acc < 1.0:
        log.warning("repetition %d: training accuracy %.4f below 1", k, train_acc)
    return RepetitionResult(
        index=k,
        acc=acc,
        test_acc=test_accuracy_from_acc(acc, fraction),
        train_accuracy=train_acc,
        measured_test_accuracy=float(correct[test].mean()),
        train_size=len(mask),
        train_fraction=fraction,
        train_mask_hash=mask_hash(mask),
        wall_ms=wall_ms,
    )


def run_experiment(cfg: ExperimentConfig, bundle: DatasetBundle | None = None,
                   masks: Sequence[np.ndarray] | None = None) -> ExperimentReport:
    """Run ``cfg.train.repetitions`` independent repetitions and aggregate them.

    ``masks`` overrides the split sampling (one per repetition).
    """
    bundle = bundle if bundle is not None else cfg.dataset.load()
    reps = cfg.train.repetitions
    if masks is not None and len(masks) != reps:
        raise ExperimentError("need one training mask per repetition")

    def one(k):
        return _repetition(bundle, cfg, k, None if masks is None else np.asarray(masks[k]))

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(one, range(reps)))
    else:
        results = [one(k) for k in range(reps)]

    report = ExperimentReport(cfg.echo(), bundle.stats().as_dict(), results)
    report.config["dataset"]["resolved_name"] = bundle.name
    if cfg.output_path:
        report.write(cfg.output_path)
    return report


@dataclass
class Comparison:
    reports: dict[str, ExperimentReport]
    best: list[str]

    @property
    def is_tie(self) -> bool:
        return len(self.best) > 1

    def to_dict(self) -> dict:
        return {
            "best": self.best,
            "tie": self.is_tie,
            "methods": {m: r.to_dict() for m, r in self.reports.items()},
        }


def compare_methods(base: ExperimentConfig, methods: Sequence[str],
                    bundle: DatasetBundle | None = None) -> Comparison:
    """Run several methods on identical per-repetition splits and pick the
    best by mean test accuracy (ties reported, not broken)."""
    methods = list(dict.fromkeys(methods))
    if len(methods) < 2:
        raise ExperimentError("comparison needs ≥2 methods")
    bundle = bundle if bundle is not None else base.dataset.load()
    masks = [sample_split(bundle.graph, bundle.labels, base.split, k)
             for k in range(base.train.repetitions)]
    reports = {}
    for m in methods:
        cfg = replace(base, method=m, output_path=None)
        reports[m] = run_experiment(cfg, bundle, masks)
    top = max(r.test_acc_mean for r in reports.values())
    best = [m for m, r in reports.items() if abs(r.test_acc_mean - top) <= 1e-12]
    comparison = Comparison(reports, best)
    if base.output_path:
        Path(base.output_path).write_text(json.dumps(comparison.to_dict(), indent=2) + "\n")
    return comparison


# ---------------------------------------------------------------------------
# tables

def _pct(mean: float, std: float, flags) -> str:
    if "insufficient repetitions" in flags or std == 0.0:
        return f"{100 * mean:.2f}%"
    return f"{100 * mean:.2f}±{100 * std:.2f}%"


def format_table(rows: dict[str, dict[str, ExperimentReport]]) -> str:
    """Two-block text table (ACC, then test accuracy) over datasets x methods."""
    methods = [m for m in METHODS if any(m in r for r in rows.values())]
    width = max([12] + [len(d) + 2 for d in rows])
    col = 18
    lines = []
    for title, attr in (("Accuracy for full dataset (ACC)", "acc"),
                        ("Accuracy for unlabelled data (test accuracy)", "test_acc")):
        lines.append(title)
        lines.append("".ljust(width) + "".join(m.upper().rjust(col) for m in methods))
        for dataset, reports in rows.items():
            cells = []
            for m in methods:
                r = reports.get(m)
                cells.append("-" if r is None else
                             _pct(getattr(r, attr + "_mean"), getattr(r, attr + "_std"), r.flags))
            lines.append(dataset.ljust(width) + "".join(c.rjust(col) for c in cells))
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def format_stats(name: str, stats: dict) -> str:
    keys = [("No. Nodes", "num_nodes", "d"), ("No. Edges", "num_edges", "d"),
            ("No. Clusters", "num_clusters", "d"),
            ("Average Clustering Coefficient", "avg_clustering_coefficient", ".4f"),
            ("Average Degree", "avg_degree", ".4f")]
    lines = [f"{'':32}{name:>12}"]
    for label, key, fmt in keys:
        lines.append(f"{label:32}{format(stats[key], fmt):>12}")
    return "\n".join(lines) + "\n"
