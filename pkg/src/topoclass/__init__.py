"""Topology-only node classification with GCN, GAT and harmonic functions."""

from .bench import (
    ExperimentConfig,
    ExperimentReport,
    SplitSpec,
    compare_methods,
    run_experiment,
    sample_split,
    test_accuracy_from_acc,
)
from .datasets import (
    DatasetBundle,
    LabelAssignment,
    load_citation_dataset,
    load_dataset,
    load_edge_list_dataset,
    load_karate,
)
from .graph import (
    Graph,
    NormalizedAdjacency,
    RelabelMap,
    average_clustering_coefficient,
    average_degree,
    build_graph,
    dataset_stats,
    degrees,
    normalize_adjacency,
)
from .harmonic import HarmonicConfig, HarmonicSolution, harmonic_classify
from .models import ModelSpec, TrainConfig, build_model, train, train_and_predict

__version__ = "0.1.0"
