"""Loaders for the benchmark graphs and for generic edge-list / label files.

Only topology and class labels are kept; word-feature columns of citation
content files are parsed past and thrown away.
"""

from __future__ import annotations

import gzip
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Iterator, Mapping, Sequence

import numpy as np

from .graph import DatasetStats, Graph, RelabelMap, build_graph, dataset_stats


class DatasetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LabelAssignment:
    """Ground-truth class index for every node."""

    ground_truth: np.ndarray
    num_classes: int
    class_names: tuple[str, ...] | None = None

    def __post_init__(self):
        y = np.asarray(self.ground_truth, dtype=np.int64)
        y.setflags(write=False)
        object.__setattr__(self, "ground_truth", y)
        if self.num_classes < 1:
            raise DatasetError("need at least one class")
        if len(y) and (y.min() < 0 or y.max() >= self.num_classes):
            raise DatasetError("class index out of range")
        missing = np.setdiff1d(np.arange(self.num_classes), y)
        if len(missing):
            raise DatasetError(f"classes without any node: {missing.tolist()}")
        if self.class_names is not None:
            names = tuple(self.class_names)
            if len(names) != self.num_classes or len(set(names)) != len(names):
                raise DatasetError("class_names must be distinct, one per class")
            object.__setattr__(self, "class_names", names)

    def __len__(self) -> int:
        return len(self.ground_truth)

    def permute(self, perm: Sequence[int]) -> "LabelAssignment":
        y = np.empty_like(self.ground_truth)
        y[np.asarray(perm)] = self.ground_truth
        return LabelAssignment(y, self.num_classes, self.class_names)


# Average-degree convention per benchmark dataset. Email's reference
# value is the raw directed pair count over N; the rest are 2E/N.
DEGREE_CONVENTION = {
    "karate": "undirected",
    "email": "raw_pairs",
    "cora": "undirected",
    "pubmed": "undirected",
}


@dataclass(frozen=True, eq=False)
class DatasetBundle:
    name: str
    graph: Graph
    relabel: RelabelMap
    labels: LabelAssignment
    raw_pair_count: int

    def __post_init__(self):
        if len(self.labels) != self.graph.num_nodes:
            raise DatasetError("labels length differs from node count")

    def stats(self, degree_convention: str | None = None) -> DatasetStats:
        conv = degree_convention or DEGREE_CONVENTION.get(self.name, "undirected")
        return dataset_stats(self.graph, self.labels, self.raw_pair_count, conv)


def encode_first_appearance(values: Sequence[Hashable]) -> tuple[np.ndarray, tuple]:
    """Map arbitrary class ids to 0..C-1 in order of first appearance."""
    codes: dict = {}
    y = np.fromiter((codes.setdefault(v, len(codes)) for v in values), dtype=np.int64,
                    count=len(values))
    return y, tuple(codes)


# ---------------------------------------------------------------------------
# Zachary's karate club

# fmt: off
KARATE_EDGES = (
    (0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (0, 6), (0, 7), (0, 8), (0, 10),
    (0, 11), (0, 12), (0, 13), (0, 17), (0, 19), (0, 21), (0, 31), (1, 2),
    (1, 3), (1, 7), (1, 13), (1, 17), (1, 19), (1, 21), (1, 30), (2, 3), (2, 7),
    (2, 8), (2, 9), (2, 13), (2, 27), (2, 28), (2, 32), (3, 7), (3, 12),
    (3, 13), (4, 6), (4, 10), (5, 6), (5, 10), (5, 16), (6, 16), (8, 30),
    (8, 32), (8, 33), (9, 33), (13, 33), (14, 32), (14, 33), (15, 32),
    (15, 33), (18, 32), (18, 33), (19, 33), (20, 32), (20, 33), (22, 32),
    (22, 33), (23, 25), (23, 27), (23, 29), (23, 32), (23, 33), (24, 25),
    (24, 27), (24, 31), (25, 31), (26, 29), (26, 33), (27, 33), (28, 31),
    (28, 33), (29, 32), (29, 33), (30, 32), (30, 33), (31, 32), (31, 33),
    (32, 33),
)

# 0 = Mr. Hi (node 0), 1 = Officer (node 33).
KARATE_FACTION = (
    0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0, 1, 1, 0,
    0, 1, 0, 1, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1,
)
# fmt: on

# Club joined after the split. Member 8 sided with the officer's faction but
# took Mr. Hi's club; it is the only difference from the faction labels.
KARATE_CLUB = tuple(0 if i == 8 else c for i, c in enumerate(KARATE_FACTION))


def load_karate(labels: str = "faction") -> DatasetBundle:
    """The 34-member karate club, instructors at indices 0 and 33.

    ``labels="faction"`` (default) gives the two factions of the fission;
    ``labels="club"`` gives the club each member joined afterwards.
    """
    try:
        y = {"faction": KARATE_FACTION, "club": KARATE_CLUB}[labels]
    except KeyError:
        raise DatasetError(f"unknown karate labelling {labels!r}") from None
    g, relabel = build_graph(KARATE_EDGES, nodes=range(34))
    return DatasetBundle(
        name="karate",
        graph=g,
        relabel=relabel,
        labels=LabelAssignment(np.array(y), 2, ("Mr. Hi", "Officer")),
        raw_pair_count=len(KARATE_EDGES),
    )


# ---------------------------------------------------------------------------
# text parsing helpers

def _open_text(path: str | Path) -> io.TextIOBase:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"no such file: {path}")
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, encoding="utf-8")


def _records(path: str | Path) -> Iterator[tuple[int, list[str]]]:
    """Non-blank, non-comment lines split on whitespace, with 1-based line numbers."""
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, line.split()


def _parse_int(token: str, path, lineno: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise DatasetError(f"{path}:{lineno}: expected an integer, got {token!r}") from None


def _node_id(token: str):
    return int(token) if token.lstrip("-").isdigit() else token


# ---------------------------------------------------------------------------
# generic SNAP-style edge list + label file

def load_edge_list_dataset(
    edges_path: str | Path, labels_path: str | Path, name: str = "custom"
) -> DatasetBundle:
    """Load ``u v`` pairs plus ``node class`` lines.

    Node indices follow the order in which nodes are listed in the label
    file; class ids are encoded in first-appearance order. Every pair line,
    including self-loops and repeats, counts toward ``raw_pair_count``.
    """
    edges = []
    for lineno, tok in _records(edges_path):
        if len(tok) < 2:
            raise DatasetError(f"{edges_path}:{lineno}: expected two node ids")
        edges.append((_parse_int(tok[0], edges_path, lineno), _parse_int(tok[1], edges_path, lineno)))
    if not edges:
        raise DatasetError("empty graph")

    node_ids, classes = [], []
    labelled = set()
    for lineno, tok in _records(labels_path):
        if len(tok) != 2:
            raise DatasetError(f"{labels_path}:{lineno}: expected 'node label'")
        node = _parse_int(tok[0], labels_path, lineno)
        if node in labelled:
            raise DatasetError(f"{labels_path}:{lineno}: node {node} labelled twice")
        labelled.add(node)
        node_ids.append(node)
        classes.append(_parse_int(tok[1], labels_path, lineno))

    seen = {u for e in edges for u in e}
    unlabelled = sorted(seen - labelled)
    if unlabelled:
        raise DatasetError(f"nodes in {edges_path} missing a label: {unlabelled[:10]}")
    absent = [v for v in node_ids if v not in seen]
    if absent:
        raise DatasetError(f"labelled nodes absent from {edges_path}: {absent[:10]}")

    graph, relabel = build_graph(edges, nodes=node_ids)
    y, codes = encode_first_appearance(classes)
    labels = LabelAssignment(y, len(codes), tuple(str(c) for c in codes))
    return DatasetBundle(name, graph, relabel, labels, raw_pair_count=len(edges))


def write_edge_list_dataset(
    bundle: DatasetBundle, edges_path: str | Path, labels_path: str | Path
) -> None:
    """Write a bundle so that :func:`load_edge_list_dataset` rebuilds it exactly.

    Original identifiers are written when they are integers, contiguous
    indices otherwise. Nodes without edges get a self-loop line so that they
    stay present; the loader drops the loop again.
    """
    inv = bundle.relabel.inverse
    if not all(isinstance(v, (int, np.integer)) for v in inv):
        inv = tuple(range(bundle.graph.num_nodes))
    g = bundle.graph
    names = bundle.labels.class_names
    if names is not None and all(n.lstrip("-").isdigit() for n in names):
        tokens = [int(n) for n in names]
    else:
        tokens = list(range(bundle.labels.num_classes))
    with open(edges_path, "w", encoding="utf-8") as fh:
        for u, v in g.edge_pairs():
            fh.write(f"{inv[u]} {inv[v]}\n")
        for i in np.flatnonzero(np.diff(g.indptr) == 0):
            fh.write(f"{inv[i]} {inv[i]}\n")
    with open(labels_path, "w", encoding="utf-8") as fh:
        for i, c in enumerate(bundle.labels.ground_truth):
            fh.write(f"{inv[i]} {tokens[int(c)]}\n")


# ---------------------------------------------------------------------------
# citation datasets (.cites + .content)

# Cora class names and their integer targets, as used for the benchmark.
CORA_LABEL_ENCODING = {
    "Rule Learning": 0,
    "Neural Networks": 1,
    "Theory": 2,
    "Case Based": 3,
    "Probabilistic Methods": 4,
    "Genetic Algorithms": 5,
    "Reinforcement Learning": 6,
}


def _canonical_class(name: str) -> str:
    return name.replace("_", " ").strip()


def _explicit_encoding(mapping: Mapping[str, int]):
    table = {_canonical_class(k): v for k, v in mapping.items()}
    if sorted(table.values()) != list(range(len(table))):
        raise DatasetError("label encoding must map onto 0..C-1")
    names = tuple(sorted(table, key=table.get))

    def encode(classes):
        try:
            y = np.array([table[_canonical_class(c)] for c in classes], dtype=np.int64)
        except KeyError as exc:
            raise DatasetError(f"class name {exc.args[0]!r} not in the label encoding") from None
        return y, names

    return encode


def load_citation_dataset(
    cites_path: str | Path,
    content_path: str | Path,
    label_encoding: Mapping[str, int] | None = None,
    name: str = "citation",
) -> DatasetBundle:
    """Load a ``.cites`` / ``.content`` pair.

    Node order follows the content file. Class names are matched with
    underscores read as spaces, so ``Rule_Learning`` hits ``"Rule Learning"``.
    """
    node_ids, classes = [], []
    for lineno, tok in _records(content_path):
        if len(tok) < 2:
            raise DatasetError(f"{content_path}:{lineno}: expected 'id ... class'")
        node_ids.append(_node_id(tok[0]))
        classes.append(tok[-1])

    listed = set(node_ids)
    if len(listed) != len(node_ids):
        raise DatasetError(f"{content_path}: duplicate paper ids")
    edges = []
    for lineno, tok in _records(cites_path):
        if len(tok) != 2:
            raise DatasetError(f"{cites_path}:{lineno}: expected 'cited citing'")
        u, v = _node_id(tok[0]), _node_id(tok[1])
        for p in (u, v):
            if p not in listed:
                raise DatasetError(f"{cites_path}:{lineno}: paper {p!r} absent from {content_path}")
        edges.append((u, v))
    return _citation_bundle(name, edges, node_ids, classes, label_encoding)


def _citation_bundle(name, edges, node_ids, classes, label_encoding):
    if not edges:
        raise DatasetError("empty graph")
    graph, relabel = build_graph(edges, nodes=node_ids)
    if label_encoding is None:
        y, codes = encode_first_appearance([_canonical_class(c) for c in classes])
        labels = LabelAssignment(y, len(codes), codes)
    else:
        y, names = _explicit_encoding(label_encoding)(classes)
        labels = LabelAssignment(y, len(names), names)
    return DatasetBundle(name, graph, relabel, labels, raw_pair_count=len(edges))


def load_pubmed_diabetes(cites_path: str | Path, content_path: str | Path) -> DatasetBundle:
    """Load the tab-separated Pubmed-Diabetes distribution.

    ``NODE.paper.tab`` rows read ``id  label=k  w-...=x ... summary=...`` after
    two header lines; ``DIRECTED.cites.tab`` rows read
    ``edge-id  paper:a  |  paper:b`` after two header lines.
    """
    node_ids, classes = [], []
    with _open_text(content_path) as fh:
        for lineno, line in enumerate(fh, 1):
            if lineno <= 2 or not line.strip():
                continue
            tok = line.rstrip("\n").split("\t")
            label = next((t for t in tok[1:] if t.startswith("label=")), None)
            if label is None:
                raise DatasetError(f"{content_path}:{lineno}: no label= field")
            node_ids.append(_parse_int(tok[0], content_path, lineno))
            classes.append(label.split("=", 1)[1])

    listed = set(node_ids)
    edges = []
    with _open_text(cites_path) as fh:
        for lineno, line in enumerate(fh, 1):
            if lineno <= 2 or not line.strip():
                continue
            tok = line.split()
            if len(tok) != 4 or tok[2] != "|":
                raise DatasetError(f"{cites_path}:{lineno}: expected 'id paper:a | paper:b'")
            u = _parse_int(tok[1].split(":", 1)[-1], cites_path, lineno)
            v = _parse_int(tok[3].split(":", 1)[-1], cites_path, lineno)
            for p in (u, v):
                if p not in listed:
                    raise DatasetError(f"{cites_path}:{lineno}: paper {p} absent from {content_path}")
            edges.append((u, v))
    return _citation_bundle("pubmed", edges, node_ids, classes, None)


# ---------------------------------------------------------------------------
# lookup by benchmark name

_EMAIL_FILES = ("email-Eu-core.txt", "email-Eu-core-department-labels.txt")
_CORA_FILES = ("cora.cites", "cora.content")
_PUBMED_FILES = ("pubmed.cites", "pubmed.content")
_PUBMED_TAB_FILES = ("Pubmed-Diabetes.DIRECTED.cites.tab", "Pubmed-Diabetes.NODE.paper.tab")

DATASET_NAMES = ("karate", "email", "cora", "pubmed")


def _find(data_dir: Path, filename: str) -> Path | None:
    for candidate in (filename, filename + ".gz"):
        hits = sorted(data_dir.rglob(candidate))
        if hits:
            return hits[0]
    return None


def _find_pair(data_dir: Path, files: tuple[str, str]) -> tuple[Path, Path] | None:
    a, b = _find(data_dir, files[0]), _find(data_dir, files[1])
    return (a, b) if a and b else None


def locate_dataset(name: str, data_dir: str | Path) -> tuple[Path, Path] | None:
    """Find the two source files of a benchmark dataset under ``data_dir``."""
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        return None
    if name == "email":
        return _find_pair(data_dir, _EMAIL_FILES)
    if name == "cora":
        return _find_pair(data_dir, _CORA_FILES)
    if name == "pubmed":
        return _find_pair(data_dir, _PUBMED_FILES) or _find_pair(data_dir, _PUBMED_TAB_FILES)
    raise DatasetError(f"unknown dataset {name!r}")


def load_dataset(name: str, data_dir: str | Path | None = None) -> DatasetBundle:
    """Load a benchmark dataset by name; all but karate are read from ``data_dir``."""
    if name == "karate":
        return load_karate()
    if name not in DATASET_NAMES:
        raise DatasetError(f"unknown dataset {name!r}; expected one of {DATASET_NAMES}")
    if data_dir is None:
        raise DatasetError(f"{name!r} is read from disk; give a data directory or explicit files")
    paths = locate_dataset(name, data_dir)
    if paths is None:
        raise DatasetError(f"files for {name!r} not found under {data_dir}")
    first, second = paths
    if name == "email":
        return load_edge_list_dataset(first, second, name="email")
    if name == "cora":
        return load_citation_dataset(first, second, CORA_LABEL_ENCODING, name="cora")
    if first.name.endswith(".tab") or first.name.endswith(".tab.gz"):
        return load_pubmed_diabetes(first, second)
    return load_citation_dataset(first, second, name="pubmed")
