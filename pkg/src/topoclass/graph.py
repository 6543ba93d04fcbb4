"""Undirected graphs in compressed sparse row form, plus the normalization
and topology statistics every classifier in the package builds on."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Iterable, Literal, Sequence

import numpy as np
import scipy.sparse as sp


class GraphError(ValueError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable simple undirected graph.

    ``indices[indptr[i]:indptr[i + 1]]`` are the neighbours of node ``i`` in
    strictly increasing order. Every edge is stored in both directions and
    self-loops are never stored.
    """

    num_nodes: int
    indptr: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "indptr", _frozen(np.asarray(self.indptr, dtype=np.int64)))
        object.__setattr__(self, "indices", _frozen(np.asarray(self.indices, dtype=np.int64)))
        if self.indptr.shape != (self.num_nodes + 1,):
            raise GraphError("indptr must have length num_nodes + 1")
        if self.indptr[0] != 0 or self.indptr[-1] != len(self.indices):
            raise GraphError("indptr does not span the index array")

    @classmethod
    def from_edges(cls, num_nodes: int, src: np.ndarray, dst: np.ndarray) -> "Graph":
        """Build from contiguous endpoint arrays; symmetrizes, dedups, drops loops."""
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        if len(src) and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= num_nodes):
            raise GraphError("edge endpoint out of range")
        keep = src != dst
        src, dst = src[keep], dst[keep]
        rows = np.concatenate([src, dst])
        cols = np.concatenate([dst, src])
        if len(rows):
            keys = np.unique(rows * num_nodes + cols)
            rows, cols = np.divmod(keys, num_nodes)
        counts = np.bincount(rows, minlength=num_nodes)
        indptr = np.zeros(num_nodes + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        return cls(num_nodes, indptr, cols)

    @property
    def num_edges(self) -> int:
        """Number of undirected edges."""
        return len(self.indices) // 2

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    @cached_property
    def rows(self) -> np.ndarray:
        """Source node of every stored (directed) entry, aligned with ``indices``."""
        return _frozen(np.repeat(np.arange(self.num_nodes), np.diff(self.indptr)))

    def edge_pairs(self) -> np.ndarray:
        """Unordered edges as an ``(E, 2)`` array with ``u < v``."""
        mask = self.rows < self.indices
        return np.column_stack([self.rows[mask], self.indices[mask]])

    def adjacency(self, self_loops: bool = False) -> sp.csr_matrix:
        a = sp.csr_matrix(
            (np.ones(len(self.indices)), self.indices, self.indptr),
            shape=(self.num_nodes, self.num_nodes),
        )
        if self_loops:
            a = (a + sp.identity(self.num_nodes, format="csr")).tocsr()
            a.sort_indices()
        return a

    def with_self_loops(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """CSR structure ``(indptr, indices, rows)`` of A + I, columns sorted."""
        a = self.adjacency(self_loops=True)
        rows = np.repeat(np.arange(self.num_nodes), np.diff(a.indptr))
        return a.indptr.astype(np.int64), a.indices.astype(np.int64), rows

    def permute(self, perm: Sequence[int]) -> "Graph":
        """Graph with node ``i`` renamed to ``perm[i]``."""
        perm = np.asarray(perm, dtype=np.int64)
        return Graph.from_edges(self.num_nodes, perm[self.rows], perm[self.indices])


@dataclass(frozen=True)
class RelabelMap:
    """Bijection between original node identifiers and contiguous indices."""

    inverse: tuple
    forward: dict = field(repr=False)

    @classmethod
    def from_order(cls, ids: Iterable[Hashable]) -> "RelabelMap":
        inverse = tuple(ids)
        forward = {v: i for i, v in enumerate(inverse)}
        if len(forward) != len(inverse):
            raise GraphError("duplicate node identifiers")
        return cls(inverse, forward)

    def __len__(self) -> int:
        return len(self.inverse)

    def __getitem__(self, original: Hashable) -> int:
        return self.forward[original]


def build_graph(
    edge_list: Iterable[tuple[Hashable, Hashable]],
    nodes: Iterable[Hashable] | None = None,
) -> tuple[Graph, RelabelMap]:
    """Symmetrize and relabel an edge list to contiguous indices.

    Identifiers are numbered in order of first appearance. When ``nodes`` is
    given its order takes precedence, and nodes without edges are kept.

    >>> g, m = build_graph([(10, 20), (20, 30)])
    >>> g.num_nodes, g.num_edges, m.forward
    (3, 2, {10: 0, 20: 1, 30: 2})
    """
    forward: dict = {}
    if nodes is not None:
        for v in nodes:
            forward.setdefault(v, len(forward))
    src, dst = [], []
    for u, v in edge_list:
        src.append(forward.setdefault(u, len(forward)))
        dst.append(forward.setdefault(v, len(forward)))
    if not forward:
        raise GraphError("empty graph")
    relabel = RelabelMap(tuple(forward), forward)
    return Graph.from_edges(len(forward), np.array(src), np.array(dst)), relabel


def degrees(g: Graph) -> np.ndarray:
    return np.diff(g.indptr)


NormKind = Literal["row", "symmetric"]


@dataclass(frozen=True, eq=False)
class NormalizedAdjacency:
    """Real-valued CSR matrix D^-1 Â or D^-1/2 Â D^-1/2."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    kind: NormKind
    self_loops_added: bool

    @property
    def num_nodes(self) -> int:
        return len(self.indptr) - 1

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        n = self.num_nodes
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=(n, n))

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def normalize_adjacency(
    g: Graph, kind: NormKind = "symmetric", add_self_loops: bool = True
) -> NormalizedAdjacency:
    if kind not in ("row", "symmetric"):
        raise ValueError(f"unknown normalization kind {kind!r}")
    if add_self_loops:
        indptr, indices, rows = g.with_self_loops()
    else:
        indptr, indices, rows = g.indptr, g.indices, g.rows
    deg = np.diff(indptr).astype(np.float64)
    if np.any(deg == 0):
        raise GraphError("isolated node under normalization")
    if kind == "row":
        data = 1.0 / deg[rows]
    else:
        inv_sqrt = 1.0 / np.sqrt(deg)
        data = inv_sqrt[rows] * inv_sqrt[indices]
    return NormalizedAdjacency(
        _frozen(indptr), _frozen(indices), _frozen(data), kind, add_self_loops
    )


def average_degree(
    g: Graph,
    convention: Literal["undirected", "raw_pairs"] = "undirected",
    raw_pair_count: int | None = None,
) -> float:
    """``2E/N`` for ``undirected``; ``E_raw/N`` for ``raw_pairs``."""
    if convention == "undirected":
        return 2.0 * g.num_edges / g.num_nodes
    if convention == "raw_pairs":
        if raw_pair_count is None:
            raise ValueError("raw_pairs convention needs the raw pair count")
        return raw_pair_count / g.num_nodes
    raise ValueError(f"unknown degree convention {convention!r}")


def triangles(g: Graph) -> np.ndarray:
    """Number of triangles through each node."""
    a = g.adjacency()
    # (A @ A)[i, j] counts common neighbours; keep only entries on edges
    closed = (a @ a).multiply(a)
    return np.asarray(closed.sum(axis=1)).ravel() / 2.0


def clustering_coefficients(g: Graph) -> np.ndarray:
    d = degrees(g).astype(np.float64)
    pairs = d * (d - 1) / 2.0
    out = np.zeros(g.num_nodes)
    np.divide(triangles(g), pairs, out=out, where=pairs > 0)
    return out


def average_clustering_coefficient(g: Graph) -> float:
    """Mean local clustering; nodes of degree < 2 count as zero."""
    return float(clustering_coefficients(g).mean())


@dataclass(frozen=True)
class DatasetStats:
    num_nodes: int
    num_edges: int
    num_clusters: int
    avg_clustering_coefficient: float
    avg_degree: float
    # distinct unordered pairs after dropping loops and repeats
    undirected_edges: int = 0

    def as_dict(self) -> dict:
        return {
            "num_nodes": self.num_nodes,
            "num_edges": self.num_edges,
            "undirected_edges": self.undirected_edges,
            "num_clusters": self.num_clusters,
            "avg_clustering_coefficient": self.avg_clustering_coefficient,
            "avg_degree": self.avg_degree,
        }


def dataset_stats(
    g: Graph,
    labels,
    raw_pair_count: int | None = None,
    degree_convention: Literal["undirected", "raw_pairs"] = "undirected",
) -> DatasetStats:
    """Table-style summary of a labelled graph.

    ``num_edges`` reports ``raw_pair_count`` when the loader kept one (the
    count of pairs as listed in the source file), else the undirected count;
    ``undirected_edges`` is always the collapsed count.
    """
    if len(labels.ground_truth) != g.num_nodes:
        raise ValueError("labels do not cover every node")
    return DatasetStats(
        num_nodes=g.num_nodes,
        num_edges=g.num_edges if raw_pair_count is None else raw_pair_count,
        num_clusters=labels.num_classes,
        avg_clustering_coefficient=average_clustering_coefficient(g),
        avg_degree=average_degree(g, degree_convention, raw_pair_count),
        undirected_edges=g.num_edges,
    )
