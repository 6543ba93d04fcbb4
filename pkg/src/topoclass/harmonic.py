"""Harmonic-function label propagation.

Labelled nodes are clamped to their one-hot class vector; every other node
repeatedly takes the mean of its neighbours' class scores (Jacobi sweeps,
so the result does not depend on node order).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .graph import Graph, degrees


@dataclass(frozen=True)
class HarmonicConfig:
    max_iterations: int = 100
    tolerance: float = 1e-9

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True, eq=False)
class HarmonicSolution:
    scores: np.ndarray
    predictions: np.ndarray
    residual_history: list[float] = field(default_factory=list)
    converged: bool = False
    # nodes in components without any labelled node; they keep uniform scores
    unreachable: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def iterations(self) -> int:
        return len(self.residual_history)


TIE_TOLERANCE = 1e-12


def argmax_lowest(scores: np.ndarray, atol: float = TIE_TOLERANCE) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest class index.

    Scores within ``atol`` of the row maximum count as tied, so a tie in
    exact arithmetic is not split by summation-order rounding.
    """
    top = scores.max(axis=1, keepdims=True)
    return np.argmax(scores >= top - atol, axis=1)


def _train_indices(train_mask, n: int) -> np.ndarray:
    idx = np.asarray(train_mask)
    if idx.dtype == bool:
        idx = np.flatnonzero(idx)
    idx = np.unique(idx.astype(np.int64))
    if len(idx) == 0:
        raise ValueError("no training nodes")
    if idx[0] < 0 or idx[-1] >= n:
        raise ValueError("training node out of range")
    return idx


def _unreached(g: Graph, seeds: np.ndarray) -> np.ndarray:
    """Nodes whose connected component holds no seed."""
    _, comp = connected_components(g.adjacency(), directed=False)
    has_seed = np.zeros(comp.max() + 1, dtype=bool)
    has_seed[comp[seeds]] = True
    return np.flatnonzero(~has_seed[comp])


def harmonic_classify(
    g: Graph, labels, train_mask, cfg: HarmonicConfig | None = None
) -> HarmonicSolution:
    """Classify every node of ``g`` from the labels of the nodes in ``train_mask``.

    Unlabelled nodes start from the uniform distribution. An isolated
    unlabelled node is assigned the most frequent training class; other
    nodes whose component contains no labelled node keep uniform scores and
    resolve to class 0, and are listed in ``HarmonicSolution.unreachable``.
    """
    cfg = cfg or HarmonicConfig()
    n = g.num_nodes
    y = np.asarray(labels.ground_truth)
    c = labels.num_classes
    train = _train_indices(train_mask, n)

    clamp = np.zeros((len(train), c))
    clamp[np.arange(len(train)), y[train]] = 1.0
    h = np.full((n, c), 1.0 / c)
    h[train] = clamp

    deg = degrees(g).astype(np.float64)
    inv_deg = np.divide(1.0, deg, out=np.zeros(n), where=deg > 0)
    # D^-1 A with labelled and isolated rows zeroed: those rows are never updated
    free = np.ones(n, dtype=bool)
    free[train] = False
    free &= deg > 0
    weights = sp.diags(inv_deg * free) @ g.adjacency()
    weights = weights.tocsr()

    history: list[float] = []
    converged = False
    for _ in range(cfg.max_iterations):
        nxt = weights @ h
        nxt[~free] = h[~free]
        residual = float(np.abs(nxt - h).max())
        h = nxt
        history.append(residual)
        if residual < cfg.tolerance:
            converged = True
            break

    isolated = np.flatnonzero((deg == 0) & ~np.isin(np.arange(n), train))
    if len(isolated):
        majority = np.bincount(y[train], minlength=c).argmax()
        h[isolated] = 0.0
        h[isolated, majority] = 1.0

    unreachable = np.setdiff1d(_unreached(g, train), isolated)
    if len(unreachable):
        warnings.warn(
            f"{len(unreachable)} nodes lie in components without a labelled node",
            RuntimeWarning,
            stacklevel=2,
        )
    return HarmonicSolution(h, argmax_lowest(h), history, converged, unreachable)

