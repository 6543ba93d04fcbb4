"""Two-layer GCN and GAT node classifiers on featureless graphs.

With ``input_mode="identity"`` node ``i`` is fed the one-hot vector e_i.
That product is never formed: the first layer's messages are just the rows
of its weight matrix, so pass ``h=None`` to a first layer.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .graph import Graph, NormalizedAdjacency, normalize_adjacency

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    kind: Literal["gcn", "gat"] = "gcn"
    hidden_width: int = 16
    layer_count: int = 2
    heads: int = 8
    head_width: int = 8
    output_heads: int = 8
    input_mode: Literal["identity", "zeros"] = "identity"
    bias: bool = False
    dropout: float = 0.0
    attention_dropout: float = 0.6
    leaky_slope: float = 0.2

    def __post_init__(self):
        if self.kind not in ("gcn", "gat"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.layer_count != 2:
            raise ValueError("only two-layer models are supported")
        if self.input_mode not in ("identity", "zeros"):
            raise ValueError(f"unknown input mode {self.input_mode!r}")
        if min(self.hidden_width, self.heads, self.head_width, self.output_heads) < 1:
            raise ValueError("widths and head counts must be positive")
        if not (0.0 <= self.dropout < 1.0 and 0.0 <= self.attention_dropout < 1.0):
            raise ValueError("dropout rates must lie in [0, 1)")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    lr: float = 0.01
    repetitions: int = 10
    seed: int = 0
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")


# ---------------------------------------------------------------------------
# layers

@dataclass
class GcnLayerParams:
    weight: Tensor
    bias: Tensor | None = None
    activation: Literal["relu", "none"] = "relu"

    def parameters(self) -> list[Tensor]:
        return [self.weight] + ([self.bias] if self.bias is not None else [])


def _activate(x: Tensor, activation: str) -> Tensor:
    if activation == "relu":
        return ag.relu(x)
    if activation == "elu":
        return ag.elu(x)
    if activation == "none":
        return x
    raise ValueError(f"unknown activation {activation!r}")


def _transform(h: Tensor | None, weight: Tensor, n: int) -> Tensor:
    if h is None:
        if weight.shape[0] != n:
            raise ValueError(f"identity input needs {n} weight rows, got {weight.shape}")
        return weight
    return ag.matmul(h, weight)


def gcn_layer_forward(norm_adj: NormalizedAdjacency, h: Tensor | None, p: GcnLayerParams) -> Tensor:
    """act(Â H W + b) for a normalized adjacency Â."""
    out = ag.spmm(norm_adj, _transform(h, p.weight, norm_adj.num_nodes))
    if p.bias is not None:
        out = out + p.bias
    return _activate(out, p.activation)


@dataclass(frozen=True, eq=False)
class Neighborhoods:
    """CSR neighbour lists that attention runs over (receiver rows)."""

    indptr: np.ndarray
    indices: np.ndarray
    rows: np.ndarray

    @property
    def num_nodes(self) -> int:
        return len(self.indptr) - 1


def attention_neighborhoods(g: Graph, self_loops: bool = True) -> Neighborhoods:
    if self_loops:
        return Neighborhoods(*g.with_self_loops())
    return Neighborhoods(g.indptr, g.indices, g.rows)


@dataclass
class GatLayerParams:
    weight: Tensor          # F_in x (heads * head_width)
    att_self: Tensor        # heads x head_width, applied to the receiver's message
    att_neighbor: Tensor    # heads x head_width, applied to the sender's message
    heads: int
    merge: Literal["concatenate", "average"] = "concatenate"
    leaky_slope: float = 0.2
    activation: Literal["elu", "relu", "none"] = "elu"
    bias: Tensor | None = None

    def parameters(self) -> list[Tensor]:
        extra = [self.bias] if self.bias is not None else []
        return [self.weight, self.att_self, self.att_neighbor] + extra


def gat_attention(nb: Neighborhoods, m: Tensor, p: GatLayerParams) -> Tensor:
    """Attention coefficients, one column per head, aligned with ``nb.indices``."""
    s_recv = ag.head_scores(m, p.att_self)
    s_send = ag.head_scores(m, p.att_neighbor)
    logits = ag.leaky_relu(
        ag.gather_rows(s_recv, nb.rows) + ag.gather_rows(s_send, nb.indices), p.leaky_slope
    )
    return ag.segment_softmax(logits, nb.indptr)


def gat_layer_forward(
    nb: Neighborhoods,
    h: Tensor | None,
    p: GatLayerParams,
    return_attention: bool = False,
    attention_dropout: float = 0.0,
    rng: np.random.Generator | None = None,
):
    """Multi-head graph attention.

    Per head: messages ``m_j = W^T h_j``, logits
    ``LeakyReLU(a_self . m_i + a_neighbor . m_j)`` softmaxed over each
    receiver's neighbourhood, output ``act(sum_j alpha_ij m_j)``; heads are
    concatenated or averaged. With ``rng`` given, coefficients are dropped
    at rate ``attention_dropout`` after normalization.
    """
    m = _transform(h, p.weight, nb.num_nodes)
    alpha = gat_attention(nb, m, p)
    weights = _dropout(alpha, attention_dropout, rng)
    out = ag.edge_aggregate(weights, m, nb.indptr, nb.indices)
    if p.merge == "average":
        out = ag.mean_heads(out, p.heads)
    elif p.merge != "concatenate":
        raise ValueError(f"unknown merge {p.merge!r}")
    if p.bias is not None:
        out = out + p.bias
    out = _activate(out, p.activation)
    return (out, alpha) if return_attention else out


# ---------------------------------------------------------------------------
# models

def _dropout(x: Tensor | None, rate: float, rng: np.random.Generator | None) -> Tensor | None:
    if x is None or rate == 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return ag.mul(x, keep)


def _identity_dropout(weight: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    """Dropout on one-hot inputs, i.e. whole rows of the first weight matrix."""
    if rate == 0.0 or rng is None:
        return weight
    keep = (rng.random((weight.shape[0], 1)) >= rate) / (1.0 - rate)
    return ag.mul(weight, keep)


class _TwoLayer:
    spec: ModelSpec
    num_nodes: int
    layers: list

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]

    def inputs(self) -> Tensor | None:
        if self.spec.input_mode == "identity":
            return None
        return Tensor(np.zeros((self.num_nodes, 1)))

    def _first_layer(self, rng):
        """First-layer parameters and inputs with input dropout applied."""
        first = self.layers[0]
        x = self.inputs()
        if x is None and rng is not None and self.spec.dropout:
            first = replace(first, weight=_identity_dropout(first.weight, self.spec.dropout, rng))
        else:
            x = _dropout(x, self.spec.dropout, rng)
        return first, x


class GCN(_TwoLayer):
    def __init__(self, spec: ModelSpec, g: Graph, num_classes: int, rng: np.random.Generator):
        self.spec = spec
        self.num_nodes = g.num_nodes
        self.adj = normalize_adjacency(g, "symmetric", add_self_loops=True)
        fan_in = g.num_nodes if spec.input_mode == "identity" else 1
        h = spec.hidden_width
        zeros = (lambda k: Tensor(np.zeros(k), requires_grad=True)) if spec.bias else (lambda k: None)
        self.layers = [
            GcnLayerParams(ag.glorot_uniform(rng, fan_in, h), zeros(h), "relu"),
            GcnLayerParams(ag.glorot_uniform(rng, h, num_classes), zeros(num_classes), "none"),
        ]

    def forward(self, rng: np.random.Generator | None = None) -> Tensor:
        """Log-probabilities; ``rng`` switches dropout on (training passes)."""
        first, x = self._first_layer(rng)
        x = gcn_layer_forward(self.adj, x, first)
        x = _dropout(x, self.spec.dropout, rng)
        x = gcn_layer_forward(self.adj, x, self.layers[1])
        return ag.log_softmax_rows(x)


class GAT(_TwoLayer):
    def __init__(self, spec: ModelSpec, g: Graph, num_classes: int, rng: np.random.Generator):
        self.spec = spec
        self.num_nodes = g.num_nodes
        self.nb = attention_neighborhoods(g, self_loops=True)
        fan_in = g.num_nodes if spec.input_mode == "identity" else 1
        heads, width = spec.heads, spec.head_width
        out_heads = spec.output_heads

        def att(k, w):
            return ag.glorot_uniform(rng, 2 * w, 1, shape=(k, w))

        def bias(k):
            return Tensor(np.zeros(k), requires_grad=True) if spec.bias else None

        self.layers = [
            GatLayerParams(
                ag.glorot_uniform(rng, fan_in, heads * width), att(heads, width), att(heads, width),
                heads, "concatenate", spec.leaky_slope, "elu", bias(heads * width),
            ),
            GatLayerParams(
                ag.glorot_uniform(rng, heads * width, out_heads * num_classes),
                att(out_heads, num_classes), att(out_heads, num_classes),
                out_heads, "average", spec.leaky_slope, "none", bias(num_classes),
            ),
        ]

    def forward(self, rng: np.random.Generator | None = None) -> Tensor:
        """Log-probabilities; ``rng`` switches dropout on (training passes)."""
        att_rate = self.spec.attention_dropout
        first, x = self._first_layer(rng)
        x = gat_layer_forward(self.nb, x, first, attention_dropout=att_rate, rng=rng)
        x = _dropout(x, self.spec.dropout, rng)
        x = gat_layer_forward(self.nb, x, self.layers[1], attention_dropout=att_rate, rng=rng)
        return ag.log_softmax_rows(x)


def build_model(spec: ModelSpec, g: Graph, num_classes: int, seed: int = 0):
    """Two-layer GCN or GAT with Glorot-uniform weights drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    cls = GCN if spec.kind == "gcn" else GAT
    return cls(spec, g, num_classes, rng)


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainResult:
    predictions: np.ndarray
    log_probs: np.ndarray
    losses: list[float] = field(default_factory=list)

    def train_accuracy(self, labels, train_mask) -> float:
        idx = np.asarray(train_mask)
        y = np.asarray(labels.ground_truth)
        return float(np.mean(self.predictions[idx] == y[idx]))


def train(model, bundle, train_mask, cfg: TrainConfig, seed: int | None = None) -> TrainResult:
    """Full-batch transductive training with Adam on the NLL of ``train_mask``."""
    y = np.asarray(bundle.labels.ground_truth)
    mask = np.asarray(train_mask)
    if mask.dtype == bool:
        mask = np.flatnonzero(mask)
    if len(mask) == 0:
        raise ValueError("no training nodes")
    params = model.parameters()
    opt = ag.Adam(params, lr=cfg.lr)
    uses_dropout = model.spec.dropout or model.spec.attention_dropout
    drop_rng = np.random.default_rng(cfg.seed if seed is None else seed) if uses_dropout else None
    losses = []
    for epoch in range(cfg.epochs):
        opt.zero_grad()
        try:
            loss = ag.nll_loss(model.forward(drop_rng), y, mask)
        except ag.NonFiniteError as exc:
            raise TrainingError(f"non-finite values at epoch {epoch}: {exc}") from exc
        value = float(loss.value)
        if not math.isfinite(value):
            raise TrainingError(f"non-finite loss {value} at epoch {epoch}")
        losses.append(value)
        loss.backward()
        if cfg.weight_decay:
            for p in params:
                p.grad = p.grad + cfg.weight_decay * p.value
        opt.step()
    log_probs = model.forward().value
    log.debug("trained %d epochs, final loss %.4g", cfg.epochs, losses[-1])
    return TrainResult(np.argmax(log_probs, axis=1), log_probs, losses)


def train_and_predict(model, bundle, train_mask, cfg: TrainConfig) -> np.ndarray:
    return train(model, bundle, train_mask, cfg).predictions
