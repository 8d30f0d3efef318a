"""Message-passing encoder: node embeddings ``H`` and a sum-pooled ``h_G``.

Aggregation runs over in-neighbours (sources of edges into a node). Self
information enters through a separate ``W_self`` term rather than added
self-loops, so edge lists stay exactly as in the template.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from hlsrank import design as dm
from hlsrank.design import DesignGraph, KernelTemplate
from hlsrank.errors import ConfigError, ContractError
from hlsrank.layers import init_linear, init_mlp, linear, mlp
from hlsrank.numerics import (
    ParameterStore,
    Tensor,
    add,
    constant,
    hadamard,
    matmul,
    relu,
    repeat_rows,
    row_softmax,
    scale,
    sum_rows,
    transpose,
)

LAYER_KINDS = ("mean-aggregate", "attention-aggregate")
_MASKED = -1e9


@dataclass(frozen=True)
class EncoderConfig:
    layers: int = 3
    hidden_dim: int = 32
    layer_kind: str = "mean-aggregate"
    pragma_mlp_dims: tuple[int, ...] = (32,)

    def __post_init__(self):
        # 0 layers is allowed: features are encoded but never mixed
        if self.layers < 0 or self.hidden_dim < 1:
            raise ConfigError(f"need layers >= 0 and hidden_dim >= 1, got {self.layers}, {self.hidden_dim}")
        if self.layer_kind not in LAYER_KINDS:
            raise ConfigError(f"layer_kind must be one of {LAYER_KINDS}, got {self.layer_kind!r}")
        object.__setattr__(self, "pragma_mlp_dims", tuple(int(d) for d in self.pragma_mlp_dims))

    @classmethod
    def full_scale(cls) -> EncoderConfig:
        return cls(layers=7, hidden_dim=64, layer_kind="attention-aggregate", pragma_mlp_dims=(64,))


@dataclass(frozen=True)
class EncoderOutput:
    H: Tensor
    h_G: Tensor


@dataclass(frozen=True, eq=False)
class GraphStructure:
    """Constant matrices derived from a template's topology."""

    num_nodes: int
    mean_adj: Tensor  # row v: 1/indeg(v) on in-neighbours
    adj: Tensor  # 0/1 in-neighbour mask
    attn_bias: Tensor  # 0 on in-neighbours, large negative elsewhere
    plain_nodes: tuple[int, ...] = ()
    plain_scatter: Tensor | None = None
    pragma_scatter: Tensor | None = None

    @classmethod
    def from_template(cls, template: KernelTemplate) -> GraphStructure:
        base = cls.from_edges(template.num_nodes, template.edges)
        pragma = [s.attached_node for s in template.pragma_space.slots]
        plain = tuple(v for v in range(template.num_nodes) if v not in set(pragma))
        n = template.num_nodes
        return cls(
            n, base.mean_adj, base.adj, base.attn_bias, plain,
            constant(_scatter(n, plain)) if plain else None,
            constant(_scatter(n, pragma)) if pragma else None,
        )

    @classmethod
    def from_edges(cls, num_nodes: int, edges: Sequence[tuple]) -> GraphStructure:
        adj = np.zeros((num_nodes, num_nodes))
        for e in edges:
            src, dst = int(e[0]), int(e[1])
            if not (0 <= src < num_nodes and 0 <= dst < num_nodes):
                raise ContractError(f"edge ({src}, {dst}) out of range for {num_nodes} nodes")
            adj[dst, src] = 1.0
        deg = adj.sum(axis=1, keepdims=True)
        mean = np.divide(adj, deg, out=np.zeros_like(adj), where=deg > 0)
        bias = np.where(adj > 0, 0.0, _MASKED)
        return cls(num_nodes, constant(mean), constant(adj), constant(bias))


_structures: dict[int, tuple[KernelTemplate, GraphStructure]] = {}


def structure_of(template: KernelTemplate) -> GraphStructure:
    hit = _structures.get(id(template))
    if hit is None or hit[0] is not template:
        hit = (template, GraphStructure.from_template(template))
        _structures[id(template)] = hit
    return hit[1]


def init_encoder(store: ParameterStore, cfg: EncoderConfig, feature_dim: int, rng: np.random.Generator) -> None:
    d = cfg.hidden_dim
    init_linear(store, "enc.proj", feature_dim, d, rng)
    init_mlp(store, "enc.pragma", (feature_dim + dm.PRAGMA_EXTRA_DIM, *cfg.pragma_mlp_dims, d), rng)
    for layer in range(cfg.layers):
        p = f"enc.layer{layer}"
        init_linear(store, f"{p}.self", d, d, rng)
        init_linear(store, f"{p}.nbr", d, d, rng, bias=False)
        if cfg.layer_kind == "attention-aggregate":
            init_linear(store, f"{p}.query", d, d, rng)
            init_linear(store, f"{p}.key", d, d, rng)


def _scatter(n: int, rows: Sequence[int]) -> np.ndarray:
    s = np.zeros((n, len(rows)))
    s[list(rows), np.arange(len(rows))] = 1.0
    return s


def encode_features(g: DesignGraph, cfg: EncoderConfig, params: ParameterStore) -> Tensor:
    """Initial embeddings: shared projection for ordinary nodes, pragma MLP for pragma nodes."""
    if g.template.feature_dim != params["enc.proj.W"].shape[0]:
        raise ConfigError(
            f"feature dim {g.template.feature_dim} does not match encoder input {params['enc.proj.W'].shape[0]}"
        )
    st = structure_of(g.template)
    h = None
    if st.plain_nodes:
        x = constant(g.features[list(st.plain_nodes)])
        h = matmul(st.plain_scatter, linear(x, params, "enc.proj"))
    if g.pragma_nodes:
        hp = mlp(constant(g.pragma_features), params, "enc.pragma", len(cfg.pragma_mlp_dims) + 1)
        hp = matmul(st.pragma_scatter, hp)
        h = hp if h is None else add(h, hp)
    return h


def gnn_forward(features: Tensor, edges, cfg: EncoderConfig, params: ParameterStore) -> EncoderOutput:
    """``cfg.layers`` rounds of message passing followed by sum pooling.

    ``edges`` is a :class:`GraphStructure` or an iterable of ``(src, dst, ...)``.
    Nodes without in-neighbours receive a zero aggregate.
    """
    n = features.shape[0]
    st = edges if isinstance(edges, GraphStructure) else GraphStructure.from_edges(n, list(edges))
    if st.num_nodes != n:
        raise ContractError(f"structure has {st.num_nodes} nodes, features have {n}")
    h = features
    inv_sqrt_d = 1.0 / math.sqrt(cfg.hidden_dim)
    for layer in range(cfg.layers):
        p = f"enc.layer{layer}"
        if cfg.layer_kind == "mean-aggregate":
            agg = matmul(st.mean_adj, h)
        else:
            q = linear(h, params, f"{p}.query")
            k = linear(h, params, f"{p}.key")
            logits = add(scale(matmul(q, transpose(k)), inv_sqrt_d), st.attn_bias)
            # masking zeroes non-neighbours and the whole row of isolated nodes
            agg = matmul(hadamard(row_softmax(logits), st.adj), h)
        h = relu(
            add(
                add(matmul(h, params[f"{p}.self.W"]), matmul(agg, params[f"{p}.nbr.W"])),
                repeat_rows(params[f"{p}.self.b"], n),
            )
        )
    return EncoderOutput(h, sum_rows(h))


def encode(g: DesignGraph, cfg: EncoderConfig, params: ParameterStore) -> EncoderOutput:
    return gnn_forward(encode_features(g, cfg, params), structure_of(g.template), cfg, params)
