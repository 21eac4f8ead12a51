"""Relation-enhanced graph transformer over concept nodes.

For heads ``h`` with query/key projections ``Wq_h``, ``Wk_h`` the pre-softmax
score between concepts ``i`` and ``j`` is::

    s_ij = ((c_i + r_fwd_ij) Wq_h) . ((c_j + r_bwd_ij) Wk_h) / sqrt(head_dim)

where ``[r_fwd_ij; r_bwd_ij]`` is the relation split of the path encoding of
``(i, j)``. Relation layers are followed by vanilla self-attention layers
over the node states, and the graph vector is the sum of the final states.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .config import ModelConfig
from .embeddings import WordVectors
from .graphs import IntegratedGraph
from .knowledge import normalize_concept
from .relations import split_relation

__all__ = [
    "NodeEmbeddingTable",
    "AttentionParams",
    "GraphEncoderOutput",
    "GraphEncoder",
    "init_node_embeddings",
    "node_positions",
    "relation_scores",
    "vanilla_scores",
    "relation_attention_scores",
    "attention_layer",
    "encode_graph",
]

log = logging.getLogger("acpgraph.transformer")


class NodeEmbeddingTable:
    """Fixed word vectors plus learned absolute-position embeddings."""

    def __init__(self, word_vectors: WordVectors, max_nodes: int, dim: int, rng: np.random.Generator):
        if word_vectors.dim != dim:
            raise ValueError(f"word vectors have dimension {word_vectors.dim}, model needs {dim}")
        self.word_vectors = word_vectors
        self.max_nodes = max_nodes
        self.position = Parameter("node.position", ad.glorot_uniform(rng, (max_nodes, dim)))

    @property
    def dim(self) -> int:
        return self.word_vectors.dim

    def parameters(self) -> list[Parameter]:
        return [self.position]


def node_positions(graph: IntegratedGraph) -> np.ndarray:
    """Position index of each stored node: its rank in breadth-first order from the root."""
    rank = {nid: k for k, nid in enumerate(graph.bfs_order())}
    return np.array([rank[n.id] for n in graph.nodes], dtype=np.int64)


def node_word_matrix(graph: IntegratedGraph, word_vectors: WordVectors) -> np.ndarray:
    return np.stack([word_vectors.lookup(normalize_concept(n.label)) for n in graph.nodes])


def init_node_embeddings(graph: IntegratedGraph, table: NodeEmbeddingTable,
                         words: np.ndarray | None = None, positions: np.ndarray | None = None) -> Tensor:
    """c_i = word_vector(label_i) + position_embedding(bfs rank of i); shape (N, d)."""
    if len(graph) > table.max_nodes:
        raise ValueError(f"graph has {len(graph)} nodes; the position table holds {table.max_nodes}")
    if words is None:
        words = node_word_matrix(graph, table.word_vectors)
    if positions is None:
        positions = node_positions(graph)
    return ad.tensor(words) + ad.take(table.position, positions)


class AttentionParams:
    """Weights of one attention block (relation-aware when ``relation_dim`` is given)."""

    def __init__(self, prefix: str, dim: int, heads: int, ffn_dim: int, rng: np.random.Generator,
                 relation_dim: int | None = None):
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.dim, self.heads = dim, heads
        g = lambda name, shape: Parameter(f"{prefix}.{name}", ad.glorot_uniform(rng, shape))  # noqa: E731
        self.wq = g("wq", (dim, dim))
        self.wk = g("wk", (dim, dim))
        self.wv = g("wv", (dim, dim))
        self.wo = g("wo", (dim, dim))
        self.w_r = g("w_r", (relation_dim, 2 * dim)) if relation_dim else None
        self.w1 = g("ffn.w1", (dim, ffn_dim))
        self.b1 = Parameter(f"{prefix}.ffn.b1", np.zeros(ffn_dim))
        self.w2 = g("ffn.w2", (ffn_dim, dim))
        self.b2 = Parameter(f"{prefix}.ffn.b2", np.zeros(dim))
        self.ln1_g = Parameter(f"{prefix}.ln1.gamma", np.ones(dim))
        self.ln1_b = Parameter(f"{prefix}.ln1.beta", np.zeros(dim))
        self.ln2_g = Parameter(f"{prefix}.ln2.gamma", np.ones(dim))
        self.ln2_b = Parameter(f"{prefix}.ln2.beta", np.zeros(dim))

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    def parameters(self) -> list[Parameter]:
        ps = [self.wq, self.wk, self.wv, self.wo]
        if self.w_r is not None:
            ps.append(self.w_r)
        return ps + [self.w1, self.b1, self.w2, self.b2, self.ln1_g, self.ln1_b, self.ln2_g, self.ln2_b]


def _pairwise(x: Tensor, n: int, axis: int) -> Tensor:
    """(N, d) -> (N, N, d) repeating rows along ``axis`` (0: x[j] at [i, j]; 1: x[i] at [i, j])."""
    d = x.shape[-1]
    if axis == 1:
        return ad.broadcast_to(ad.reshape(x, (n, 1, d)), (n, n, d))
    return ad.broadcast_to(ad.reshape(x, (1, n, d)), (n, n, d))


def relation_scores(c: Tensor, r_fwd: Tensor | None, r_bwd: Tensor | None, wq: Tensor, wk: Tensor,
                    heads: int, scale: bool = True) -> Tensor:
    """Pre-softmax scores, shape (heads, N, N).

    ``r_fwd``/``r_bwd`` are (N, N, d); passing ``None`` gives vanilla attention
    computed with the same arithmetic.
    """
    n, d = c.shape
    if r_fwd is not None and (r_fwd.shape != (n, n, d) or r_bwd is None or r_bwd.shape != (n, n, d)):
        raise ad.ShapeError(f"relation_scores: relation tensors must be {(n, n, d)} for nodes {c.shape}")
    hd = wq.shape[1] // heads
    q = _pairwise(c @ wq, n, axis=1)
    k = _pairwise(c @ wk, n, axis=0)
    if r_fwd is not None:
        q = q + r_fwd @ wq
        k = k + r_bwd @ wk
    prod = ad.reshape(q * k, (n, n, heads, hd))
    s = ad.transpose(ad.sum(prod, axis=3), (2, 0, 1))
    if scale:
        s = ad.scale(s, 1.0 / np.sqrt(hd))
    return s


def vanilla_scores(c: Tensor, wq: Tensor, wk: Tensor, heads: int, scale: bool = True) -> Tensor:
    return relation_scores(c, None, None, wq, wk, heads, scale)


def relation_attention_scores(c: Tensor, r_fwd: Tensor, r_bwd: Tensor, params: AttentionParams, head: int,
                              scale: bool = True) -> Tensor:
    """Row-softmaxed (N, N) attention of one head."""
    hd = params.head_dim
    cols = slice(head * hd, (head + 1) * hd)
    s = relation_scores(c, r_fwd, r_bwd, params.wq[:, cols], params.wk[:, cols], 1, scale)
    return ad.softmax(ad.reshape(s, s.shape[1:]), axis=-1)


def attention_layer(c: Tensor, rel: Tensor | None, params: AttentionParams, scale: bool = True
                    ) -> tuple[Tensor, np.ndarray]:
    """One post-norm transformer block; returns new states and (heads, N, N) attention.

    ``rel`` is the (N, N, 2*hidden) relation encoding, or ``None`` for a vanilla layer.
    """
    n, d = c.shape
    h, hd = params.heads, params.head_dim
    if rel is not None:
        if params.w_r is None:
            raise ValueError("relation encodings given to a layer without W_r")
        if rel.shape[:2] != (n, n):
            raise ad.ShapeError(f"attention_layer: relation tensor {rel.shape} does not cover {n} nodes")
        r_fwd, r_bwd = split_relation(rel, params.w_r)
    else:
        r_fwd = r_bwd = None
    att = ad.softmax(relation_scores(c, r_fwd, r_bwd, params.wq, params.wk, h, scale), axis=-1)
    v = ad.transpose(ad.reshape(c @ params.wv, (n, h, hd)), (1, 0, 2))
    mixed = ad.reshape(ad.transpose(att @ v, (1, 0, 2)), (n, d))
    x = ad.layer_norm(c + mixed @ params.wo, params.ln1_g, params.ln1_b)
    hidden = ad.relu(x @ params.w1 + ad.broadcast_to(params.b1, (n, params.b1.shape[0])))
    ff = hidden @ params.w2 + ad.broadcast_to(params.b2, (n, d))
    return ad.layer_norm(x + ff, params.ln2_g, params.ln2_b), att.data


@dataclass
class GraphEncoderOutput:
    node_states: Tensor
    graph_vector: Tensor
    attention_maps: np.ndarray  # (layers, heads, N, N)
    node_ids: list[str]
    relation_layers: int

    def aggregated_attention(self, layer: int | None = None, heads: str = "mean") -> np.ndarray:
        """(N, N) map; default is the last relation layer averaged over heads."""
        if layer is None:
            layer = self.relation_layers - 1
        maps = self.attention_maps[layer]
        if heads == "mean":
            return maps.mean(axis=0)
        if heads == "max":
            return maps.max(axis=0)
        return maps[int(heads)]


class GraphEncoder:
    """Owns every graph-side parameter: positions, relation encoder hook, layers."""

    def __init__(self, config: ModelConfig, word_vectors: WordVectors, relation_dim: int,
                 rng: np.random.Generator):
        self.config = config
        d = config.model_dim
        self.table = NodeEmbeddingTable(word_vectors, config.max_nodes, d, rng)
        self.relation_layers = [AttentionParams(f"rel{k}", d, config.heads, config.ffn_dim, rng, relation_dim)
                                for k in range(config.relation_layers)]
        self.vanilla_layers = [AttentionParams(f"van{k}", d, config.heads, config.ffn_dim, rng)
                               for k in range(config.vanilla_layers)]

    def parameters(self) -> list[Parameter]:
        ps = self.table.parameters()
        for layer in self.relation_layers + self.vanilla_layers:
            ps += layer.parameters()
        return ps


def encode_graph(graph: IntegratedGraph, rel: Tensor, encoder: GraphEncoder,
                 c0: Tensor | None = None) -> GraphEncoderOutput:
    """Relation layers, then vanilla layers, then sum pooling over nodes."""
    scale = encoder.config.scale_scores
    c = c0 if c0 is not None else init_node_embeddings(graph, encoder.table)
    maps = []
    for layer in encoder.relation_layers:
        c, att = attention_layer(c, rel, layer, scale)
        maps.append(att)
    for layer in encoder.vanilla_layers:
        c, att = attention_layer(c, None, layer, scale)
        maps.append(att)
    n = c.shape[0]
    stacked = np.stack(maps) if maps else np.zeros((0, encoder.config.heads, n, n))
    return GraphEncoderOutput(c, ad.sum(c, axis=0), stacked, graph.node_ids, len(encoder.relation_layers))
