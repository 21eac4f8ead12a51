"""Shortest relation paths between concepts and their bidirectional GRU encoding.

Paths are searched on the Levi graph, so the path material is the sequence of
relation nodes crossed. Each crossing becomes a vocabulary token
``<label>@fwd`` or ``<label>@rev`` depending on whether the arc was walked
with or against its direction. A pair with no path within ``max_len`` hops
is encoded by the single token ``<none>``; the diagonal uses ``<self>``.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .graphs import IntegratedGraph, LeviGraph, to_levi

__all__ = [
    "SELF",
    "NONE",
    "UNK",
    "RelationPath",
    "RelationVocab",
    "RelationEncoding",
    "PathFinder",
    "PairPaths",
    "GruParams",
    "RelationEncoder",
    "shortest_path",
    "pair_paths",
    "encode_path",
    "split_relation",
    "all_pairs_relations",
]

log = logging.getLogger("acpgraph.relations")

SELF, NONE, UNK = "<self>", "<none>", "<unk>"
RESERVED = (SELF, NONE, UNK)
DEFAULT_MAX_LEN = 4


@dataclass(frozen=True)
class RelationPath:
    steps: tuple[tuple[str, str], ...]  # (relation label, "fwd" | "rev")
    nodes: tuple[str, ...] = ()  # concept ids from source to target
    special: str | None = None  # "self" | "none"

    @property
    def length(self) -> int:
        return len(self.steps)

    def tokens(self) -> list[str]:
        if self.special == "self":
            return [SELF]
        if self.special == "none":
            return [NONE]
        return [f"{label}@{d}" for label, d in self.steps]

    def reversed(self) -> "RelationPath":
        """The same path walked from target to source (direction markers flip)."""
        if self.special:
            return RelationPath((), self.nodes[::-1], self.special)
        flip = {"fwd": "rev", "rev": "fwd"}
        return RelationPath(tuple((lab, flip[d]) for lab, d in reversed(self.steps)), self.nodes[::-1])


class PathFinder:
    """Breadth-first search over a Levi graph, arcs walked in both directions.

    Neighbors are expanded in ascending id order and the first discovery of a
    node fixes its parent, which makes every returned path deterministic.
    """

    def __init__(self, levi: LeviGraph, max_len: int = DEFAULT_MAX_LEN):
        self.levi = levi
        self.max_len = max_len
        self.labels = levi.labels()
        self.rel_src: dict[str, str] = {}
        self.rel_dst: dict[str, str] = {}
        adj: dict[str, set[str]] = {n.id: set() for n in levi.nodes}
        rel_ids = {n.id for n in levi.nodes if n.is_relation}
        for s, t in levi.arcs:
            adj[s].add(t)
            adj[t].add(s)
            if t in rel_ids:
                self.rel_src[t] = s
            else:
                self.rel_dst[s] = t
        self.adj = {k: sorted(v) for k, v in adj.items()}
        self._cache: dict[str, dict[str, str | None]] = {}

    def _tree(self, source: str) -> dict[str, str | None]:
        if source not in self._cache:
            parent: dict[str, str | None] = {source: None}
            depth = {source: 0}
            queue = deque([source])
            limit = 2 * self.max_len
            while queue:
                u = queue.popleft()
                if depth[u] >= limit:
                    continue
                for v in self.adj[u]:
                    if v not in parent:
                        parent[v] = u
                        depth[v] = depth[u] + 1
                        queue.append(v)
            self._cache[source] = parent
        return self._cache[source]

    def path(self, i: str, j: str) -> RelationPath:
        if i == j:
            return RelationPath((), (i,), "self")
        parent = self._tree(i)
        if j not in parent:
            return RelationPath((), (i, j), "none")
        chain = [j]
        while parent[chain[-1]] is not None:
            chain.append(parent[chain[-1]])
        chain.reverse()
        steps = []
        for k in range(1, len(chain), 2):
            rel, prev = chain[k], chain[k - 1]
            direction = "fwd" if self.rel_src[rel] == prev else "rev"
            if self.rel_src[rel] == self.rel_dst[rel]:
                direction = "fwd"
            steps.append((self.labels[rel], direction))
        return RelationPath(tuple(steps), tuple(chain[::2]))


def shortest_path(levi: LeviGraph, i: str, j: str, max_len: int = DEFAULT_MAX_LEN) -> RelationPath:
    """Shortest relation path from concept ``i`` to concept ``j``."""
    return PathFinder(levi, max_len).path(i, j)


class RelationVocab:
    """Relation tokens; reserved ``<self>``, ``<none>``, ``<unk>`` come first."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.tokens: list[str] = list(RESERVED)
        self.ids: dict[str, int] = {t: k for k, t in enumerate(self.tokens)}
        for t in tokens:
            self.add(t)
        self.unknown_hits = 0

    def add(self, token: str) -> int:
        if token not in self.ids:
            self.ids[token] = len(self.tokens)
            self.tokens.append(token)
        return self.ids[token]

    def __len__(self) -> int:
        return len(self.tokens)

    def index(self, token: str) -> int:
        k = self.ids.get(token)
        if k is None:
            self.unknown_hits += 1
            log.warning("unknown relation token %r mapped to %s", token, UNK)
            return self.ids[UNK]
        return k

    @classmethod
    def from_graphs(cls, graphs: Iterable[IntegratedGraph]) -> "RelationVocab":
        labels = sorted({e.label for g in graphs for e in g.edges})
        return cls(f"{lab}@{d}" for lab in labels for d in ("fwd", "rev"))

    def dumps(self) -> str:
        return "\n".join(self.tokens) + "\n"

    @classmethod
    def loads(cls, text: str) -> "RelationVocab":
        toks = [ln for ln in text.splitlines() if ln]
        if tuple(toks[:3]) != RESERVED:
            raise ValueError(f"relation vocabulary must start with {RESERVED}")
        return cls(toks[3:])


@dataclass
class PairPaths:
    """Structural (parameter-free) part of the all-pairs relation matrix."""

    node_ids: list[str]
    paths: list[list[RelationPath]]
    sequences: list[tuple[str, ...]]  # unique token sequences
    index: np.ndarray  # (N, N) -> row of ``sequences``


def pair_paths(graph: IntegratedGraph, max_len: int = DEFAULT_MAX_LEN,
               levi: LeviGraph | None = None) -> PairPaths:
    finder = PathFinder(levi if levi is not None else to_levi(graph), max_len)
    ids = graph.node_ids
    n = len(ids)
    seq_ids: dict[tuple[str, ...], int] = {}
    index = np.zeros((n, n), dtype=np.int64)
    paths = []
    for a, i in enumerate(ids):
        row = []
        for b, j in enumerate(ids):
            p = finder.path(i, j)
            row.append(p)
            index[a, b] = seq_ids.setdefault(tuple(p.tokens()), len(seq_ids))
        paths.append(row)
    return PairPaths(ids, paths, list(seq_ids), index)


class GruParams:
    """One GRU direction: update/reset gates and candidate state with biases."""

    def __init__(self, prefix: str, input_dim: int, hidden: int, rng: np.random.Generator):
        self.hidden = hidden
        self.wx = Parameter(f"{prefix}.wx", ad.glorot_uniform(rng, (input_dim, 3 * hidden)))
        self.uzr = Parameter(f"{prefix}.uzr", ad.glorot_uniform(rng, (hidden, 2 * hidden)))
        self.uh = Parameter(f"{prefix}.uh", ad.glorot_uniform(rng, (hidden, hidden)))
        self.b = Parameter(f"{prefix}.b", np.zeros(3 * hidden))

    def parameters(self) -> list[Parameter]:
        return [self.wx, self.uzr, self.uh, self.b]

    def cell(self, x: Tensor, h: Tensor) -> Tensor:
        """h' = z*h + (1-z)*tanh(W x + U (r*h) + b)."""
        batch, hid = h.shape[0], self.hidden
        gx = x @ self.wx + ad.broadcast_to(self.b, (batch, 3 * hid))
        gh = h @ self.uzr
        z = ad.sigmoid(gx[:, :hid] + gh[:, :hid])
        r = ad.sigmoid(gx[:, hid:2 * hid] + gh[:, hid:])
        cand = ad.tanh(gx[:, 2 * hid:] + (r * h) @ self.uh)
        ones = ad.tensor(np.ones((batch, hid)))
        return z * h + (ones - z) * cand

    def run(self, emb: Tensor, ids: np.ndarray, mask: np.ndarray) -> Tensor:
        """Final states for left-aligned padded id rows ``ids`` (B, T)."""
        batch, steps = ids.shape
        h = ad.tensor(np.zeros((batch, self.hidden)))
        for t in range(steps):
            new = self.cell(ad.take(emb, ids[:, t]), h)
            m = mask[:, t:t + 1]
            if m.all():
                h = new
            else:
                keep = np.broadcast_to(m, (batch, self.hidden))
                h = ad.tensor(keep.astype(float)) * new + ad.tensor(1.0 - keep) * h
        return h


class RelationEncoder:
    """Embeds relation tokens and runs a forward and a backward GRU over them."""

    def __init__(self, vocab: RelationVocab, embed_dim: int = 32, hidden: int = 32, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.vocab = vocab
        self.hidden = hidden
        self.embedding = Parameter("rel.embedding", rng.normal(0.0, embed_dim ** -0.5, (len(vocab), embed_dim)))
        self.gru_f = GruParams("rel.gru_f", embed_dim, hidden, rng)
        self.gru_g = GruParams("rel.gru_g", embed_dim, hidden, rng)

    @property
    def output_dim(self) -> int:
        return 2 * self.hidden

    def parameters(self) -> list[Parameter]:
        return [self.embedding, *self.gru_f.parameters(), *self.gru_g.parameters()]

    def encode_sequences(self, sequences: Sequence[Sequence[str]]) -> Tensor:
        """Encode token sequences to ``(len(sequences), 2*hidden)``: [fwd final; bwd final]."""
        lengths = [len(s) for s in sequences]
        if min(lengths, default=1) < 1:
            raise ValueError("empty relation sequence")
        steps = max(lengths)
        fwd = np.zeros((len(sequences), steps), dtype=np.int64)
        bwd = np.zeros_like(fwd)
        mask = np.zeros((len(sequences), steps), dtype=bool)
        for k, seq in enumerate(sequences):
            ids = [self.vocab.index(t) for t in seq]
            fwd[k, :len(ids)] = ids
            bwd[k, :len(ids)] = ids[::-1]
            mask[k, :len(ids)] = True
        hf = self.gru_f.run(self.embedding, fwd, mask)
        hb = self.gru_g.run(self.embedding, bwd, mask)
        return ad.concat([hf, hb], axis=1)


def encode_path(path: RelationPath, encoder: RelationEncoder) -> Tensor:
    """r_ij for a single path, shape ``(2*hidden,)``."""
    return ad.reshape(encoder.encode_sequences([path.tokens()]), (encoder.output_dim,))


@dataclass
class RelationEncoding:
    r_ij: Tensor
    r_fwd: Tensor
    r_bwd: Tensor


def split_relation(r_ij: Tensor, w_r: Tensor) -> tuple[Tensor, Tensor]:
    """Project ``r_ij`` with ``w_r`` (shape ``(2*hidden, 2*d)``) and split into halves.

    Works on a single vector or any stack of them along leading axes.
    """
    if w_r.ndim != 2 or w_r.shape[0] != r_ij.shape[-1] or w_r.shape[1] % 2:
        raise ad.ShapeError(f"split_relation: r_ij {r_ij.shape} incompatible with W_r {w_r.shape}")
    d = w_r.shape[1] // 2
    if r_ij.ndim == 1:
        out = ad.reshape(ad.reshape(r_ij, (1, -1)) @ w_r, (2 * d,))
        return out[:d], out[d:]
    out = r_ij @ w_r
    return out[..., :d], out[..., d:]


def all_pairs_relations(graph: IntegratedGraph, encoder: RelationEncoder, max_len: int = DEFAULT_MAX_LEN,
                        paths: PairPaths | None = None) -> Tensor:
    """``(N, N, 2*hidden)`` relation encodings over all node pairs of ``graph``."""
    pp = paths if paths is not None else pair_paths(graph, max_len)
    unique = encoder.encode_sequences(pp.sequences)
    n = len(pp.node_ids)
    return ad.reshape(ad.take(unique, pp.index.reshape(-1)), (n, n, encoder.output_dim))
