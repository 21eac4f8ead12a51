"""AMR + ConceptNet integrated graphs (ACF, ACP, CF, CP) and their Levi form.

Node ids are stable strings independent of insertion order: AMR nodes keep
their variable names, ConceptNet nodes are ``cn/<key>``, question tokens are
``tok/<token>`` and the synthetic root of the token graphs is ``root``.
"""
from __future__ import annotations

import json
import string
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

from .amr import AmrGraph
from .knowledge import ConceptStore, DEFAULT_MAX_NEIGHBORS, normalize_concept

__all__ = [
    "GNode",
    "GEdge",
    "IntegratedGraph",
    "LeviGraph",
    "GRAPH_TYPES",
    "GRAPH_JSON_VERSION",
    "ARG_ROLES",
    "arg_endpoints",
    "tokenize",
    "build_acf",
    "build_acp",
    "build_cf",
    "build_cp",
    "build_graph",
    "to_levi",
    "graph_to_json",
    "graph_from_json",
]

GRAPH_TYPES = ("acp", "acf", "cf", "cp")
GRAPH_JSON_VERSION = 1
ARG_ROLES = (":ARG0", ":ARG1")
ROOT_ID = "root"
TOKEN_LABEL = "token"

_PUNCT = str.maketrans("", "", string.punctuation.replace("-", "").replace("'", ""))


@dataclass(frozen=True)
class GNode:
    id: str
    label: str
    origin: str  # amr | conceptnet | token | root
    frame: bool = False


@dataclass(frozen=True)
class GEdge:
    source: str
    target: str
    label: str
    origin: str  # amr | conceptnet | token-link


@dataclass(frozen=True)
class IntegratedGraph:
    nodes: tuple[GNode, ...]
    edges: tuple[GEdge, ...]
    root: str
    kind: str = "amr"

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node ids")
        known = set(ids)
        if self.root not in known:
            raise ValueError(f"root {self.root!r} is not a node")
        for e in self.edges:
            if e.source not in known or e.target not in known:
                raise ValueError(f"edge {e} refers to an unknown node")

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def node(self, node_id: str) -> GNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def adjacency(self) -> dict[str, list[str]]:
        """Undirected adjacency with neighbor lists sorted by id."""
        adj: dict[str, set[str]] = {n.id: set() for n in self.nodes}
        for e in self.edges:
            adj[e.source].add(e.target)
            adj[e.target].add(e.source)
        return {k: sorted(v) for k, v in adj.items()}

    def bfs_order(self) -> list[str]:
        """Breadth-first order from the root; unreachable nodes follow, sorted by id."""
        adj = self.adjacency()
        order = [self.root]
        seen = {self.root}
        queue = deque(order)
        while queue:
            for nb in adj[queue.popleft()]:
                if nb not in seen:
                    seen.add(nb)
                    order.append(nb)
                    queue.append(nb)
        order.extend(sorted(set(adj) - seen))
        return order

    def is_connected(self) -> bool:
        return self._reach() == set(self.node_ids)

    def _reach(self) -> set[str]:
        adj = self.adjacency()
        seen = {self.root}
        stack = [self.root]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return seen


class _Builder:
    def __init__(self, kind: str):
        self.kind = kind
        self.nodes: dict[str, GNode] = {}
        self.edges: dict[tuple, GEdge] = {}

    def add_node(self, node: GNode) -> str:
        self.nodes.setdefault(node.id, node)
        return node.id

    def add_edge(self, source: str, target: str, label: str, origin: str, key=None) -> None:
        self.edges.setdefault(key or (source, label, target), GEdge(source, target, label, origin))

    def expand(self, anchor: str, key: str, store: ConceptStore, limit: int | None, hops: int) -> None:
        """Attach ConceptNet assertions touching ``key`` to node ``anchor``."""
        frontier = [(anchor, key)]
        for _ in range(hops):
            nxt = []
            for node_id, k in frontier:
                for a in store.neighbors(k, limit):
                    other = a.tail if a.head == k else a.head
                    cn_id = self.add_node(GNode(f"cn/{other}", other, "conceptnet"))
                    if a.head == k:
                        self.add_edge(node_id, cn_id, a.relation, "conceptnet")
                    else:
                        self.add_edge(cn_id, node_id, a.relation, "conceptnet")
                    nxt.append((cn_id, other))
            frontier = nxt

    def build(self, root: str) -> IntegratedGraph:
        return IntegratedGraph(tuple(self.nodes.values()), tuple(self.edges.values()), root, self.kind)


def arg_endpoints(amr: AmrGraph, roles: Sequence[str] = ARG_ROLES) -> set[str]:
    """Ids of nodes incident to an edge whose label is in ``roles``."""
    out = set()
    for e in amr.edges:
        if e.label in roles:
            out.add(e.source)
            out.add(e.target)
    return out


def tokenize(text: str) -> list[str]:
    """Whitespace split, lower-cased, punctuation stripped; stop-words kept."""
    out = []
    for raw in text.split():
        tok = raw.lower().translate(_PUNCT).strip("-'")
        if tok:
            out.append(tok)
    return out


def _inflection_variants(token: str) -> list[str]:
    key = normalize_concept(token)
    variants = [key]
    for suffix, repl in (("ies", "y"), ("es", ""), ("s", ""), ("ed", "e"), ("ed", ""), ("ing", "e"), ("ing", "")):
        if key.endswith(suffix) and len(key) - len(suffix) >= 2:
            variants.append(key[: -len(suffix)] + repl)
    return list(dict.fromkeys(variants))


def token_key(token: str, store: ConceptStore) -> str | None:
    """Store key for a question token: exact match, then a light inflection strip."""
    for v in _inflection_variants(token):
        if v in store:
            return v
    return None


def _amr_base(amr: AmrGraph, kind: str) -> _Builder:
    b = _Builder(kind)
    for n in amr.nodes:
        b.add_node(GNode(n.id, n.concept, "amr", n.is_frame))
    for k, e in enumerate(amr.edges):
        # AMR edges are kept verbatim, repeated edges included
        b.add_edge(e.source, e.target, e.label, "amr", key=("amr", k))
    return b


def build_acf(amr: AmrGraph, store: ConceptStore, *, max_neighbors: int | None = DEFAULT_MAX_NEIGHBORS,
              hops: int = 1) -> IntegratedGraph:
    """AMR graph expanded with the ConceptNet neighborhood of every concept."""
    b = _amr_base(amr, "acf")
    for n in amr.nodes:
        b.expand(n.id, normalize_concept(n.concept), store, max_neighbors, hops)
    return b.build(amr.root)


def build_acp(amr: AmrGraph, store: ConceptStore, *, roles: Sequence[str] = ARG_ROLES,
              max_neighbors: int | None = DEFAULT_MAX_NEIGHBORS, hops: int = 1) -> IntegratedGraph:
    """AMR graph expanded only on non-frame concepts incident to ``roles`` edges."""
    b = _amr_base(amr, "acp")
    keep = arg_endpoints(amr, roles)
    for n in amr.nodes:
        if n.id in keep and not n.is_frame:
            b.expand(n.id, normalize_concept(n.concept), store, max_neighbors, hops)
    return b.build(amr.root)


def _token_star(tokens: Iterable[str], kind: str) -> tuple[_Builder, list[tuple[str, str]]]:
    b = _Builder(kind)
    b.add_node(GNode(ROOT_ID, "root", "root"))
    out = []
    for tok in tokens:
        key = normalize_concept(tok)
        if not key:
            continue
        tid = b.add_node(GNode(f"tok/{key}", key, "token"))
        b.add_edge(ROOT_ID, tid, TOKEN_LABEL, "token-link")
        out.append((tid, tok))
    return b, out


def build_cf(tokens: Sequence[str], store: ConceptStore, *, max_neighbors: int | None = DEFAULT_MAX_NEIGHBORS,
             hops: int = 1) -> IntegratedGraph:
    """Question tokens joined to a root, each expanded with its ConceptNet neighborhood."""
    if not tokens:
        raise ValueError("build_cf needs at least one token")
    b, toks = _token_star(tokens, "cf")
    for tid, tok in toks:
        key = token_key(tok, store)
        if key is not None:
            b.expand(tid, key, store, max_neighbors, hops)
    return b.build(ROOT_ID)


def build_cp(tokens: Sequence[str], amr: AmrGraph, store: ConceptStore, *, roles: Sequence[str] = ARG_ROLES,
             max_neighbors: int | None = DEFAULT_MAX_NEIGHBORS, hops: int = 1) -> IntegratedGraph:
    """Token star as in CF, expanding only tokens that name an ARG-endpoint concept."""
    if not tokens:
        raise ValueError("build_cp needs at least one token")
    arg_keys = {normalize_concept(amr.node(i).concept) for i in arg_endpoints(amr, roles)}
    b, toks = _token_star(tokens, "cp")
    for tid, tok in toks:
        key = token_key(tok, store)
        if key is not None and key in arg_keys:
            b.expand(tid, key, store, max_neighbors, hops)
    return b.build(ROOT_ID)


def build_graph(kind: str, amr: AmrGraph | None, store: ConceptStore, tokens: Sequence[str] | None = None,
                **kw) -> IntegratedGraph:
    if kind == "acf":
        return build_acf(amr, store, **kw)
    if kind == "acp":
        return build_acp(amr, store, **kw)
    if kind == "cf":
        return build_cf(tokens, store, **kw)
    if kind == "cp":
        return build_cp(tokens, amr, store, **kw)
    raise ValueError(f"unknown graph type {kind!r}; expected one of {GRAPH_TYPES}")


# -- Levi form ---------------------------------------------------------------

@dataclass(frozen=True)
class LeviNode:
    id: str
    label: str
    is_relation: bool


@dataclass(frozen=True)
class LeviGraph:
    nodes: tuple[LeviNode, ...]
    arcs: tuple[tuple[str, str], ...]

    def concept_ids(self) -> list[str]:
        return [n.id for n in self.nodes if not n.is_relation]

    def labels(self) -> dict[str, str]:
        return {n.id: n.label for n in self.nodes}

    def to_edges(self) -> list[tuple[str, str, str]]:
        """Erase relation nodes, recovering ``(source, label, target)`` triples."""
        rel = {n.id: n.label for n in self.nodes if n.is_relation}
        inc: dict[str, str] = {}
        out: dict[str, str] = {}
        for s, t in self.arcs:
            if t in rel:
                inc[t] = s
            else:
                out[s] = t
        return [(inc[r], label, out[r]) for r, label in rel.items()]


def to_levi(g: IntegratedGraph) -> LeviGraph:
    """Turn every labeled edge into a node with one in-arc and one out-arc."""
    nodes = [LeviNode(n.id, n.label, False) for n in g.nodes]
    arcs = []
    used: set[str] = set()
    for e in g.edges:
        rid = f"{e.source}|{e.label}|{e.target}"
        while rid in used:
            rid += "'"
        used.add(rid)
        nodes.append(LeviNode(rid, e.label, True))
        arcs.append((e.source, rid))
        arcs.append((rid, e.target))
    return LeviGraph(tuple(nodes), tuple(arcs))


# -- JSON --------------------------------------------------------------------

def graph_to_json(g: IntegratedGraph) -> str:
    payload = {
        "version": GRAPH_JSON_VERSION,
        "type": g.kind,
        "root": g.root,
        "nodes": [{"id": n.id, "label": n.label, "origin": n.origin, "frame": n.frame} for n in g.nodes],
        "edges": [{"src": e.source, "dst": e.target, "label": e.label, "origin": e.origin} for e in g.edges],
    }
    return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"


def graph_from_json(text: str) -> IntegratedGraph:
    d = json.loads(text)
    if d.get("version") != GRAPH_JSON_VERSION:
        raise ValueError(f"unsupported graph json version {d.get('version')!r}")
    nodes = tuple(GNode(n["id"], n["label"], n["origin"], bool(n.get("frame", False))) for n in d["nodes"])
    edges = tuple(GEdge(e["src"], e["dst"], e["label"], e["origin"]) for e in d["edges"])
    return IntegratedGraph(nodes, edges, d["root"], d.get("type", "amr"))
