"""AMR graphs in PENMAN notation: parsing, serialization and role statistics.

A parsed graph keeps one node per variable plus one leaf node per attribute
constant (numbers, strings, polarity ``-``). Inverse roles such as
``:ARG0-of`` are rewritten as forward edges with swapped endpoints, so every
stored edge reads ``source --label--> target``.
"""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator

__all__ = [
    "AmrNode",
    "AmrEdge",
    "AmrGraph",
    "PenmanError",
    "RelationStats",
    "parse_penman",
    "serialize_penman",
    "read_penman_file",
    "read_penman_records",
    "is_frame_concept",
    "normalize_role",
    "corpus_role_stats",
]

_FRAME_RE = re.compile(r"^.+-\d\d$")
# roles whose name legitimately ends in "-of" and are not inverses
_NON_INVERSE_ROLES = frozenset({":consist-of", ":prep-out-of", ":prep-on-behalf-of"})


class PenmanError(ValueError):
    """Malformed PENMAN input. ``line`` and ``column`` are 1-based."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


def is_frame_concept(label: str) -> bool:
    """True when ``label`` carries a PropBank sense suffix like ``require-01``."""
    return bool(_FRAME_RE.match(label))


def normalize_role(role: str) -> tuple[str, bool]:
    """Return ``(label, inverted)`` for a raw role string.

    ARG roles are upper-cased, everything else lower-cased. ``inverted`` is
    true for ``-of`` roles, whose suffix is removed.
    """
    if not role.startswith(":"):
        role = ":" + role
    low = role.lower()
    inverted = low.endswith("-of") and low not in _NON_INVERSE_ROLES and len(low) > 4
    if inverted:
        low = low[:-3]
    if re.match(r"^:arg\d", low):
        label = ":ARG" + low[4:]
    else:
        label = low
    return label, inverted


@dataclass(frozen=True)
class AmrNode:
    id: str
    concept: str
    is_frame: bool = False
    # attribute constants ("-", numbers, quoted strings) are leaves, never variables
    is_attribute: bool = False


@dataclass(frozen=True)
class AmrEdge:
    source: str
    target: str
    label: str


@dataclass(frozen=True)
class AmrGraph:
    root: str
    nodes: tuple[AmrNode, ...]
    edges: tuple[AmrEdge, ...]
    id: str | None = field(default=None, compare=False)

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
            if not e.label.startswith(":") or len(e.label) < 2:
                raise ValueError(f"bad edge label {e.label!r}")
        if len(self.reachable()) != len(known):
            raise ValueError("graph is not connected from its root")

    def node(self, node_id: str) -> AmrNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def reachable(self) -> set[str]:
        adj: dict[str, list[str]] = {n.id: [] for n in self.nodes}
        for e in self.edges:
            adj[e.source].append(e.target)
            adj[e.target].append(e.source)
        seen = {self.root}
        stack = [self.root]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return seen


# -- parsing -----------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<lpar>\()
  | (?P<rpar>\))
  | (?P<slash>/)
  | (?P<role>:[^\s()"/~]*)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<symbol>[^\s()"/:~]+(?::[^\s()"/~]+)*)
  | (?P<align>~[^\s()]*)
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise PenmanError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        chunk = m.group()
        if kind not in ("ws", "align"):
            toks.append(_Tok(kind, chunk, line, pos - line_start + 1))
        nl = chunk.count("\n")
        if nl:
            line += nl
            line_start = pos + chunk.rindex("\n") + 1
        pos = m.end()
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0
        self.concepts: dict[str, tuple[str, _Tok]] = {}
        self.order: list[str] = []
        # (source, raw role, target token); targets resolved after parsing
        self.triples: list[tuple[str, str, _Tok | str]] = []
        self.end = (1, 1)
        if self.toks:
            last = self.toks[-1]
            self.end = (last.line, last.col + len(last.text))

    def peek(self) -> _Tok | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self, kind: str, what: str) -> _Tok:
        tok = self.peek()
        if tok is None:
            raise PenmanError(f"unbalanced parentheses: expected {what} before end of input", *self.end)
        if tok.kind != kind:
            raise PenmanError(f"expected {what}, found {tok.text!r}", tok.line, tok.col)
        self.i += 1
        return tok

    def parse(self) -> str:
        tok = self.peek()
        if tok is None:
            raise PenmanError("empty input", 1, 1)
        root = self.node()
        extra = self.peek()
        if extra is not None:
            if extra.kind == "rpar":
                raise PenmanError("unbalanced parentheses: unexpected ')'", extra.line, extra.col)
            raise PenmanError(f"trailing content {extra.text!r}", extra.line, extra.col)
        return root

    def node(self) -> str:
        self.take("lpar", "'('")
        var = self.take("symbol", "variable")
        slash = self.peek()
        if slash is None or slash.kind != "slash":
            where = slash or _Tok("eof", "", *self.end)
            raise PenmanError(f"missing '/' after variable {var.text!r}", where.line, where.col)
        self.i += 1
        concept_tok = self.peek()
        if concept_tok is None or concept_tok.kind not in ("symbol", "string"):
            where = concept_tok or _Tok("eof", "", *self.end)
            raise PenmanError(f"missing concept for variable {var.text!r}", where.line, where.col)
        self.i += 1
        concept = concept_tok.text
        if var.text in self.concepts:
            prev, _ = self.concepts[var.text]
            if prev != concept:
                raise PenmanError(
                    f"variable {var.text!r} redefined as {concept!r} (was {prev!r})", var.line, var.col
                )
        else:
            self.concepts[var.text] = (concept, var)
            self.order.append(var.text)
        while True:
            tok = self.peek()
            if tok is None:
                raise PenmanError("unbalanced parentheses: missing ')'", *self.end)
            if tok.kind == "rpar":
                self.i += 1
                return var.text
            if tok.kind != "role":
                raise PenmanError(f"expected role or ')', found {tok.text!r}", tok.line, tok.col)
            self.i += 1
            tgt = self.peek()
            if tgt is None:
                raise PenmanError(f"role {tok.text!r} has no target", *self.end)
            if tgt.kind == "lpar":
                child = self.node()
                self.triples.append((var.text, tok.text, child))
            elif tgt.kind in ("symbol", "string"):
                self.i += 1
                self.triples.append((var.text, tok.text, tgt))
            else:
                raise PenmanError(f"role {tok.text!r} has no target", tgt.line, tgt.col)


def parse_penman(text: str, graph_id: str | None = None) -> AmrGraph:
    """Parse a single PENMAN expression into an :class:`AmrGraph`.

    Symbols that name a variable defined anywhere in the expression become
    re-entrant edges; any other symbol or string is an attribute constant.

    >>> g = parse_penman("(w / work-01 :ARG0 (b / boy) :manner (h / hard))")
    >>> [n.concept for n in g.nodes], [e.label for e in g.edges]
    (['work-01', 'boy', 'hard'], [':ARG0', ':manner'])
    """
    p = _Parser(_strip_comments(text))
    root = p.parse()
    nodes = [AmrNode(v, c, is_frame_concept(c)) for v, (c, _) in ((v, p.concepts[v]) for v in p.order)]
    edges = []
    n_attr = 0
    for source, raw_role, target in p.triples:
        label, inverted = normalize_role(raw_role)
        if isinstance(target, _Tok):
            if target.kind == "symbol" and target.text in p.concepts:
                target_id = target.text
            else:
                n_attr += 1
                target_id = f"{source}~{n_attr}"
                while target_id in p.concepts:
                    target_id += "'"
                nodes.append(AmrNode(target_id, target.text, False, True))
                if inverted:
                    # a constant cannot be an edge source; keep the role as written
                    label, inverted = label + "-of", False
        else:
            target_id = target
        if inverted:
            edges.append(AmrEdge(target_id, source, label))
        else:
            edges.append(AmrEdge(source, target_id, label))
    return AmrGraph(root, tuple(nodes), tuple(edges), graph_id)


def _strip_comments(text: str) -> str:
    return "\n".join("" if ln.lstrip().startswith("#") else ln for ln in text.splitlines())


def read_penman_records(text: str) -> Iterator[tuple[AmrGraph, dict[str, str]]]:
    """Yield ``(graph, metadata)`` per record; records are separated by blank lines.

    Metadata comes from ``# ::key value`` comment lines; ``::id`` sets the graph id.
    """
    for block in re.split(r"\n\s*\n", text):
        if not block.strip():
            continue
        meta: dict[str, str] = {}
        for ln in block.splitlines():
            for m in re.finditer(r"::(\S+)[ \t]*((?:(?!\s::\S).)*)", ln) if ln.lstrip().startswith("#") else ():
                meta[m.group(1)] = m.group(2).strip()
        body = _strip_comments(block)
        if not body.strip():
            continue
        yield parse_penman(body, meta.get("id")), meta


def read_penman_file(text: str) -> Iterator[AmrGraph]:
    """Yield graphs from a multi-graph file (see ``read_penman_records``)."""
    for g, _ in read_penman_records(text):
        yield g


# -- serialization -----------------------------------------------------------

def _inverse(label: str) -> str:
    return label + "-of"


def serialize_penman(g: AmrGraph, indent: int | None = 4) -> str:
    """Write ``g`` as PENMAN text.

    Edges are emitted along a depth-first spanning tree from the root; an edge
    walked against its direction is written with an ``-of`` role, and edges
    to an already-written variable become re-entrant references.
    """
    by_id = {n.id: n for n in g.nodes}
    incident: dict[str, list[tuple[int, AmrEdge]]] = {n.id: [] for n in g.nodes}
    for k, e in enumerate(g.edges):
        incident[e.source].append((k, e))
        if e.target != e.source:
            incident[e.target].append((k, e))
    written: set[str] = set()
    used: set[int] = set()

    def emit(node_id: str, depth: int) -> str:
        node = by_id[node_id]
        written.add(node_id)
        parts = [f"({node_id} / {node.concept}"]
        for k, e in incident[node_id]:
            if k in used:
                continue
            if e.source == node_id:
                role, other = e.label, e.target
            else:
                role, other = _inverse(e.label), e.source
            other_node = by_id[other]
            if other_node.is_attribute:
                if e.source != node_id:
                    # constants never start an edge; leave for the other end
                    continue
                used.add(k)
                parts.append(_join(role, other_node.concept, depth, indent))
                continue
            used.add(k)
            if other in written:
                parts.append(_join(role, other, depth, indent))
            else:
                parts.append(_join(role, emit(other, depth + 1), depth, indent))
        return "".join(parts) + ")"

    return emit(g.root, 1)


def _join(role: str, target: str, depth: int, indent: int | None) -> str:
    if indent is None:
        return f" {role} {target}"
    return "\n" + " " * (indent * depth) + f"{role} {target}"


# -- statistics --------------------------------------------------------------

@dataclass(frozen=True)
class RelationStats:
    counts: dict[str, int]
    total: int

    def percent(self, role: str) -> float:
        return 100.0 * self.counts.get(role, 0) / self.total if self.total else 0.0

    def __add__(self, other: "RelationStats") -> "RelationStats":
        c = Counter(self.counts)
        c.update(other.counts)
        return RelationStats(dict(c), self.total + other.total)


def corpus_role_stats(graphs: Iterable[AmrGraph]) -> RelationStats:
    """Count edge labels over a corpus of graphs."""
    c: Counter[str] = Counter()
    for g in graphs:
        c.update(e.label for e in g.edges)
    return RelationStats(dict(sorted(c.items())), sum(c.values()))
