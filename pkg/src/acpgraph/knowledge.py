"""ConceptNet assertion store: ingestion, concept-key normalization and lookup.

Store files are line-delimited text::

    # acpgraph-store v1
    <head>\t<relation>\t<tail>\t<weight>
    ...

Weights are written with ``repr`` so a save/load cycle is exact.
"""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping

__all__ = [
    "Assertion",
    "ConceptStore",
    "STORE_HEADER",
    "concept_key",
    "normalize_concept",
    "ingest_csv",
    "neighbors",
    "load_store",
    "dump_store",
]

log = logging.getLogger("acpgraph.knowledge")

STORE_HEADER = "# acpgraph-store v1"
DEFAULT_MAX_NEIGHBORS = 100

_FRAME_SUFFIX = re.compile(r"-\d\d$")


def normalize_concept(label: str) -> str:
    """Reduce an AMR concept or question token to a ConceptNet key.

    >>> normalize_concept("require-01"), normalize_concept("home entertainment")
    ('require', 'home_entertainment')
    """
    key = label.strip().strip('"').lower()
    key = _FRAME_SUFFIX.sub("", key)
    return "_".join(key.split())


def concept_key(uri: str, lang: str | None = None) -> str | None:
    """``/c/en/fish/n/wn/animal`` -> ``fish``; None when the language differs."""
    parts = uri.strip().split("/")
    # ['', 'c', lang, term, ...sense]
    if len(parts) < 4 or parts[1] != "c" or not parts[3]:
        return None
    if lang is not None and parts[2] != lang:
        return None
    return parts[3].lower()


@dataclass(frozen=True)
class Assertion:
    head: str
    relation: str
    tail: str
    weight: float = 1.0

    @property
    def triple(self) -> tuple[str, str, str]:
        return self.head, self.relation, self.tail


@dataclass(frozen=True)
class ConceptStore:
    """Deduplicated, indexed, read-only set of assertions."""

    assertions: tuple[Assertion, ...]
    index: Mapping[str, tuple[int, ...]] = field(repr=False)
    relation_vocab: tuple[str, ...]
    skipped: int = 0

    @classmethod
    def from_assertions(cls, assertions: Iterable[Assertion], skipped: int = 0) -> "ConceptStore":
        merged: dict[tuple[str, str, str], Assertion] = {}
        for a in assertions:
            if not a.head or not a.tail or not a.relation:
                raise ValueError(f"incomplete assertion {a}")
            if a.weight < 0:
                raise ValueError(f"negative weight in {a}")
            prev = merged.get(a.triple)
            if prev is None or a.weight > prev.weight:
                # dict keeps first-insertion position on overwrite
                merged[a.triple] = a
        items = tuple(merged.values())
        index: dict[str, list[int]] = {}
        vocab: dict[str, None] = {}
        for k, a in enumerate(items):
            index.setdefault(a.head, []).append(k)
            if a.tail != a.head:
                index.setdefault(a.tail, []).append(k)
            vocab.setdefault(a.relation)
        frozen = MappingProxyType({key: tuple(ids) for key, ids in index.items()})
        return cls(items, frozen, tuple(vocab), skipped)

    def __len__(self) -> int:
        return len(self.assertions)

    def __contains__(self, key: str) -> bool:
        return key in self.index

    def neighbors(self, key: str, limit: int | None = DEFAULT_MAX_NEIGHBORS) -> list[Assertion]:
        """Assertions with ``key`` as head or tail, in insertion order."""
        ids = self.index.get(key, ())
        if limit is not None:
            ids = ids[:limit]
        return [self.assertions[k] for k in ids]


def neighbors(store: ConceptStore, key: str, limit: int | None = DEFAULT_MAX_NEIGHBORS) -> list[Assertion]:
    return store.neighbors(key, limit)


def ingest_csv(lines: Iterable[str], language_filter: str | None = "en") -> ConceptStore:
    """Build a store from ConceptNet assertion-dump records.

    Each record is tab separated: edge URI, relation URI, start URI, end URI,
    JSON metadata. Malformed records are skipped and counted in
    ``store.skipped``; records whose endpoints are outside ``language_filter``
    are dropped silently.
    """
    out = []
    skipped = 0
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) < 5:
            skipped += 1
            log.warning("record %d: expected 5 fields, got %d", lineno, len(fields))
            continue
        _, rel_uri, start, end, meta = fields[:5]
        if not rel_uri.startswith("/r/") or len(rel_uri) <= 3:
            skipped += 1
            log.warning("record %d: bad relation %r", lineno, rel_uri)
            continue
        head_any, tail_any = concept_key(start), concept_key(end)
        if head_any is None or tail_any is None:
            skipped += 1
            log.warning("record %d: bad concept uri", lineno)
            continue
        try:
            weight = float(json.loads(meta).get("weight", 1.0)) if meta.strip() else 1.0
        except (ValueError, AttributeError, TypeError):
            skipped += 1
            log.warning("record %d: unreadable metadata", lineno)
            continue
        if weight < 0:
            skipped += 1
            log.warning("record %d: negative weight", lineno)
            continue
        head, tail = concept_key(start, language_filter), concept_key(end, language_filter)
        if head is None or tail is None:
            continue
        out.append(Assertion(head, rel_uri[3:], tail, weight))
    if skipped:
        log.warning("skipped %d malformed records", skipped)
    return ConceptStore.from_assertions(out, skipped)


def dump_store(store: ConceptStore) -> str:
    lines = [STORE_HEADER]
    for a in store.assertions:
        lines.append(f"{a.head}\t{a.relation}\t{a.tail}\t{a.weight!r}")
    return "\n".join(lines) + "\n"


def load_store(text: str) -> ConceptStore:
    lines = text.splitlines()
    if not lines or lines[0].strip() != STORE_HEADER:
        raise ValueError(f"not a store file (expected header {STORE_HEADER!r})")
    items = []
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise ValueError(f"store line {lineno}: expected 4 fields")
        items.append(Assertion(fields[0], fields[1], fields[2], float(fields[3])))
    return ConceptStore.from_assertions(items)
