"""High-attention concept pairs, their relation paths, and heatmap export.

Attention is aggregated over one layer's heads (by default the last relation
layer, mean over heads). Pairs ``(i, j)`` with ``i != j`` are ranked by that
weight, highest first, ties broken by ``(source id, target id)``.
"""
from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fileio import atomic_write
from .graphs import IntegratedGraph, to_levi
from .relations import DEFAULT_MAX_LEN, NONE, PathFinder, RelationPath
from .transformer import GraphEncoderOutput

__all__ = ["PathExplanation", "top_paths", "render_path", "heatmap_csv", "export_heatmap"]


@dataclass(frozen=True)
class PathExplanation:
    source: str
    target: str
    attention: float
    path: tuple[str, ...]  # concept, relation, concept, ...
    source_id: str
    target_id: str

    def to_dict(self) -> dict:
        return {"source": self.source, "target": self.target, "attention": self.attention,
                "path": list(self.path), "source_id": self.source_id, "target_id": self.target_id}


def render_path(path: RelationPath, graph: IntegratedGraph) -> tuple[str, ...]:
    """Alternate concept and relation labels; relations walked backwards get ``-of``."""
    labels = [graph.node(n).label for n in path.nodes]
    if path.special == "self":
        return (labels[0],)
    if path.special == "none":
        return (labels[0], NONE, labels[-1])
    out = [labels[0]]
    for (rel, direction), concept in zip(path.steps, labels[1:]):
        out += [rel if direction == "fwd" else rel + "-of", concept]
    return tuple(out)


def _aggregate(output: GraphEncoderOutput, layer: int | None, heads: str) -> np.ndarray:
    if output.attention_maps.shape[0] == 0:
        raise ValueError("encoder output holds no attention maps")
    return output.aggregated_attention(layer, heads)


def top_paths(output: GraphEncoderOutput, graph: IntegratedGraph, k: int, *, layer: int | None = None,
              heads: str = "mean", max_len: int = DEFAULT_MAX_LEN) -> list[PathExplanation]:
    """The ``k`` most attended off-diagonal pairs with their shortest relation paths."""
    if k < 0:
        raise ValueError("k must be non-negative")
    if output.node_ids != graph.node_ids:
        raise ValueError("encoder output and graph disagree on node order")
    if k == 0:
        return []
    att = _aggregate(output, layer, heads)
    ids = output.node_ids
    pairs = [(-att[a, b], ids[a], ids[b], a, b) for a in range(len(ids)) for b in range(len(ids)) if a != b]
    pairs.sort()
    finder = PathFinder(to_levi(graph), max_len)
    out = []
    for neg, src, dst, _, _ in pairs[:k]:
        out.append(PathExplanation(graph.node(src).label, graph.node(dst).label, float(-neg),
                                   render_path(finder.path(src, dst), graph), src, dst))
    return out


def heatmap_csv(output: GraphEncoderOutput, graph: IntegratedGraph, *, layer: int | None = None,
                heads: str = "mean") -> str:
    att = _aggregate(output, layer, heads)
    labels = [graph.node(n).label for n in output.node_ids]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([""] + labels)
    for label, row in zip(labels, att):
        w.writerow([label] + [repr(float(x)) for x in row])
    return buf.getvalue()


def export_heatmap(output: GraphEncoderOutput, graph: IntegratedGraph, out_dir: str | os.PathLike, *,
                   k: int = 4, layer: int | None = None, heads: str = "mean") -> tuple[Path, Path]:
    """Write ``heatmap.csv`` and ``paths.json`` into ``out_dir``; returns both paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out_dir / "heatmap.csv", out_dir / "paths.json"
    atomic_write(csv_path, heatmap_csv(output, graph, layer=layer, heads=heads))
    paths = [p.to_dict() for p in top_paths(output, graph, k, layer=layer, heads=heads)]
    atomic_write(json_path, json.dumps(paths, indent=2) + "\n")
    return csv_path, json_path
