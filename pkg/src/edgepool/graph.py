"""Sparse directed-graph containers, batching, and structural queries.

Graphs store edges as explicit directed (src, dst) pairs in a canonical
order (sorted by src, then dst). The canonical order is what makes every
downstream tie-break deterministic, so it is established at construction
and never changes. Node features are dense row-major matrices; structure
is sparse.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Graph",
    "BatchedGraph",
    "build_graph",
    "symmetrize",
    "in_neighbors",
    "batch",
    "to_dot",
    "graph_to_json",
    "graph_from_json",
    "load_graph_file",
    "save_graph_file",
]


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Graph:
    """Immutable directed graph with per-node (and optional per-edge) features.

    ``edges`` is an ``(num_edges, 2)`` int64 array in canonical order. Use
    :func:`build_graph` instead of constructing directly; it validates and
    canonicalizes.
    """

    num_nodes: int
    node_features: np.ndarray
    edges: np.ndarray
    edge_features: np.ndarray | None = None

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def feature_width(self) -> int:
        return int(self.node_features.shape[1])

    @property
    def edge_feature_width(self) -> int:
        return 0 if self.edge_features is None else int(self.edge_features.shape[1])

    @property
    def edge_src(self) -> np.ndarray:
        return self.edges[:, 0]

    @property
    def edge_dst(self) -> np.ndarray:
        return self.edges[:, 1]

    def in_degrees(self) -> np.ndarray:
        """Number of incoming edges per node."""
        return np.bincount(self.edge_dst, minlength=self.num_nodes)

    def with_node_features(self, features: np.ndarray) -> "Graph":
        """Same structure, different node features (layer activations etc.)."""
        features = np.asarray(features)
        if features.ndim != 2 or features.shape[0] != self.num_nodes:
            raise ValueError(
                f"feature matrix must have {self.num_nodes} rows, got shape {features.shape}"
            )
        return Graph(self.num_nodes, _freeze(features.copy()), self.edges, self.edge_features)


@dataclass(frozen=True)
class BatchedGraph:
    """Disjoint union of graphs with a node-to-graph assignment vector."""

    graph: Graph
    graph_id: np.ndarray
    num_graphs: int


def build_graph(
    num_nodes: int,
    edge_list: Sequence | np.ndarray,
    node_features: Sequence | np.ndarray,
    edge_features: Sequence | np.ndarray | None = None,
) -> Graph:
    """Validate inputs and return a Graph with edges in canonical order.

    Raises ValueError on out-of-range indices, duplicate directed edges,
    self-loops, or dimension mismatches.
    """
    num_nodes = int(num_nodes)
    if num_nodes < 0:
        raise ValueError("num_nodes must be non-negative")

    features = np.asarray(node_features)
    if features.dtype.kind not in "fiu":
        raise ValueError("node features must be numeric")
    if features.dtype.kind in "iu":
        features = features.astype(np.float64)
    if features.ndim != 2:
        raise ValueError(f"node features must be 2-D, got {features.ndim}-D")
    if features.shape[0] != num_nodes:
        raise ValueError(
            f"node feature rows ({features.shape[0]}) != num_nodes ({num_nodes})"
        )

    edges = np.asarray(edge_list, dtype=np.int64)
    if edges.size == 0:
        edges = np.zeros((0, 2), dtype=np.int64)
    if edges.ndim != 2 or edges.shape[1] != 2:
        raise ValueError("edge list must be a sequence of (src, dst) pairs")

    ef = None
    if edge_features is not None:
        ef = np.asarray(edge_features)
        if ef.dtype.kind in "iu":
            ef = ef.astype(np.float64)
        if ef.ndim != 2:
            raise ValueError("edge features must be 2-D")
        if ef.shape[0] != edges.shape[0]:
            raise ValueError(
                f"edge feature rows ({ef.shape[0]}) != num_edges ({edges.shape[0]})"
            )

    if edges.shape[0]:
        if edges.min() < 0 or edges.max() >= num_nodes:
            raise ValueError("edge endpoint index out of range")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise ValueError("self-loops are not allowed")
        order = np.lexsort((edges[:, 1], edges[:, 0]))
        edges = edges[order]
        if ef is not None:
            ef = ef[order]
        dup = np.all(edges[1:] == edges[:-1], axis=1)
        if np.any(dup):
            i, j = edges[np.flatnonzero(dup)[0] + 1]
            raise ValueError(f"duplicate directed edge ({i}, {j})")

    return Graph(
        num_nodes,
        _freeze(features.copy()),
        _freeze(edges.copy()),
        None if ef is None else _freeze(ef.copy()),
    )


def symmetrize(graph: Graph) -> Graph:
    """Ensure every edge has its reverse.

    Added reverse edges copy the forward edge's features. Existing edges
    (and their features) are kept untouched; the operation is idempotent.
    """
    if graph.num_edges == 0:
        return graph
    fwd = graph.edges
    rev = fwd[:, ::-1]
    both = np.concatenate([fwd, rev], axis=0)
    key = both[:, 0] * np.int64(graph.num_nodes) + both[:, 1]
    # np.unique returns the first occurrence: forward edges win over added
    # reversals, preserving their features.
    _, first = np.unique(key, return_index=True)
    edges = both[first]
    ef = None
    if graph.edge_features is not None:
        ef_both = np.concatenate([graph.edge_features, graph.edge_features], axis=0)
        ef = ef_both[first]
    return build_graph(graph.num_nodes, edges, graph.node_features, ef)


def in_neighbors(graph: Graph, j: int) -> np.ndarray:
    """Sources of all edges ending at node ``j``, in canonical edge order."""
    if not 0 <= j < graph.num_nodes:
        raise ValueError(f"node index {j} out of range")
    return graph.edge_src[graph.edge_dst == j].copy()


def batch(graphs: Sequence[Graph]) -> BatchedGraph:
    """Disjoint union: node indices of graph k are offset by preceding totals."""
    if len(graphs) == 0:
        raise ValueError("cannot batch an empty list of graphs")
    width = graphs[0].feature_width
    has_ef = graphs[0].edge_features is not None
    ef_width = graphs[0].edge_feature_width
    for g in graphs:
        if g.num_nodes == 0:
            raise ValueError("cannot batch a graph with zero nodes")
        if g.feature_width != width:
            raise ValueError(
                f"feature width mismatch: {g.feature_width} != {width}"
            )
        if (g.edge_features is not None) != has_ef or g.edge_feature_width != ef_width:
            raise ValueError("edge feature presence/width mismatch across graphs")

    sizes = np.array([g.num_nodes for g in graphs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    edges = np.concatenate(
        [g.edges + off for g, off in zip(graphs, offsets)], axis=0
    ) if any(g.num_edges for g in graphs) else np.zeros((0, 2), dtype=np.int64)
    features = np.concatenate([g.node_features for g in graphs], axis=0)
    ef = (
        np.concatenate([g.edge_features for g in graphs], axis=0) if has_ef else None
    )
    graph_id = np.repeat(np.arange(len(graphs), dtype=np.int64), sizes)
    merged = build_graph(int(sizes.sum()), edges, features, ef)
    return BatchedGraph(merged, _freeze(graph_id), len(graphs))


# Fill palette for cluster-coloured DOT output (colour-blind friendly hexes).
_DOT_PALETTE = (
    "#a6cee3", "#fdbf6f", "#b2df8a", "#fb9a99", "#cab2d6", "#ffff99",
    "#1f78b4", "#ff7f00", "#33a02c", "#e31a1c", "#6a3d9a", "#b15928",
)


def to_dot(graph: Graph, cluster_colors: Sequence[int] | None = None, name: str = "g") -> str:
    """Render as DOT text. Reverse edge pairs are drawn once (undirected).

    ``cluster_colors`` assigns a cluster ordinal per node; nodes sharing an
    ordinal are filled with the same palette colour.
    """
    lines = [f"graph {name} {{", "  node [shape=circle];"]
    for v in range(graph.num_nodes):
        attrs = ""
        if cluster_colors is not None:
            color = _DOT_PALETTE[int(cluster_colors[v]) % len(_DOT_PALETTE)]
            attrs = f' [style=filled, fillcolor="{color}"]'
        lines.append(f"  {v}{attrs};")
    if graph.num_edges:
        pairs = np.sort(graph.edges, axis=1)
        pairs = np.unique(pairs, axis=0)
        for u, v in pairs:
            lines.append(f"  {u} -- {v};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def graph_to_json(
    graph: Graph,
    label: int | None = None,
    node_labels: Sequence[int] | None = None,
) -> dict:
    """JSON-ready dict in the interchange graph format."""
    obj: dict = {
        "num_nodes": graph.num_nodes,
        "edges": graph.edges.tolist(),
        "node_features": graph.node_features.tolist(),
    }
    if graph.edge_features is not None:
        obj["edge_features"] = graph.edge_features.tolist()
    if label is not None:
        obj["label"] = int(label)
    if node_labels is not None:
        obj["node_labels"] = [int(x) for x in node_labels]
    return obj


def graph_from_json(obj: dict) -> Graph:
    """Build a validated Graph from an interchange-format dict."""
    if "num_nodes" not in obj or "edges" not in obj or "node_features" not in obj:
        raise ValueError("graph JSON requires num_nodes, edges, node_features")
    return build_graph(
        obj["num_nodes"],
        obj["edges"],
        np.asarray(obj["node_features"], dtype=np.float64),
        None
        if obj.get("edge_features") is None
        else np.asarray(obj["edge_features"], dtype=np.float64),
    )


def load_graph_file(path) -> tuple[Graph, int | None, np.ndarray | None]:
    """Load a single-graph JSON file; returns (graph, label, node_labels)."""
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    graph = graph_from_json(obj)
    label = obj.get("label")
    node_labels = obj.get("node_labels")
    if node_labels is not None:
        node_labels = np.asarray(node_labels, dtype=np.int64)
        if node_labels.shape != (graph.num_nodes,):
            raise ValueError("node_labels length must equal num_nodes")
    return graph, (None if label is None else int(label)), node_labels


def save_graph_file(path, graph: Graph, label=None, node_labels=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(graph_to_json(graph, label, node_labels), fh)
