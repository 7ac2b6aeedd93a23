"""Edge-contraction pooling: scoring, greedy selection, merge, exact backward.

One pooling level works in four stages:

1. every directed edge gets a raw score, a linear function of the
   concatenated endpoint features (plus edge features, when configured);
2. raw scores are normalized per destination node with a softmax shifted
   so the score range is centred at 1;
3. edges are contracted greedily in score order, skipping any edge with an
   already-merged endpoint, which yields a maximal matching;
4. each matched pair collapses to one node whose feature vector is the sum
   of the pair's features gated (multiplied) by the edge score, so that
   gradients reach the scoring parameters despite the discrete selection.

The backward pass differentiates stages 1, 2, and 4 exactly, treating the
selection of stage 3 as a constant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import Graph, build_graph
from .rng import seeded_rng

__all__ = [
    "PoolParams",
    "EdgeScores",
    "PoolInfo",
    "WeightedCombine",
    "raw_scores",
    "normalize_scores",
    "apply_score_dropout",
    "select_contractions",
    "contract",
    "edgepool_forward",
    "edgepool_backward",
    "random_pool_params",
    "pool_hierarchy",
    "hierarchy_to_json",
]


@dataclass(frozen=True)
class PoolParams:
    """Linear edge scorer: weight has length 2f, or 2f+g with edge features."""

    weight: np.ndarray
    bias: float

    def expected_widths(self) -> tuple[int, int]:
        """(node feature width, edge feature width) this scorer accepts.

        Ambiguous on its own; resolved against a concrete graph in
        :func:`raw_scores`.
        """
        return len(self.weight) // 2, len(self.weight) % 2


@dataclass(frozen=True)
class EdgeScores:
    """Per-directed-edge scores for one pooling level.

    ``raw`` holds the scorer output before any dropout. ``normalized`` is
    the shifted softmax value in (0.5, 1.5) for kept edges and exactly 0.0
    for dropped ones. ``dropped`` marks edges removed by score dropout;
    they take part in neither normalization nor selection.
    """

    raw: np.ndarray
    normalized: np.ndarray
    dropped: np.ndarray


@dataclass(frozen=True)
class PoolInfo:
    """One coarsening level: which pairs merged and how to map back.

    ``matching`` lists the contracted directed edges in selection order;
    pooled node c < len(matching) is the merge of matching[c]. ``cluster_of``
    maps every original node to its pooled node. ``node_score`` is the
    gating score of the edge that merged the node (1.0 for unmatched nodes).
    ``matched_edge_index`` caches each matched pair's canonical edge index.
    """

    matching: np.ndarray
    cluster_of: np.ndarray
    node_score: np.ndarray
    pooled_num_nodes: int
    matched_edge_index: np.ndarray

    @property
    def num_matched(self) -> int:
        return int(self.matching.shape[0])


@dataclass(frozen=True)
class WeightedCombine:
    """Optional merge rule: weighted linear combination instead of plain sum.

    The merged feature becomes
    ``s * (w_src*n_i + w_dst*n_j + w_edge*f_ij + w_reverse_edge*f_ji)``.
    Edge weights require edge features with the node feature width; a
    missing reverse edge contributes zeros.
    """

    w_src: float = 1.0
    w_dst: float = 1.0
    w_edge: float = 0.0
    w_reverse_edge: float = 0.0

    @property
    def uses_edge_features(self) -> bool:
        return self.w_edge != 0.0 or self.w_reverse_edge != 0.0


def _check_widths(graph: Graph, params: PoolParams) -> int:
    f = graph.feature_width
    g = graph.edge_feature_width
    expected = 2 * f + g
    if len(params.weight) != expected:
        raise ValueError(
            f"scorer weight length {len(params.weight)} does not match "
            f"2*{f}+{g}={expected} for this graph"
        )
    return f


def raw_scores(graph: Graph, params: PoolParams) -> np.ndarray:
    """Linear raw score per directed edge, in float64.

    For edge (i, j): weight . (features_i ++ features_j [++ edge_features])
    plus bias.
    """
    f = _check_widths(graph, params)
    w = np.asarray(params.weight, dtype=np.float64)
    x = graph.node_features.astype(np.float64, copy=False)
    r = x[graph.edge_src] @ w[:f] + x[graph.edge_dst] @ w[f : 2 * f]
    if graph.edge_feature_width:
        r += graph.edge_features.astype(np.float64, copy=False) @ w[2 * f :]
    return r + float(params.bias)


def normalize_scores(
    graph: Graph, raw: np.ndarray, dropped: np.ndarray | None = None
) -> np.ndarray:
    """Shifted softmax over the incoming edges of each destination node.

    For every non-dropped edge (i, j): 0.5 plus the softmax (over all
    non-dropped edges into j) of the raw score, computed with
    max-subtraction in double precision. Dropped edges get exactly 0.0.
    Kept values lie in (0.5, 1.5) and, per destination, sum to
    (#incoming kept) * 0.5 + 1.
    """
    m = graph.num_edges
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape != (m,):
        raise ValueError(f"raw scores must have shape ({m},)")
    if dropped is None:
        dropped = np.zeros(m, dtype=bool)
    out = np.zeros(m, dtype=np.float64)
    keep = ~np.asarray(dropped, dtype=bool)
    if not keep.any():
        return out
    dst = graph.edge_dst[keep]
    r = raw[keep]
    mx = np.full(graph.num_nodes, -np.inf)
    np.maximum.at(mx, dst, r)
    ex = np.exp(r - mx[dst])
    denom = np.zeros(graph.num_nodes, dtype=np.float64)
    np.add.at(denom, dst, ex)
    out[keep] = 0.5 + ex / denom[dst]
    return out


def apply_score_dropout(
    scores: np.ndarray, p: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Independently drop each edge with probability ``p`` (training only).

    Returns (scores with dropped entries zeroed, boolean dropped mask).
    Deterministic given the seed.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    scores = np.asarray(scores, dtype=np.float64)
    rng = seeded_rng(seed, "edge-score-dropout")
    dropped = rng.random(scores.shape[0]) < p
    masked = scores.copy()
    masked[dropped] = 0.0
    return masked, dropped


def select_contractions(graph: Graph, scores: EdgeScores) -> np.ndarray:
    """Greedy maximal matching over non-dropped edges.

    Edges are visited by normalized score descending, canonical edge index
    ascending on ties; an edge is taken iff neither endpoint is matched
    yet. One global sort plus a linear sweep gives the same result as
    repeatedly rescanning for the best remaining edge. Returns the matched
    directed edges, in selection order, as an (k, 2) array.
    """
    keep = np.flatnonzero(~scores.dropped)
    if keep.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    order = keep[np.argsort(-scores.normalized[keep], kind="stable")]
    src = graph.edges[order, 0].tolist()
    dst = graph.edges[order, 1].tolist()
    matched = bytearray(graph.num_nodes)
    pairs = []
    for i, j in zip(src, dst):
        if not matched[i] and not matched[j]:
            matched[i] = 1
            matched[j] = 1
            pairs.append((i, j))
    if not pairs:
        return np.zeros((0, 2), dtype=np.int64)
    return np.asarray(pairs, dtype=np.int64)


def _edge_lookup(graph: Graph, pairs: np.ndarray) -> np.ndarray:
    """Canonical edge indices of (src, dst) pairs; raises if absent."""
    if pairs.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    n = np.int64(graph.num_nodes)
    keys = graph.edges[:, 0] * n + graph.edges[:, 1]
    want = pairs[:, 0] * n + pairs[:, 1]
    idx = np.searchsorted(keys, want)
    ok = (idx < len(keys)) & (keys[np.minimum(idx, len(keys) - 1)] == want)
    if not ok.all():
        bad = pairs[np.flatnonzero(~ok)[0]]
        raise ValueError(f"({bad[0]}, {bad[1]}) is not an edge of the graph")
    return idx


def _pair_features(
    graph: Graph,
    matching: np.ndarray,
    edge_idx: np.ndarray,
    combine: WeightedCombine | None,
) -> np.ndarray:
    """Pre-gating merged features per matched edge, float64, (k, f)."""
    x = graph.node_features.astype(np.float64, copy=False)
    if combine is None:
        return x[matching[:, 0]] + x[matching[:, 1]]
    merged = combine.w_src * x[matching[:, 0]] + combine.w_dst * x[matching[:, 1]]
    if combine.uses_edge_features:
        if graph.edge_feature_width != graph.feature_width:
            raise ValueError(
                "weighted combine with edge terms requires edge features "
                "with the node feature width"
            )
        ef = graph.edge_features.astype(np.float64, copy=False)
        merged = merged + combine.w_edge * ef[edge_idx]
        if combine.w_reverse_edge != 0.0:
            n = np.int64(graph.num_nodes)
            keys = graph.edges[:, 0] * n + graph.edges[:, 1]
            want = matching[:, 1] * n + matching[:, 0]
            idx = np.searchsorted(keys, want)
            ok = (idx < len(keys)) & (keys[np.minimum(idx, len(keys) - 1)] == want)
            rev = np.zeros_like(merged[:, : graph.feature_width])
            if ok.any():
                rev[ok] = ef[idx[ok]]
            merged = merged + combine.w_reverse_edge * rev
    return merged


def contract(
    graph: Graph,
    matching: np.ndarray | Sequence,
    scores: EdgeScores,
    combine: WeightedCombine | None = None,
) -> tuple[Graph, PoolInfo]:
    """Collapse each matched edge into one node; rebuild the edge set.

    Pooled node order: merged nodes first in matching order, then unmatched
    nodes in original order. Pooled edges are the image of the original
    edges under the cluster map, with self-loops removed and parallel
    edges deduplicated (edge features of collapsing edges are summed).
    """
    matching = np.asarray(matching, dtype=np.int64).reshape(-1, 2)
    v = graph.num_nodes
    k = matching.shape[0]

    if k:
        ends = matching.ravel()
        if len(np.unique(ends)) != 2 * k:
            raise ValueError("invalid matching: a node appears in two matched edges")

    edge_idx = _edge_lookup(graph, matching)
    s = scores.normalized[edge_idx] if k else np.zeros(0)
    if k and np.any(s <= 0.0):
        raise ValueError("cannot contract a dropped (zero-score) edge")

    cluster_of = np.full(v, -1, dtype=np.int64)
    cluster_of[matching[:, 0]] = np.arange(k)
    cluster_of[matching[:, 1]] = np.arange(k)
    unmatched = np.flatnonzero(cluster_of < 0)
    cluster_of[unmatched] = k + np.arange(len(unmatched))

    node_score = np.ones(v, dtype=np.float64)
    node_score[matching[:, 0]] = s
    node_score[matching[:, 1]] = s

    pooled_n = v - k
    feats = np.empty((pooled_n, graph.feature_width), dtype=np.float64)
    feats[:k] = s[:, None] * _pair_features(graph, matching, edge_idx, combine)
    feats[k:] = graph.node_features[unmatched]

    mapped = cluster_of[graph.edges]
    keep = mapped[:, 0] != mapped[:, 1]
    mapped = mapped[keep]
    ef = None
    if mapped.shape[0]:
        uniq, inverse = np.unique(mapped, axis=0, return_inverse=True)
        if graph.edge_features is not None:
            ef = np.zeros((uniq.shape[0], graph.edge_feature_width), dtype=np.float64)
            np.add.at(ef, inverse, graph.edge_features[keep].astype(np.float64))
            ef = ef.astype(graph.edge_features.dtype)
    else:
        uniq = np.zeros((0, 2), dtype=np.int64)
        if graph.edge_features is not None:
            ef = np.zeros((0, graph.edge_feature_width), dtype=graph.edge_features.dtype)

    pooled = build_graph(pooled_n, uniq, feats.astype(graph.node_features.dtype), ef)
    info = PoolInfo(
        matching=matching,
        cluster_of=cluster_of,
        node_score=node_score,
        pooled_num_nodes=pooled_n,
        matched_edge_index=edge_idx,
    )
    return pooled, info


def edgepool_forward(
    graph: Graph,
    params: PoolParams,
    training: bool = False,
    dropout_p: float = 0.0,
    seed: int | None = None,
    combine: WeightedCombine | None = None,
) -> tuple[Graph, PoolInfo, EdgeScores]:
    """One full pooling level: score, (dropout), normalize, select, contract.

    The dropout mask is drawn on raw edges; dropped edges are excluded from
    both the softmax denominator and selection. Dropout applies only when
    ``training`` is true.
    """
    raw = raw_scores(graph, params)
    if training and dropout_p > 0.0:
        if seed is None:
            raise ValueError("edge-score dropout requires a seed")
        _, dropped = apply_score_dropout(raw, dropout_p, seed)
    else:
        dropped = np.zeros(graph.num_edges, dtype=bool)
    normalized = normalize_scores(graph, raw, dropped)
    scores = EdgeScores(raw=raw, normalized=normalized, dropped=dropped)
    matching = select_contractions(graph, scores)
    pooled, info = contract(graph, matching, scores, combine)
    return pooled, info, scores


def edgepool_backward(
    graph: Graph,
    params: PoolParams,
    info: PoolInfo,
    scores: EdgeScores,
    upstream_grad: np.ndarray,
    combine: WeightedCombine | None = None,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Exact reverse-mode derivatives of one pooling level.

    ``upstream_grad`` is the loss gradient w.r.t. the pooled node features.
    Returns gradients w.r.t. the input node features, the scorer weight,
    and the scorer bias. The matching is a constant of the backward pass;
    the gradient flows through the gating score, whose softmax couples all
    non-dropped edges sharing a destination with a matched edge.
    """
    v, f = graph.num_nodes, graph.feature_width
    k = info.num_matched
    upstream = np.asarray(upstream_grad, dtype=np.float64)
    if upstream.shape != (info.pooled_num_nodes, f):
        raise ValueError(
            f"upstream gradient must have shape ({info.pooled_num_nodes}, {f})"
        )
    grad_x = np.zeros((v, f), dtype=np.float64)
    grad_w = np.zeros(np.asarray(params.weight).shape, dtype=np.float64)
    grad_b = 0.0

    # Unmatched nodes: plain copy, gradient passes through unchanged.
    unmatched = np.flatnonzero(info.cluster_of >= k)
    grad_x[unmatched] = upstream[info.cluster_of[unmatched]]

    if k:
        mi, mj = info.matching[:, 0], info.matching[:, 1]
        e_idx = info.matched_edge_index
        s = scores.normalized[e_idx]
        g_out = upstream[:k]

        w_src = combine.w_src if combine is not None else 1.0
        w_dst = combine.w_dst if combine is not None else 1.0
        np.add.at(grad_x, mi, (w_src * s)[:, None] * g_out)
        np.add.at(grad_x, mj, (w_dst * s)[:, None] * g_out)

        pair = _pair_features(graph, info.matching, e_idx, combine)
        g_s = np.einsum("kf,kf->k", g_out, pair)

        sx, sw, sb = score_path_backward(graph, params, info, scores, g_s)
        grad_x += sx
        grad_w += sw
        grad_b += sb

    dtype = graph.node_features.dtype
    return grad_x.astype(dtype), grad_w.astype(dtype), grad_b


def score_path_backward(
    graph: Graph,
    params: PoolParams,
    info: PoolInfo,
    scores: EdgeScores,
    g_s: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Gradients of sum_e g_s[e] * s_e over the matched edges.

    ``g_s`` is the loss gradient w.r.t. the normalized score of each
    matched edge, ordered like info.matching. Returns gradients w.r.t.
    node features, scorer weight, and scorer bias. Shared by the merge
    gating and by any later consumer of the scores (unpooling divides by
    them), both of which route their score gradients through here.
    """
    v, f = graph.num_nodes, graph.feature_width
    w = np.asarray(params.weight, dtype=np.float64)
    x = graph.node_features.astype(np.float64, copy=False)
    grad_x = np.zeros((v, f), dtype=np.float64)
    grad_w = np.zeros_like(w)
    grad_b = 0.0
    e_idx = info.matched_edge_index
    g_s = np.asarray(g_s, dtype=np.float64)
    if g_s.shape != (info.num_matched,):
        raise ValueError(f"g_s must have shape ({info.num_matched},)")
    if info.num_matched == 0:
        return grad_x, grad_w, grad_b

    # Softmax coupling: within the destination group of matched edge e,
    # d s_e / d r_k = p_e (delta_ek - p_k) with p = normalized - 0.5.
    # Matched destinations are distinct, so one coefficient per group.
    keep = ~scores.dropped
    p = np.where(keep, scores.normalized - 0.5, 0.0)
    group_coeff = np.zeros(v, dtype=np.float64)  # g_s * p_e per destination
    group_coeff[graph.edges[e_idx, 1]] = g_s * p[e_idx]
    grad_r = -group_coeff[graph.edge_dst] * p
    grad_r[e_idx] += g_s * p[e_idx]

    # Linear scorer backward, restricted to edges with nonzero grad_r.
    live = np.flatnonzero(grad_r != 0.0)
    if live.size:
        gr = grad_r[live]
        src, dst = graph.edges[live, 0], graph.edges[live, 1]
        grad_w[:f] = gr @ x[src]
        grad_w[f : 2 * f] = gr @ x[dst]
        if graph.edge_feature_width:
            grad_w[2 * f :] = gr @ graph.edge_features[live].astype(np.float64)
        grad_b = float(gr.sum())
        np.add.at(grad_x, src, gr[:, None] * w[:f])
        np.add.at(grad_x, dst, gr[:, None] * w[f : 2 * f])
    return grad_x, grad_w, grad_b


def random_pool_params(
    feature_width: int,
    edge_feature_width: int = 0,
    seed: int = 0,
    scale: float = 1.0,
) -> PoolParams:
    """Gaussian scorer parameters, for visualization and property checks."""
    rng = seeded_rng(seed, "pool-params")
    n = 2 * feature_width + edge_feature_width
    return PoolParams(weight=rng.normal(0.0, scale, size=n), bias=0.0)


def pool_hierarchy(
    graph: Graph,
    params: PoolParams,
    levels: int,
) -> list[tuple[Graph, PoolInfo, EdgeScores]]:
    """Pool repeatedly with the same scorer; one entry per level."""
    out = []
    current = graph
    for _ in range(levels):
        pooled, info, scores = edgepool_forward(current, params)
        out.append((pooled, info, scores))
        current = pooled
    return out


def hierarchy_to_json(levels: list[tuple[Graph, PoolInfo, EdgeScores]]) -> list[dict]:
    """Serialize a pooling hierarchy: one dict per level.

    Each level carries the cluster map, the matching, the per-node gating
    scores, and the pooled graph in the interchange format.
    """
    from .graph import graph_to_json

    out = []
    for pooled, info, _ in levels:
        out.append(
            {
                "cluster_of": info.cluster_of.tolist(),
                "matching": info.matching.tolist(),
                "node_score": info.node_score.tolist(),
                "graph": graph_to_json(pooled),
            }
        )
    return out
