"""Independent reference implementations used to validate the library.

Everything here is written the slow, obvious way (python loops, repeated
scans) so that agreement with the optimized code is meaningful.
"""

from __future__ import annotations

import math

import numpy as np


def naive_normalize(edges: np.ndarray, raw: np.ndarray, dropped: np.ndarray) -> np.ndarray:
    """Per-destination softmax plus 0.5, one edge at a time."""
    out = np.zeros(len(raw), dtype=np.float64)
    for e, (_, dst) in enumerate(edges):
        if dropped[e]:
            continue
        group = [
            k for k, (_, d) in enumerate(edges) if d == dst and not dropped[k]
        ]
        m = max(raw[k] for k in group)
        denom = sum(math.exp(raw[k] - m) for k in group)
        out[e] = 0.5 + math.exp(raw[e] - m) / denom
    return out


def naive_matching(edges: np.ndarray, normalized: np.ndarray, dropped: np.ndarray) -> list:
    """Repeated argmax over still-contractible edges, O(E^2).

    Ties break toward the lower canonical edge index, matching the library's
    declared ordering.
    """
    matched_nodes: set[int] = set()
    matching = []
    while True:
        best = None
        for e, (src, dst) in enumerate(edges):
            if dropped[e] or src in matched_nodes or dst in matched_nodes:
                continue
            if best is None or normalized[e] > normalized[best]:
                best = e
        if best is None:
            return matching
        src, dst = int(edges[best][0]), int(edges[best][1])
        matching.append((src, dst))
        matched_nodes.update((src, dst))


def naive_contract_features(
    node_features: np.ndarray,
    matching: list,
    normalized_by_pair: list,
) -> np.ndarray:
    """Merged rows first (matching order), then unmatched in node order."""
    n = node_features.shape[0]
    used = set()
    rows = []
    for (i, j), s in zip(matching, normalized_by_pair):
        rows.append(s * (node_features[i] + node_features[j]))
        used.update((i, j))
    for v in range(n):
        if v not in used:
            rows.append(node_features[v].astype(np.float64))
    return np.asarray(rows)


def brute_force_max_matching_size(num_nodes: int, undirected_pairs: set) -> int:
    """Size of a maximum (not merely maximal) matching, by recursion.

    Used only to sanity-check reduction ratios on tiny graphs.
    """
    pairs = sorted(undirected_pairs)

    def rec(available: frozenset, idx: int) -> int:
        best = 0
        for k in range(idx, len(pairs)):
            i, j = pairs[k]
            if i in available and j in available:
                best = max(best, 1 + rec(available - {i, j}, k + 1))
        return best

    return rec(frozenset(range(num_nodes)), 0)
