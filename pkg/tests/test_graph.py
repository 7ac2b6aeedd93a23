"""Graph construction, validation, batching, and serialization."""

import json

import numpy as np
import pytest

from edgepool import (
    batch,
    build_graph,
    graph_from_json,
    graph_to_json,
    in_neighbors,
    load_graph_file,
    save_graph_file,
    symmetrize,
    to_dot,
)
from edgepool.rng import seeded_rng


def features(n, f=1):
    return np.arange(n * f, dtype=np.float64).reshape(n, f)


class TestBuildGraph:
    def test_minimal_symmetric_pair(self):
        g = build_graph(2, [(0, 1), (1, 0)], features(2))
        assert g.num_nodes == 2
        assert g.num_edges == 2

    def test_index_out_of_range(self):
        with pytest.raises(ValueError):
            build_graph(2, [(0, 2)], features(2))

    def test_negative_index(self):
        with pytest.raises(ValueError):
            build_graph(2, [(-1, 0)], features(2))

    def test_duplicate_edge(self):
        with pytest.raises(ValueError):
            build_graph(2, [(0, 1), (0, 1)], features(2))

    def test_self_loop(self):
        with pytest.raises(ValueError):
            build_graph(2, [(0, 0)], features(2))

    def test_feature_row_mismatch(self):
        with pytest.raises(ValueError):
            build_graph(3, [(0, 1)], features(2))

    def test_edge_feature_row_mismatch(self):
        with pytest.raises(ValueError):
            build_graph(2, [(0, 1)], features(2), np.zeros((2, 1)))

    def test_canonical_edge_order(self):
        g = build_graph(3, [(2, 1), (0, 1), (1, 0), (0, 2)], features(3))
        assert g.edges.tolist() == [[0, 1], [0, 2], [1, 0], [2, 1]]

    def test_canonical_order_permutes_edge_features(self):
        ef = np.asarray([[10.0], [20.0]])
        g = build_graph(3, [(2, 0), (0, 1)], features(3), ef)
        assert g.edges.tolist() == [[0, 1], [2, 0]]
        assert g.edge_features.tolist() == [[20.0], [10.0]]

    def test_roundtrip_is_canonical_for_any_valid_input(self):
        rng = seeded_rng(7, "canon")
        for _ in range(25):
            n = int(rng.integers(2, 9))
            pairs = {(int(a), int(b)) for a, b in rng.integers(0, n, size=(12, 2)) if a != b}
            g = build_graph(n, sorted(pairs), features(n))
            rebuilt = build_graph(n, g.edges, g.node_features)
            assert rebuilt.edges.tolist() == g.edges.tolist()
            key = [tuple(e) for e in g.edges.tolist()]
            assert key == sorted(key)

    def test_immutable_arrays(self):
        g = build_graph(2, [(0, 1)], features(2))
        with pytest.raises(ValueError):
            g.edges[0, 0] = 1
        with pytest.raises(ValueError):
            g.node_features[0, 0] = 9.0


class TestSymmetrize:
    def test_adds_reverse(self):
        g = symmetrize(build_graph(2, [(0, 1)], features(2)))
        assert g.edges.tolist() == [[0, 1], [1, 0]]

    def test_identity_on_symmetric(self):
        g = symmetrize(build_graph(2, [(0, 1), (1, 0)], features(2)))
        h = symmetrize(g)
        assert h.edges.tolist() == g.edges.tolist()

    def test_empty_edges_unchanged(self):
        g = symmetrize(build_graph(3, [], features(3)))
        assert g.num_edges == 0

    def test_idempotent(self):
        rng = seeded_rng(0, "sym")
        for _ in range(20):
            n = int(rng.integers(2, 8))
            pairs = {(int(a), int(b)) for a, b in rng.integers(0, n, size=(10, 2)) if a != b}
            once = symmetrize(build_graph(n, sorted(pairs), features(n)))
            twice = symmetrize(once)
            assert twice.edges.tolist() == once.edges.tolist()

    def test_reverse_copies_edge_features(self):
        g = build_graph(3, [(0, 1), (2, 1)], features(3), np.asarray([[5.0], [7.0]]))
        s = symmetrize(g)
        lookup = {tuple(e): f[0] for e, f in zip(s.edges.tolist(), s.edge_features.tolist())}
        assert lookup[(1, 0)] == 5.0
        assert lookup[(1, 2)] == 7.0
        assert lookup[(0, 1)] == 5.0

    def test_forward_features_win_over_added_reverse(self):
        # (0,1) and (1,0) both present with distinct features: unchanged.
        g = build_graph(2, [(0, 1), (1, 0)], features(2), np.asarray([[1.0], [2.0]]))
        s = symmetrize(g)
        assert s.edge_features.tolist() == [[1.0], [2.0]]


class TestInNeighbors:
    def test_path_middle(self):
        g = symmetrize(build_graph(3, [(0, 1), (1, 2)], features(3)))
        assert in_neighbors(g, 1).tolist() == [0, 2]

    def test_isolated_node(self):
        g = build_graph(3, [(0, 1)], features(3))
        assert in_neighbors(g, 2).tolist() == []

    def test_star_center(self):
        g = symmetrize(build_graph(4, [(0, 1), (0, 2), (0, 3)], features(4)))
        assert in_neighbors(g, 0).tolist() == [1, 2, 3]

    def test_out_of_range(self):
        g = build_graph(2, [(0, 1)], features(2))
        with pytest.raises(ValueError):
            in_neighbors(g, 2)

    def test_sizes_sum_to_num_edges(self):
        rng = seeded_rng(3, "inn")
        for _ in range(10):
            n = int(rng.integers(2, 10))
            pairs = {(int(a), int(b)) for a, b in rng.integers(0, n, size=(15, 2)) if a != b}
            g = build_graph(n, sorted(pairs), features(n))
            total = sum(len(in_neighbors(g, j)) for j in range(n))
            assert total == g.num_edges


class TestBatch:
    def test_offsets(self):
        a = build_graph(2, [(0, 1)], features(2))
        b = build_graph(3, [(0, 1), (1, 2)], features(3))
        merged = batch([a, b])
        assert merged.graph.num_nodes == 5
        assert [2, 3] in merged.graph.edges.tolist()
        assert merged.graph_id.tolist() == [0, 0, 1, 1, 1]

    def test_single_graph_identity(self):
        a = build_graph(2, [(0, 1)], features(2))
        merged = batch([a])
        assert merged.num_graphs == 1
        assert merged.graph.edges.tolist() == a.edges.tolist()
        assert merged.graph_id.tolist() == [0, 0]

    def test_preserves_totals_and_no_cross_edges(self):
        rng = seeded_rng(11, "batch")
        graphs = []
        for _ in range(6):
            n = int(rng.integers(1, 7))
            pairs = {(int(a), int(b)) for a, b in rng.integers(0, n, size=(6, 2)) if a != b}
            graphs.append(build_graph(n, sorted(pairs), rng.normal(size=(n, 2))))
        merged = batch(graphs)
        assert merged.graph.num_nodes == sum(g.num_nodes for g in graphs)
        assert merged.graph.num_edges == sum(g.num_edges for g in graphs)
        stacked = np.vstack([g.node_features for g in graphs])
        assert np.array_equal(merged.graph.node_features, stacked)
        gid = merged.graph_id
        for i, j in merged.graph.edges:
            assert gid[i] == gid[j]

    def test_batch_count_arithmetic(self):
        # 1001 items at size 128: seven full batches plus one of 105.
        sizes = [min(128, 1001 - k * 128) for k in range((1001 + 127) // 128)]
        assert sizes == [128] * 7 + [105]

    def test_empty_list_rejected(self):
        with pytest.raises(ValueError):
            batch([])

    def test_width_mismatch_rejected(self):
        a = build_graph(2, [(0, 1)], features(2, 1))
        b = build_graph(2, [(0, 1)], features(2, 2))
        with pytest.raises(ValueError):
            batch([a, b])


class TestDot:
    def test_single_node(self):
        g = build_graph(1, [], features(1))
        text = to_dot(g)
        assert "0" in text and "graph" in text

    def test_reverse_pair_rendered_once(self):
        g = symmetrize(build_graph(2, [(0, 1)], features(2)))
        text = to_dot(g)
        assert text.count("--") == 1

    def test_cluster_colors(self):
        g = symmetrize(build_graph(4, [(0, 1), (1, 2), (2, 3)], features(4)))
        text = to_dot(g, [0, 0, 1, 1])
        fills = [ln for ln in text.splitlines() if "fillcolor" in ln]
        assert len(fills) == 4
        palette = {ln.split("fillcolor=")[1].split(",")[0].split("]")[0] for ln in fills}
        assert len(palette) == 2


class TestJson:
    def test_roundtrip(self):
        g = build_graph(3, [(0, 1), (1, 2)], features(3, 2), np.asarray([[1.0], [2.0]]))
        obj = graph_to_json(g)
        h = graph_from_json(json.loads(json.dumps(obj)))
        assert h.edges.tolist() == g.edges.tolist()
        assert np.allclose(h.node_features, g.node_features)
        assert np.allclose(h.edge_features, g.edge_features)

    def test_required_keys(self):
        with pytest.raises(ValueError):
            graph_from_json({"num_nodes": 2, "edges": []})

    def test_file_roundtrip_with_labels(self, tmp_path):
        g = build_graph(2, [(0, 1)], features(2))
        path = tmp_path / "g.json"
        save_graph_file(path, g, label=1, node_labels=[0, 1])
        h, label, node_labels = load_graph_file(path)
        assert label == 1
        assert node_labels.tolist() == [0, 1]
        assert h.edges.tolist() == g.edges.tolist()
