"""Graph containers, normalization, batching and persistence."""

import numpy as np
import pytest

from ciga.errors import DomainError, ParseError, ShapeError, VersionError
from ciga.graphdata import (
    Batch,
    DatasetSplits,
    Graph,
    GraphMeta,
    batch,
    load_dataset,
    normalize_adjacency,
    save_dataset,
    unbatch,
)
from ciga.scmgen import GenConfig, gen_dataset


def triangle(label=0):
    return Graph(3, ((0, 1), (0, 2), (1, 2)), np.arange(6.0).reshape(3, 2), label)


class TestGraphValidation:
    def test_rejects_out_of_range_edge(self):
        with pytest.raises(DomainError):
            Graph(2, ((0, 2),), np.zeros((2, 1)), 0)

    def test_rejects_self_loop(self):
        with pytest.raises(DomainError):
            Graph(2, ((1, 1),), np.zeros((2, 1)), 0)

    def test_rejects_duplicate(self):
        with pytest.raises(DomainError):
            Graph(3, ((0, 1), (0, 1)), np.zeros((3, 1)), 0)

    def test_rejects_unordered_edge(self):
        with pytest.raises(DomainError):
            Graph(3, ((1, 0),), np.zeros((3, 1)), 0)

    def test_rejects_nonfinite_features(self):
        with pytest.raises(DomainError):
            Graph(1, (), np.array([[np.nan]]), 0)


class TestNormalizeAdjacency:
    def test_single_node_is_identity(self):
        g = Graph(1, (), np.zeros((1, 1)), 0)
        assert np.array_equal(normalize_adjacency(g), [[1.0]])

    def test_two_nodes_one_edge(self):
        g = Graph(2, ((0, 1),), np.zeros((2, 1)), 0)
        assert np.allclose(normalize_adjacency(g), np.full((2, 2), 0.5))

    def test_triangle_is_uniform_third(self):
        a = normalize_adjacency(triangle())
        assert np.allclose(a, np.full((3, 3), 1.0 / 3.0))

    def test_symmetry_and_isolated_node(self):
        g = Graph(3, ((0, 1),), np.zeros((3, 1)), 0)
        a = normalize_adjacency(g)
        assert np.array_equal(a, a.T)
        assert a[2, 2] == 1.0

    def test_spectrum_invariant_under_relabeling(self):
        rng = np.random.default_rng(3)
        cfg = GenConfig(bias=0.5, train_per_class=2, val_per_class=1,
                        test_per_class=1, seed=9)
        for g in gen_dataset(cfg).train:
            spec = np.sort(np.linalg.eigvalsh(normalize_adjacency(g)))
            perm = rng.permutation(g.num_nodes)
            spec_p = np.sort(np.linalg.eigvalsh(normalize_adjacency(g.permuted(perm))))
            assert np.max(np.abs(spec - spec_p)) < 1e-6


class TestBatch:
    def test_batch_of_one_matches_graph(self):
        g = triangle()
        b = batch([g])
        assert b.num_nodes == 3 and b.num_graphs == 1
        assert np.array_equal(b.features, g.features)
        assert np.array_equal(b.edges, g.edge_array())

    def test_two_graphs_offsets(self):
        g1 = Graph(3, ((0, 1),), np.zeros((3, 2)), 0)
        g2 = Graph(5, ((0, 4),), np.ones((5, 2)), 1)
        b = batch([g1, g2])
        assert b.num_nodes == 8
        assert list(b.graph_index) == [0, 0, 0, 1, 1, 1, 1, 1]
        assert b.edge_range(1) == (1, 2)
        assert tuple(b.edges[1]) == (3, 7)

    def test_feature_dim_mismatch(self):
        with pytest.raises(ShapeError):
            batch([triangle(), Graph(2, (), np.zeros((2, 3)), 0)])

    def test_empty_list(self):
        with pytest.raises(DomainError):
            batch([])

    def test_unbatch_is_lossless(self):
        cfg = GenConfig(bias=0.6, train_per_class=4, val_per_class=1,
                        test_per_class=1, seed=4)
        graphs = gen_dataset(cfg).train
        back = unbatch(batch(graphs))
        assert len(back) == len(graphs)
        for a, b in zip(graphs, back):
            assert a.num_nodes == b.num_nodes
            assert a.edges == b.edges
            assert np.array_equal(a.features, b.features)
            assert a.label == b.label
            assert a.meta == b.meta

    def test_batched_readout_matches_single(self):
        # Mean pooling over each member's node range reproduces per-graph means.
        graphs = [triangle(0), Graph(4, ((0, 1), (2, 3)), np.random.default_rng(0).standard_normal((4, 2)), 1)]
        b = batch(graphs)
        for i, g in enumerate(graphs):
            n0, n1 = b.node_range(i)
            pooled = b.features[n0:n1].mean(axis=0)
            assert np.max(np.abs(pooled - g.features.mean(axis=0))) < 1e-9


class TestPersistence:
    def _splits(self, seed=5):
        cfg = GenConfig(bias=0.75, train_per_class=2, val_per_class=1,
                        test_per_class=1, shift_mode="mixed_piif", seed=seed)
        return gen_dataset(cfg)

    def test_round_trip_is_field_identical(self, tmp_path):
        splits = self._splits()
        path = tmp_path / "ds.jsonl"
        save_dataset(splits, path)
        loaded = load_dataset(path)
        assert loaded.gen_config == splits.gen_config
        for orig, back in zip(splits.all_graphs(), loaded.all_graphs()):
            assert orig.num_nodes == back.num_nodes
            assert orig.edges == back.edges
            assert np.array_equal(orig.features, back.features)
            assert orig.label == back.label
            assert orig.meta == back.meta

    def test_round_trip_is_byte_identical(self, tmp_path):
        splits = self._splits()
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_dataset(splits, p1)
        save_dataset(load_dataset(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_truncated_file_is_parse_error(self, tmp_path):
        splits = self._splits()
        path = tmp_path / "ds.jsonl"
        save_dataset(splits, path)
        lines = path.read_text().splitlines()
        (tmp_path / "cut.jsonl").write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(ParseError):
            load_dataset(tmp_path / "cut.jsonl")

    def test_malformed_record_names_line(self, tmp_path):
        splits = self._splits()
        path = tmp_path / "ds.jsonl"
        save_dataset(splits, path)
        lines = path.read_text().splitlines()
        lines[3] = "{not json"
        bad = tmp_path / "bad.jsonl"
        bad.write_text("\n".join(lines) + "\n")
        with pytest.raises(ParseError, match="line 4"):
            load_dataset(bad)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "ds.jsonl"
        path.write_text('{"format":"ciga-ds","version":99,"gen_config":null,'
                        '"counts":{"train":0,"val":0,"test":0}}\n')
        with pytest.raises(VersionError):
            load_dataset(path)

    def test_empty_splits_round_trip(self, tmp_path):
        splits = DatasetSplits(train=[], val=[], test=[], gen_config=None)
        path = tmp_path / "empty.jsonl"
        save_dataset(splits, path)
        loaded = load_dataset(path)
        assert loaded.train == [] and loaded.val == [] and loaded.test == []
