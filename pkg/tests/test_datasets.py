"""Synthetic task generators: label soundness, determinism, and shapes."""

import numpy as np
import pytest

from gxplain.datasets import (
    DatasetSpec,
    gen_barabasi_albert,
    gen_erdos_renyi,
    generate,
    load_split,
    save_split,
)
from gxplain.dsl import evaluate, get_builtin
from gxplain.errors import BadParamsError, SchemaError
from gxplain.graphs import build_graph, connected_components, has_cycle


def test_ba_edge_count_and_connectivity():
    rng = np.random.default_rng(0)
    n, m = 15, 2
    g = gen_barabasi_albert(n, m, rng)
    assert g.n == n
    assert len(g.edges) == m * (m - 1) // 2 + (n - m) * m
    assert len(connected_components(g)) == 1


def test_ba_m1_is_a_tree():
    rng = np.random.default_rng(3)
    g = gen_barabasi_albert(12, 1, rng)
    assert len(g.edges) == 11
    assert not has_cycle(g)


def test_ba_rejects_bad_params():
    with pytest.raises(BadParamsError):
        gen_barabasi_albert(2, 2, np.random.default_rng(0))


def test_er_edge_probability_extremes():
    rng = np.random.default_rng(0)
    assert gen_erdos_renyi(6, 0.0, rng).edges == ()
    assert len(gen_erdos_renyi(6, 1.0, rng).edges) == 15
    with pytest.raises(BadParamsError):
        gen_erdos_renyi(6, 1.5, rng)


def test_spec_validation():
    with pytest.raises(BadParamsError):
        DatasetSpec(task="nope", count=5)
    with pytest.raises(BadParamsError):
        DatasetSpec(task="redblue", count=0)
    with pytest.raises(BadParamsError):
        DatasetSpec(task="redblue", count=5, ood="weird")
    with pytest.raises(BadParamsError):
        DatasetSpec(task="redblue", count=5, size_range=(2, 5))


def test_redblue_labels_match_rule():
    rule = get_builtin("red-majority")
    split = generate(DatasetSpec(task="redblue", count=40, seed=3))
    for r in split.records:
        assert r.label == int(evaluate(rule, r.graph))
        assert r.graph.feature_names == ("red", "blue")
    assert set(split.class_histogram) <= {0, 1}


def test_topofeature_labels_and_ground_truth():
    rule = get_builtin("topofeature")
    split = generate(DatasetSpec(task="topofeature", count=40, seed=5))
    for r in split.records:
        assert r.label == int(evaluate(rule, r.graph))
        if r.label == 1:
            # Ground-truth cycle edges are real edges forming the cycle.
            assert r.gt_edges
            assert set(r.gt_edges) <= set(r.graph.edges)
        else:
            assert r.gt_edges is None
    assert split.class_histogram.get(0, 0) > 0
    assert split.class_histogram.get(1, 0) > 0


def test_topofeature_negative_without_cycle_is_acyclic():
    split = generate(DatasetSpec(task="topofeature", count=60, seed=2))
    saw_acyclic_negative = False
    for r in split.records:
        if r.label == 0 and not has_cycle(r.graph):
            saw_acyclic_negative = True
    assert saw_acyclic_negative


def test_motif_labels_are_motif_ids():
    split = generate(DatasetSpec(task="motif", count=30, seed=1))
    for r in split.records:
        assert r.label in (0, 1, 2)
        assert r.gt_edges and len(r.gt_edges) >= 5
        assert set(r.gt_edges) <= set(r.graph.edges)
        assert not any(v for row in r.graph.features for v in row)


def test_generation_is_deterministic(tmp_path):
    spec = DatasetSpec(task="redblue", count=25, seed=11)
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_split(generate(spec), a)
    save_split(generate(spec), b)
    assert a.read_bytes() == b.read_bytes()
    different = generate(DatasetSpec(task="redblue", count=25, seed=12))
    save_split(different, b)
    assert a.read_bytes() != b.read_bytes()


def test_ood_larger_node_count():
    split = generate(DatasetSpec(task="redblue", count=3, seed=0,
                                 ood="larger", ood_nodes=60))
    assert all(r.graph.n == 60 for r in split.records)


def test_ood_baseshift_uses_er_base():
    split = generate(DatasetSpec(task="redblue", count=10, seed=0,
                                 ood="baseshift"))
    # ER density fluctuates; BA with m=2 would be exactly 2n-5 edges.
    counts = [len(r.graph.edges) for r in split.records]
    ba_counts = [2 * r.graph.n - 5 for r in split.records]
    assert counts != ba_counts


def test_motif_baseshift_held_out_basis():
    split = generate(DatasetSpec(task="motif", count=10, seed=0,
                                 ood="baseshift"))
    # Every wheel basis contains a cycle through the hub.
    assert all(has_cycle(r.graph) for r in split.records)


def test_split_round_trip(tmp_path):
    spec = DatasetSpec(task="topofeature", count=8, seed=4)
    split = generate(spec)
    path = tmp_path / "split.jsonl"
    save_split(split, path)
    loaded = load_split(path, spec)
    assert len(loaded.records) == len(split.records)
    for a, b in zip(loaded.records, split.records):
        assert a.graph == b.graph
        assert a.label == b.label
        assert a.gt_edges == b.gt_edges


def test_load_split_schema_errors(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"n": 2, "edges": [[0,1]], "x": [], "names": []}\n')
    with pytest.raises(SchemaError):
        load_split(bad)  # record without label
    bad.write_text("not json\n")
    with pytest.raises(SchemaError):
        load_split(bad)
