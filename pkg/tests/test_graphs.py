"""Graph construction, masks, the subgraph lattice, and persistence."""

import itertools

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gxplain.errors import (
    DuplicateEdgeError,
    FeatureDimMismatchError,
    InvalidMaskError,
    SelfLoopError,
    TooLargeError,
)
from gxplain.graphs import (
    Graph,
    SizeMetric,
    SubgraphMask,
    all_masks,
    apply_mask,
    build_graph,
    connected_components,
    enumerate_masks_by_size,
    graph_from_record,
    graph_to_record,
    has_cycle,
    lattice_children,
    lattice_parents,
    validate_mask,
)


def small_graphs(max_n=5):
    return st.integers(1, max_n).flatmap(
        lambda n: st.lists(
            st.sampled_from(list(itertools.combinations(range(n), 2))
                            or [(0, 0)]),
            unique=True, max_size=n * (n - 1) // 2,
        ).map(lambda es: build_graph(n, [e for e in es if e[0] != e[1]])))


def test_build_graph_canonicalizes_edges():
    g = build_graph(4, [(3, 1), (0, 2)])
    assert g.edges == ((0, 2), (1, 3))


def test_build_graph_rejects_self_loop():
    with pytest.raises(SelfLoopError):
        build_graph(3, [(1, 1)])


def test_build_graph_rejects_duplicate_even_reversed():
    with pytest.raises(DuplicateEdgeError):
        build_graph(3, [(0, 1), (1, 0)])


def test_build_graph_rejects_dangling_edge():
    with pytest.raises(InvalidMaskError):
        build_graph(2, [(0, 5)])


def test_build_graph_feature_validation():
    with pytest.raises(FeatureDimMismatchError):
        build_graph(2, [], features=[[1.0]])
    with pytest.raises(FeatureDimMismatchError):
        build_graph(2, [], features=[[1.0], [1.0, 0.0]])
    with pytest.raises(FeatureDimMismatchError):
        build_graph(2, [], names=["red"])
    g = build_graph(2, [], features=[[1.0, 0.0], [0.0, 1.0]])
    assert g.feature_names == ("f0", "f1")


def test_degree_and_neighbors():
    g = build_graph(4, [(0, 1), (0, 2), (2, 3)])
    assert g.degree(0) == 2
    assert sorted(g.neighbors(2)) == [0, 3]
    assert g.neighbors(3) == [2]


def test_apply_mask_relabels_contiguously():
    g = build_graph(5, [(0, 3), (3, 4)],
                    features=[[1.0]] * 5, names=["red"])
    m = SubgraphMask(frozenset({0, 3, 4}), frozenset({(3, 4)}))
    sub, relabel = apply_mask(g, m)
    assert sub.n == 3
    assert relabel == {0: 0, 3: 1, 4: 2}
    assert sub.edges == ((1, 2),)
    assert sub.features == ((1.0,), (1.0,), (1.0,))


def test_validate_mask_rejects_edge_without_endpoint():
    g = build_graph(3, [(0, 1)])
    with pytest.raises(InvalidMaskError):
        validate_mask(g, SubgraphMask(frozenset({0}), frozenset({(0, 1)})))


def test_all_masks_count_formula():
    # Valid masks = sum over node subsets S of 2^{|edges inside S|}.
    g = build_graph(4, [(0, 1), (1, 2), (2, 3), (0, 3)])
    want = 0
    for k in range(g.n + 1):
        for sub in itertools.combinations(range(g.n), k):
            inside = sum(1 for u, v in g.edges
                         if u in sub and v in sub)
            want += 2 ** inside
    assert len(all_masks(g)) == want


def test_all_masks_respects_cap():
    g = build_graph(6, [(u, v) for u in range(6) for v in range(u + 1, 6)])
    with pytest.raises(TooLargeError):
        all_masks(g, cap=10)


@settings(max_examples=40, deadline=None)
@given(small_graphs(4))
def test_lattice_children_parents_adjoint(g):
    # c is a child of m exactly when m is a parent of c.
    masks = all_masks(g)
    mask_set = set(masks)
    for m in masks:
        for c in lattice_children(g, m):
            assert c in mask_set
            assert m in lattice_parents(g, c)


def test_enumerate_masks_by_size_is_sorted():
    g = build_graph(3, [(0, 1), (1, 2)])
    metric = SizeMetric.EDGES_PLUS_NODES
    sizes = [metric.size(m, g) for m in enumerate_masks_by_size(g)]
    assert sizes == sorted(sizes)


def test_size_metrics():
    g = build_graph(3, [(0, 1)], features=[[1.0], [0.0], [1.0]],
                    names=["red"])
    m = SubgraphMask(frozenset({0, 1}), frozenset({(0, 1)}))
    assert SizeMetric.EDGES_ONLY.size(m, g) == 1
    assert SizeMetric.NODES_ONLY.size(m, g) == 2
    assert SizeMetric.EDGES_PLUS_NODES.size(m, g) == 3
    # One extra unit for node 0's nonzero feature entry.
    assert SizeMetric.EDGES_NODES_FEATURES.size(m, g) == 4


@settings(max_examples=60, deadline=None)
@given(small_graphs(6))
def test_has_cycle_matches_networkx(g):
    nxg = nx.Graph()
    nxg.add_nodes_from(range(g.n))
    nxg.add_edges_from(g.edges)
    want = len(nx.cycle_basis(nxg)) > 0
    assert has_cycle(g) == want


@settings(max_examples=60, deadline=None)
@given(small_graphs(6))
def test_connected_components_match_networkx(g):
    nxg = nx.Graph()
    nxg.add_nodes_from(range(g.n))
    nxg.add_edges_from(g.edges)
    want = sorted(sorted(c) for c in nx.connected_components(nxg))
    got = sorted(sorted(c) for c in connected_components(g))
    assert got == want


def test_jsonl_round_trip():
    g = build_graph(3, [(0, 1), (1, 2)],
                    features=[[1.0, 0.0]] * 3, names=["red", "blue"])
    line = graph_to_record(g, y=1, gt_edges=[(1, 2)])
    g2, y, gt = graph_from_record(line)
    assert g2 == g
    assert y == 1
    assert gt == [(1, 2)]


def test_digest_changes_with_features():
    a = build_graph(2, [(0, 1)], features=[[1.0], [0.0]], names=["red"])
    b = build_graph(2, [(0, 1)], features=[[0.0], [1.0]], names=["red"])
    assert a.digest() != b.digest()
