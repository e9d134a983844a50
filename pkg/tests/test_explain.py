"""Trivial and prime-implicant explanation enumeration against direct
brute-force oracles."""

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gxplain.dsl import as_label_fn, get_builtin, parse
from gxplain.explain import (
    LabelTable,
    enumerate_corpus,
    pi_explanations,
    robust_set,
    trivial_explanations,
    verify_te_ambiguity,
    verify_te_subset_pi,
)
from gxplain.graphs import (
    SizeMetric,
    SubgraphMask,
    all_masks,
    apply_mask,
    build_graph,
)

TRIANGLE = build_graph(3, [(0, 1), (1, 2), (0, 2)])


def small_graphs(max_n=4):
    def make(args):
        n, bits = args
        pairs = list(itertools.combinations(range(n), 2))
        return build_graph(n, [pairs[i] for i in range(len(pairs))
                               if bits >> i & 1])
    return st.integers(1, max_n).flatmap(
        lambda n: st.tuples(st.just(n),
                            st.integers(0, 2 ** (n * (n - 1) // 2) - 1))
    ).map(make)


def oracle_te(g, classifier, metric=SizeMetric.EDGES_PLUS_NODES):
    """Smallest label-preserving masks by direct scan."""
    label_fn = as_label_fn(classifier)
    target = label_fn(g)
    best, best_size = [], None
    for m in all_masks(g):
        if label_fn(apply_mask(g, m)[0]) != target:
            continue
        s = metric.size(m, g)
        if best_size is None or s < best_size:
            best, best_size = [m], s
        elif s == best_size:
            best.append(m)
    return set(best)


def oracle_pi(g, classifier):
    """Doubly exponential direct check: a mask is robust iff every
    supergraph mask preserves the label; PIs are the minimal robust masks."""
    label_fn = as_label_fn(classifier)
    target = label_fn(g)
    masks = all_masks(g)
    robust = {m for m in masks
              if all(label_fn(apply_mask(g, p)[0]) == target
                     for p in masks if m <= p)}
    return {m for m in robust
            if not any(c < m for c in robust)}


CLASSIFIERS = [get_builtin("edge-exists"),
               parse("forall x . exists y . E(x, y)"),
               get_builtin("triangle-motif"),
               parse("count(edges) >= 2")]


@settings(max_examples=40, deadline=None)
@given(small_graphs(4), st.sampled_from(range(len(CLASSIFIERS))))
def test_te_matches_direct_oracle(g, ci):
    c = CLASSIFIERS[ci]
    got = set(trivial_explanations(g, c).masks)
    assert got == oracle_te(g, c)


@settings(max_examples=40, deadline=None)
@given(small_graphs(4), st.sampled_from(range(len(CLASSIFIERS))))
def test_pi_matches_direct_oracle(g, ci):
    c = CLASSIFIERS[ci]
    got = set(pi_explanations(g, c).masks)
    assert got == oracle_pi(g, c)


@settings(max_examples=30, deadline=None)
@given(small_graphs(4), st.sampled_from(range(len(CLASSIFIERS))))
def test_robust_set_is_upward_closed(g, ci):
    c = CLASSIFIERS[ci]
    robust = robust_set(g, c)
    for m in robust:
        for p in all_masks(g):
            if m <= p:
                assert p in robust


@settings(max_examples=30, deadline=None)
@given(small_graphs(4), st.sampled_from(range(len(CLASSIFIERS))))
def test_pi_set_is_an_antichain(g, ci):
    pis = pi_explanations(g, CLASSIFIERS[ci]).masks
    for a in pis:
        for b in pis:
            if a != b:
                assert not a <= b


def test_te_size_field_and_determinism():
    c = get_builtin("edge-exists")
    a = trivial_explanations(TRIANGLE, c)
    b = trivial_explanations(TRIANGLE, c)
    assert a.masks == b.masks  # stable ordering
    assert a.size == 3  # one edge plus its two endpoints
    assert all(len(m.edges) == 1 for m in a.masks)


def test_constant_true_classifier_pi_is_empty_mask():
    c = parse("count(nodes) >= 0")
    pis = pi_explanations(TRIANGLE, c).masks
    assert len(pis) == 1
    assert pis[0].nodes == frozenset() and pis[0].edges == frozenset()


def test_negative_instance_te_is_empty_mask():
    # Label 0 for edge-exists survives down to the null subgraph.
    g = build_graph(3, [])
    tes = trivial_explanations(g, get_builtin("edge-exists")).masks
    assert tes == (SubgraphMask(frozenset(), frozenset()),)


def test_enumerate_corpus_counts():
    # n nodes contribute 2^C(n,2) graphs; palette multiplies by 2^n.
    plain = sum(1 for _ in enumerate_corpus(3))
    assert plain == 1 + 2 + 2 ** 3  # n=1: 1, n=2: 2, n=3: 8
    colored = sum(1 for _ in enumerate_corpus(2, palette=["red", "blue"]))
    assert colored == 2 * 1 + 4 * 2  # n=1: 2 colorings; n=2: 4 x 2 edgesets


def test_verify_te_subset_pi_passes_for_edge_exists():
    rep = verify_te_subset_pi(get_builtin("edge-exists"), 3)
    assert rep.passed
    assert rep.details["existential_check_run"]
    assert rep.counterexamples == []


def test_verify_skips_existential_check_for_forall():
    rep = verify_te_subset_pi(parse("forall x . exists y . E(x,y)"), 3)
    assert not rep.details["existential_check_run"]


def test_verify_ambiguity_finds_triangle_witness():
    rep = verify_te_ambiguity(get_builtin("edge-exists"),
                              parse("forall x . exists y . E(x,y)"), 3)
    assert rep.passed  # TE sets agree everywhere the labels agree
    witnesses = rep.details["pi_difference_witnesses"]
    assert {"n": 3, "edges": [[0, 1], [0, 2], [1, 2]]} in witnesses


def test_mutated_pi_check_fails_ambiguity_suite():
    # Drop condition 2 (robustness): "PI" becomes just minimal
    # label-preserving, which collapses the two classifiers' PI sets.
    def fake_pis(g, c):
        table = LabelTable(g, c)
        target = table.host_label()
        keep = [m for m in all_masks(g) if table.label(m) == target]
        return {m for m in keep if not any(k < m for k in keep)}

    pi1 = fake_pis(TRIANGLE, get_builtin("edge-exists"))
    pi2 = fake_pis(TRIANGLE, parse("forall x . exists y . E(x,y)"))
    real1 = set(pi_explanations(TRIANGLE, get_builtin("edge-exists")).masks)
    real2 = set(pi_explanations(
        TRIANGLE, parse("forall x . exists y . E(x,y)")).masks)
    assert real1 != real2        # the triangle separates the real PI sets
    assert pi1 == pi2            # the mutant cannot see the difference


def test_label_table_memoizes():
    table = LabelTable(TRIANGLE, get_builtin("edge-exists"))
    m = TRIANGLE.full_mask()
    assert table.label(m) == table.label(m) == 1
    assert len(table._memo) == 1
