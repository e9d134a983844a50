"""Exact enumeration of Trivial and Prime-Implicant explanations, plus
exhaustive instance verification over small graph corpora.

A Trivial Explanation is a smallest mask whose induced subgraph keeps the
classifier's label. A PI mask keeps the label on *every* supergraph mask
and is inclusion-minimal with that property. Robustness (the supergraph
condition) is upward-closed in the mask lattice, so minimality reduces to
"no lattice child is robust"; the doubly exponential direct check is kept
in the test suite as an oracle.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

from .dsl import MultiClassClassifier, as_label_fn, is_purely_existential
from .graphs import (
    DEFAULT_LATTICE_CAP,
    Graph,
    SizeMetric,
    SubgraphMask,
    all_masks,
    apply_mask,
    build_graph,
    lattice_children,
    lattice_parents,
)


@dataclass(frozen=True)
class ExplanationSet:
    kind: str  # "TE" | "PI"
    masks: tuple[SubgraphMask, ...]
    metric: SizeMetric
    label: int
    host_digest: str
    size: Optional[int] = None  # minimal size, TE only

    def to_json_obj(self) -> dict:
        obj = {"kind": self.kind, "label": self.label}
        if self.size is not None:
            obj["size"] = self.size
        obj["masks"] = [m.to_json_obj() for m in self.masks]
        return obj


class LabelTable:
    """Memoized mask labels for one (graph, classifier) pair."""

    def __init__(self, g: Graph, classifier,
                 cap: int = DEFAULT_LATTICE_CAP):
        self.g = g
        self.label_fn = as_label_fn(classifier)
        self.cap = cap
        self._memo: dict[tuple[frozenset, frozenset], int] = {}

    def label(self, m: SubgraphMask) -> int:
        key = (m.nodes, m.edges)
        got = self._memo.get(key)
        if got is None:
            sub, _ = apply_mask(self.g, m)
            got = int(self.label_fn(sub))
            self._memo[key] = got
        return got

    def host_label(self) -> int:
        return self.label(self.g.full_mask())


def trivial_explanations(g: Graph, classifier,
                         metric: SizeMetric = SizeMetric.EDGES_PLUS_NODES,
                         cap: int = DEFAULT_LATTICE_CAP,
                         table: Optional[LabelTable] = None
                         ) -> ExplanationSet:
    """All label-preserving masks of minimal size. The empty mask is a
    candidate like any other; since quantified formulas are false on the
    node-free graph, it only ever explains labels that quantifier-free
    facts decide."""
    table = table or LabelTable(g, classifier, cap=cap)
    target = table.host_label()
    masks = sorted(all_masks(g, cap=cap),
                   key=lambda m: (metric.size(m, g),) + m.sort_key())
    hits: list[SubgraphMask] = []
    hit_size: Optional[int] = None
    for m in masks:
        s = metric.size(m, g)
        if hit_size is not None and s > hit_size:
            break
        if table.label(m) == target:
            hits.append(m)
            hit_size = s
    return ExplanationSet("TE", tuple(hits), metric, target, g.digest(),
                          size=hit_size)


def robust_set(g: Graph, classifier,
               cap: int = DEFAULT_LATTICE_CAP,
               table: Optional[LabelTable] = None
               ) -> set[SubgraphMask]:
    """Masks whose every supergraph mask (themselves included) preserves
    the host label. Computed top-down: m is robust iff its own label
    matches and all lattice parents are robust."""
    table = table or LabelTable(g, classifier, cap=cap)
    target = table.host_label()
    masks = sorted(all_masks(g, cap=cap),
                   key=lambda m: (-m.element_count(),) + m.sort_key())
    robust: set[SubgraphMask] = set()
    for m in masks:
        if table.label(m) != target:
            continue
        parents = lattice_parents(g, m)
        if all(p in robust for p in parents):
            robust.add(m)
    return robust


def pi_explanations(g: Graph, classifier,
                    metric: SizeMetric = SizeMetric.EDGES_PLUS_NODES,
                    cap: int = DEFAULT_LATTICE_CAP,
                    table: Optional[LabelTable] = None
                    ) -> ExplanationSet:
    """Inclusion-minimal elements of the robust set."""
    table = table or LabelTable(g, classifier, cap=cap)
    robust = robust_set(g, classifier, cap=cap, table=table)
    minimal = [m for m in robust
               if not any(c in robust for c in lattice_children(g, m))]
    minimal.sort(key=lambda m: m.sort_key())
    return ExplanationSet("PI", tuple(minimal), metric, table.host_label(),
                          g.digest())


# --- Exhaustive corpora ---

def enumerate_corpus(max_nodes: int,
                     palette: Sequence[str] = ()) -> Iterator[Graph]:
    """All graphs with 1..max_nodes nodes, every edge subset, and (with a
    palette) every per-node color assignment. De-duplication is by raw
    edge set only; no isomorphism reduction."""
    for n in range(1, max_nodes + 1):
        pairs = list(itertools.combinations(range(n), 2))
        for bits in range(1 << len(pairs)):
            edges = [pairs[i] for i in range(len(pairs)) if bits >> i & 1]
            if not palette:
                yield build_graph(n, edges)
                continue
            for colors in itertools.product(range(len(palette)), repeat=n):
                feats = [[1.0 if j == c else 0.0
                          for j in range(len(palette))] for c in colors]
                yield build_graph(n, edges, feats, list(palette))


def _canonical_subgraph(g: Graph, m: SubgraphMask) -> Graph:
    sub, _ = apply_mask(g, m)
    return sub


@dataclass
class VerificationReport:
    name: str
    passed: bool
    checked_graphs: int = 0
    counterexamples: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        return {"name": self.name, "passed": self.passed,
                "checked_graphs": self.checked_graphs,
                "counterexamples": self.counterexamples,
                "details": self.details}


def verify_te_subset_pi(classifier, max_nodes: int,
                        palette: Sequence[str] = (),
                        metric: SizeMetric = SizeMetric.EDGES_PLUS_NODES,
                        ) -> VerificationReport:
    """Check (a) per-instance TE-is-PI for purely existential classifiers
    on positive instances, and (b) the per-label corpus-union inclusion
    of TEs in PIs."""
    existential = (not callable(classifier)
                   and not isinstance(classifier, MultiClassClassifier)
                   and is_purely_existential(classifier))
    report = VerificationReport(name="te-subset-pi", passed=True)
    report.details["existential_check_run"] = existential
    te_union: dict[int, set[Graph]] = {}
    pi_union: dict[int, set[Graph]] = {}
    for g in enumerate_corpus(max_nodes, palette):
        report.checked_graphs += 1
        table = LabelTable(g, classifier)
        tes = trivial_explanations(g, classifier, metric, table=table)
        pis = pi_explanations(g, classifier, metric, table=table)
        label = table.host_label()
        pi_set = set(pis.masks)
        if existential and label == 1:
            for m in tes.masks:
                if m not in pi_set:
                    report.passed = False
                    report.counterexamples.append({
                        "check": "per-instance",
                        "graph": {"n": g.n,
                                  "edges": [list(e) for e in g.edges]},
                        "te": m.to_json_obj()})
        te_union.setdefault(label, set()).update(
            _canonical_subgraph(g, m) for m in tes.masks)
        pi_union.setdefault(label, set()).update(
            _canonical_subgraph(g, m) for m in pis.masks)
    for label, tset in te_union.items():
        extra = tset - pi_union.get(label, set())
        if extra:
            report.passed = False
            for sub in sorted(extra, key=lambda s: (s.n, s.edges)):
                report.counterexamples.append({
                    "check": "union",
                    "label": label,
                    "subgraph": {"n": sub.n,
                                 "edges": [list(e) for e in sub.edges]}})
    return report


def verify_te_ambiguity(c1, c2, max_nodes: int,
                        palette: Sequence[str] = (),
                        metric: SizeMetric = SizeMetric.EDGES_PLUS_NODES,
                        ) -> VerificationReport:
    """Over the exhaustive corpus: where the two classifiers agree, are
    the TE sets equal, and does any instance witness differing PI sets?"""
    f1, f2 = as_label_fn(c1), as_label_fn(c2)
    report = VerificationReport(name="te-ambiguity", passed=True)
    te_all_equal = True
    pi_witnesses = []
    agreeing = 0
    for g in enumerate_corpus(max_nodes, palette):
        report.checked_graphs += 1
        if f1(g) != f2(g):
            continue
        agreeing += 1
        te1 = set(trivial_explanations(g, c1, metric).masks)
        te2 = set(trivial_explanations(g, c2, metric).masks)
        if te1 != te2:
            te_all_equal = False
            report.counterexamples.append({
                "check": "te-equality",
                "graph": {"n": g.n, "edges": [list(e) for e in g.edges]}})
        pi1 = set(pi_explanations(g, c1, metric).masks)
        pi2 = set(pi_explanations(g, c2, metric).masks)
        if pi1 != pi2:
            pi_witnesses.append({"n": g.n,
                                 "edges": [list(e) for e in g.edges]})
    report.details["agreeing_instances"] = agreeing
    report.details["te_sets_all_equal"] = te_all_equal
    report.details["pi_difference_witnesses"] = pi_witnesses
    report.passed = te_all_equal
    return report
