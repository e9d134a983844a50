"""Sufficiency / necessity / faithfulness of subgraph explanations under
edge-removal perturbations.

Two perturbation regimes are provided. Exhaustive mode enumerates every
non-empty deletion subset of the target region's lattice elements, which
makes the sufficiency and necessity scores literal functions of the
subgraph lattice (and lets the PI equivalences hold exactly). Monte Carlo
mode mirrors the protocol used against trained models: fixed-size random
edge removals with isolated-node cleanup. The metric definitions leave the
perturbation distribution open; these two modes are one concrete
instantiation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dsl import as_label_fn
from .errors import EmptyRegionError
from .graphs import (
    DEFAULT_LATTICE_CAP,
    Edge,
    Graph,
    SubgraphMask,
    all_masks,
    apply_mask,
    validate_mask,
)


@dataclass(frozen=True)
class PerturbConfig:
    mode: str = "exhaustive"  # "exhaustive" | "montecarlo"
    samples: int = 100        # montecarlo only
    seed: int = 0             # montecarlo only
    budget_fraction: float = 0.1  # b, montecarlo only
    include_node_removals: Optional[bool] = None  # default by mode

    def node_removals(self) -> bool:
        if self.include_node_removals is not None:
            return self.include_node_removals
        return self.mode == "exhaustive"

    def to_json_obj(self) -> dict:
        return {"mode": self.mode, "samples": self.samples,
                "seed": self.seed, "budget_fraction": self.budget_fraction,
                "include_node_removals": self.node_removals()}


@dataclass(frozen=True)
class FaithReport:
    suf: float
    nec: float
    faith: float
    delta_rate_complement: float
    delta_rate_explanation: float
    config: PerturbConfig

    def to_json_obj(self) -> dict:
        return {"suf": self.suf, "nec": self.nec, "faith": self.faith,
                "delta_rate_complement": self.delta_rate_complement,
                "delta_rate_explanation": self.delta_rate_explanation,
                "config": self.config.to_json_obj()}


def _region_elements(g: Graph, m: SubgraphMask, target: str
                     ) -> tuple[set[int], set[Edge]]:
    validate_mask(g, m)
    if target == "explanation":
        return set(m.nodes), set(m.edges)
    if target == "complement":
        return set(g.node_ids) - m.nodes, set(g.edges) - m.edges
    raise ValueError(f"unknown target {target!r}")


def _exhaustive_perturbations(g: Graph, m: SubgraphMask, target: str,
                              node_removals: bool,
                              cap: int = DEFAULT_LATTICE_CAP) -> list[Graph]:
    region_nodes, region_edges = _region_elements(g, m, target)
    full = g.full_mask()
    out = []
    for cand in all_masks(g, cap=cap):
        removed_nodes = full.nodes - cand.nodes
        removed_edges = full.edges - cand.edges
        if not removed_nodes and not removed_edges:
            continue
        if not removed_nodes <= region_nodes:
            continue
        if not removed_edges <= region_edges:
            continue
        if not node_removals and removed_nodes:
            continue
        sub, _ = apply_mask(g, cand)
        out.append(sub)
    return out


def _montecarlo_perturbations(g: Graph, m: SubgraphMask, target: str,
                              cfg: PerturbConfig,
                              rng: np.random.Generator) -> list[Graph]:
    _, region_edges = _region_elements(g, m, target)
    region = sorted(region_edges)
    if not region:
        raise EmptyRegionError(f"{target} region has no removable edges")
    k = min(len(region), math.ceil(cfg.budget_fraction * len(g.edges)))
    k = max(k, 1)
    out = []
    for _ in range(cfg.samples):
        idx = rng.choice(len(region), size=k, replace=False)
        deleted = {region[i] for i in sorted(idx)}
        kept_edges = frozenset(set(g.edges) - deleted)
        # Remove nodes isolated by the deletion (not originally isolated).
        degree_before = {u: g.degree(u) for u in g.node_ids}
        degree_after: dict[int, int] = {u: 0 for u in g.node_ids}
        for u, v in kept_edges:
            degree_after[u] += 1
            degree_after[v] += 1
        kept_nodes = frozenset(
            u for u in g.node_ids
            if degree_after[u] > 0 or degree_before[u] == 0)
        sub, _ = apply_mask(g, SubgraphMask(kept_nodes, kept_edges))
        out.append(sub)
    return out


def perturbations_of(g: Graph, m: SubgraphMask, target: str,
                     cfg: PerturbConfig,
                     rng: Optional[np.random.Generator] = None,
                     cap: int = DEFAULT_LATTICE_CAP) -> list[Graph]:
    """Perturbed graphs for one target region; raises EmptyRegionError
    when no perturbation is possible."""
    if cfg.mode == "exhaustive":
        out = _exhaustive_perturbations(g, m, target, cfg.node_removals(),
                                        cap=cap)
        if not out:
            raise EmptyRegionError(f"{target} region has no removable elements")
        return out
    if cfg.mode == "montecarlo":
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        return _montecarlo_perturbations(g, m, target, cfg, rng)
    raise ValueError(f"unknown perturbation mode {cfg.mode!r}")


def _delta_rate(g: Graph, m: SubgraphMask, classifier, target: str,
                cfg: PerturbConfig, rng, cap: int) -> float:
    label_fn = as_label_fn(classifier)
    base = label_fn(g)
    perturbed = perturbations_of(g, m, target, cfg, rng=rng, cap=cap)
    flips = sum(1 for p in perturbed if label_fn(p) != base)
    return flips / len(perturbed)


def suf(g: Graph, m: SubgraphMask, classifier, cfg: PerturbConfig,
        rng: Optional[np.random.Generator] = None,
        cap: int = DEFAULT_LATTICE_CAP) -> float:
    """exp(-E[label flip]) over complement perturbations; 1 when the
    complement has nothing to remove."""
    try:
        rate = _delta_rate(g, m, classifier, "complement", cfg, rng, cap)
    except EmptyRegionError:
        return 1.0
    return math.exp(-rate)


def nec(g: Graph, m: SubgraphMask, classifier, cfg: PerturbConfig,
        rng: Optional[np.random.Generator] = None,
        cap: int = DEFAULT_LATTICE_CAP) -> float:
    """1 - exp(-E[label flip]) over explanation perturbations; 0 when the
    explanation has nothing to remove."""
    try:
        rate = _delta_rate(g, m, classifier, "explanation", cfg, rng, cap)
    except EmptyRegionError:
        return 0.0
    return 1.0 - math.exp(-rate)


def harmonic_mean(s: float, n: float) -> float:
    if s <= 0.0 or n <= 0.0:
        return 0.0
    return 2.0 * s * n / (s + n)


def faith(g: Graph, m: SubgraphMask, classifier, cfg: PerturbConfig,
          cap: int = DEFAULT_LATTICE_CAP) -> FaithReport:
    rng_c = np.random.default_rng((cfg.seed, 0)) \
        if cfg.mode == "montecarlo" else None
    rng_e = np.random.default_rng((cfg.seed, 1)) \
        if cfg.mode == "montecarlo" else None
    try:
        rate_c = _delta_rate(g, m, classifier, "complement", cfg, rng_c, cap)
    except EmptyRegionError:
        rate_c = 0.0
    try:
        rate_e = _delta_rate(g, m, classifier, "explanation", cfg, rng_e, cap)
        nec_v = 1.0 - math.exp(-rate_e)
    except EmptyRegionError:
        rate_e = 0.0
        nec_v = 0.0
    suf_v = math.exp(-rate_c)
    return FaithReport(suf=suf_v, nec=nec_v,
                       faith=harmonic_mean(suf_v, nec_v),
                       delta_rate_complement=rate_c,
                       delta_rate_explanation=rate_e,
                       config=cfg)


def topk_explanation(edge_scores: dict[Edge, float], g: Graph,
                     k: float) -> SubgraphMask:
    """Mask keeping the ceil(k * |E|) highest-scoring edges and exactly
    their endpoints; ties broken toward the lexicographically smaller edge."""
    if not 0.0 < k <= 1.0:
        raise ValueError("k must be in (0, 1]")
    missing = [e for e in g.edges if e not in edge_scores]
    if missing:
        raise ValueError(f"missing scores for edges {missing}")
    keep = math.ceil(k * len(g.edges))
    ranked = sorted(g.edges, key=lambda e: (-edge_scores[e], e))
    kept_edges = frozenset(ranked[:keep])
    kept_nodes = frozenset(u for e in kept_edges for u in e)
    return SubgraphMask(kept_nodes, kept_edges)


@dataclass(frozen=True)
class FaithRatioReport:
    ratio: float
    faith_original: float
    faith_shuffled: float
    degenerate: bool  # original faith was zero; ratio is +inf sentinel

    def to_json_obj(self) -> dict:
        return {"ratio": self.ratio if not self.degenerate else "inf",
                "faith_original": self.faith_original,
                "faith_shuffled": self.faith_shuffled,
                "degenerate": self.degenerate}


def _best_k_faith(g: Graph, scores: dict[Edge, float], classifier,
                  ks: Sequence[float], b: float, samples: int,
                  seed_entropy: tuple) -> float:
    best = 0.0
    for ki, k in enumerate(ks):
        m = topk_explanation(scores, g, k)
        cfg = PerturbConfig(mode="montecarlo", samples=samples,
                            seed=0, budget_fraction=b)
        rng_c = np.random.default_rng(seed_entropy + (ki, 0))
        rng_e = np.random.default_rng(seed_entropy + (ki, 1))
        try:
            rate_c = _delta_rate(g, m, classifier, "complement", cfg,
                                 rng_c, DEFAULT_LATTICE_CAP)
            s = math.exp(-rate_c)
        except EmptyRegionError:
            s = 1.0
        try:
            rate_e = _delta_rate(g, m, classifier, "explanation", cfg,
                                 rng_e, DEFAULT_LATTICE_CAP)
            n = 1.0 - math.exp(-rate_e)
        except EmptyRegionError:
            n = 0.0
        best = max(best, harmonic_mean(s, n))
    return best


def removable_elements(g: Graph, m: SubgraphMask) -> tuple[set[int],
                                                           set[Edge]]:
    """The mask elements a perturbation can actually delete: all of its
    edges, plus nodes whose every incident host edge is inside the mask
    (deleting a node forces deleting its edges, which must stay within
    the target region)."""
    nodes = {u for u in m.nodes
             if all((min(u, v), max(u, v)) in m.edges
                    for v in g.neighbors(u))}
    return nodes, set(m.edges)


def verify_suf_nec(classifier, max_nodes: int,
                   palette: Sequence[str] = ()):
    """Exhaustive-mode equivalences against the PI set, over every
    label-preserving mask of every small graph: Suf = 1 iff the mask
    contains some PI, and Nec > 0 iff the mask's removable elements
    intersect every PI."""
    from .explain import (LabelTable, VerificationReport, enumerate_corpus,
                          pi_explanations)

    cfg = PerturbConfig(mode="exhaustive", include_node_removals=True)
    report = VerificationReport(name="suf-nec", passed=True)
    checked_masks = 0
    for g in enumerate_corpus(max_nodes, palette):
        report.checked_graphs += 1
        table = LabelTable(g, classifier)
        target = table.host_label()
        pis = pi_explanations(g, classifier, table=table).masks
        for m in all_masks(g):
            if table.label(m) != target:
                continue
            checked_masks += 1
            s = suf(g, m, classifier, cfg)
            n = nec(g, m, classifier, cfg)
            covers = any(p.nodes <= m.nodes and p.edges <= m.edges
                         for p in pis)
            rm_nodes, rm_edges = removable_elements(g, m)
            hits_all = all(rm_nodes & p.nodes or rm_edges & p.edges
                           for p in pis) and bool(pis) \
                and bool(rm_nodes or rm_edges)
            ok = ((s == 1.0) == covers) and ((n > 0.0) == hits_all)
            if not ok:
                report.passed = False
                report.counterexamples.append({
                    "graph": {"n": g.n, "edges": [list(e) for e in g.edges]},
                    "mask": m.to_json_obj(), "suf": s, "nec": n,
                    "covers_pi": covers, "intersects_all_pis": hits_all})
    report.details["checked_masks"] = checked_masks
    return report


def faith_ratio(g: Graph, edge_scores: dict[Edge, float], classifier,
                ks: Sequence[float], bs: Sequence[float], seed: int,
                samples: int = 100) -> FaithRatioReport:
    """Faith of score-shuffled top-k explanations over faith of the
    original scores; best over k, averaged over b."""
    rng = np.random.default_rng((seed, 99))
    edges = sorted(edge_scores)
    values = np.array([edge_scores[e] for e in edges])
    shuffled = dict(zip(edges, values[rng.permutation(len(edges))]))

    def avg_faith(scores: dict[Edge, float], variant: int) -> float:
        per_b = [
            _best_k_faith(g, scores, classifier, ks, b, samples,
                          (seed, variant, bi))
            for bi, b in enumerate(bs)]
        return float(np.mean(per_b))

    orig = avg_faith(edge_scores, 0)
    shuf = avg_faith(shuffled, 1)
    if orig == 0.0:
        return FaithRatioReport(ratio=math.inf, faith_original=0.0,
                                faith_shuffled=shuf, degenerate=True)
    return FaithRatioReport(ratio=shuf / orig, faith_original=orig,
                            faith_shuffled=shuf, degenerate=False)
