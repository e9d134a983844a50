"""Seeded generators for the synthetic tasks (RedBlueNodes, TopoFeature,
motif classification) with OOD variants, plus JSONL persistence.

All randomness flows through numpy Generators derived from the split seed
and the record index, so a DatasetSpec maps to byte-identical JSONL.
Feature space is shared across tasks: two one-hot colors ("red", "blue");
the all-zero vector means uncolored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .dsl import builtin_classifiers, evaluate
from .errors import BadParamsError, SchemaError
from .graphs import (
    Edge,
    Graph,
    build_graph,
    graph_from_record,
    graph_to_record,
    has_cycle,
)

FEATURE_NAMES = ("red", "blue")
RED = (1.0, 0.0)
BLUE = (0.0, 1.0)
UNCOLORED = (0.0, 0.0)

TASKS = ("redblue", "topofeature", "motif")
OOD_KINDS = ("none", "larger", "baseshift")


@dataclass(frozen=True)
class DatasetSpec:
    task: str
    count: int
    size_range: tuple[int, int] = (10, 20)
    ba_attach: int = 2
    er_p: Optional[float] = None  # baseshift only; default matches BA density
    ood: str = "none"
    ood_nodes: int = 250  # "larger" OOD node count
    seed: int = 0

    def __post_init__(self):
        if self.task not in TASKS:
            raise BadParamsError(f"unknown task {self.task!r}")
        if self.ood not in OOD_KINDS:
            raise BadParamsError(f"unknown ood kind {self.ood!r}")
        if self.count < 1:
            raise BadParamsError("count must be >= 1")
        if self.size_range[0] < 3:
            raise BadParamsError("minimum graph size is 3")


@dataclass
class DatasetRecord:
    graph: Graph
    label: int
    gt_edges: Optional[list[Edge]] = None


@dataclass
class DatasetSplit:
    records: list[DatasetRecord]
    spec: DatasetSpec
    class_histogram: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.class_histogram:
            for r in self.records:
                self.class_histogram[r.label] = \
                    self.class_histogram.get(r.label, 0) + 1


# --- Base graph generators ---

def gen_barabasi_albert(n: int, m_attach: int,
                        rng: np.random.Generator) -> Graph:
    """Preferential attachment: seed clique of m_attach nodes, then each
    new node attaches m_attach edges to degree-weighted targets."""
    if not n > m_attach >= 1:
        raise BadParamsError(f"need n > m_attach >= 1, got n={n}, m={m_attach}")
    edges: set[Edge] = set()
    degree = [0] * n
    for u in range(m_attach):
        for v in range(u + 1, m_attach):
            edges.add((u, v))
            degree[u] += 1
            degree[v] += 1
    for new in range(m_attach, n):
        targets: set[int] = set()
        while len(targets) < m_attach:
            total = sum(degree[u] for u in range(new))
            if total == 0:
                t = int(rng.integers(new))
            else:
                weights = np.array([degree[u] for u in range(new)],
                                   dtype=float)
                t = int(rng.choice(new, p=weights / total))
            targets.add(t)
        for t in sorted(targets):
            edges.add((t, new))
            degree[t] += 1
            degree[new] += 1
    return build_graph(n, sorted(edges))


def gen_erdos_renyi(n: int, p: float, rng: np.random.Generator) -> Graph:
    if not 0.0 <= p <= 1.0:
        raise BadParamsError(f"p must be in [0,1], got {p}")
    edges = [(u, v) for u in range(n) for v in range(u + 1, n)
             if rng.random() < p]
    return build_graph(n, edges)


def _record_rng(spec: DatasetSpec, index: int) -> np.random.Generator:
    return np.random.default_rng((spec.seed, index))


def _base_graph(spec: DatasetSpec, n: int, m_attach: int,
                rng: np.random.Generator) -> Graph:
    if spec.ood == "baseshift":
        p = spec.er_p if spec.er_p is not None \
            else min(1.0, 2.0 * m_attach / (n - 1))
        return gen_erdos_renyi(n, p, rng)
    return gen_barabasi_albert(n, m_attach, rng)


def _pick_n(spec: DatasetSpec, rng: np.random.Generator) -> int:
    if spec.ood == "larger":
        return spec.ood_nodes
    lo, hi = spec.size_range
    return int(rng.integers(lo, hi + 1))


# --- Tasks ---

def _with_features(g: Graph, rows: list[tuple[float, ...]]) -> Graph:
    return build_graph(g.n, g.edges, rows, list(FEATURE_NAMES))


def gen_red_blue_nodes(spec: DatasetSpec) -> DatasetSplit:
    """Fair-coin red/blue coloring; label 1 iff #red >= #blue."""
    if spec.task != "redblue":
        raise BadParamsError("spec.task must be 'redblue'")
    rule = builtin_classifiers()["red-majority"]
    records = []
    for i in range(spec.count):
        rng = _record_rng(spec, i)
        n = _pick_n(spec, rng)
        g = _base_graph(spec, n, spec.ba_attach, rng)
        rows = [RED if rng.random() < 0.5 else BLUE for _ in range(n)]
        g = _with_features(g, rows)
        label = int(evaluate(rule, g))
        records.append(DatasetRecord(g, label))
    return DatasetSplit(records, spec)


def _attach_cycle(g: Graph, length: int,
                  rng: np.random.Generator) -> tuple[Graph, list[Edge]]:
    base_n = g.n
    cyc_nodes = list(range(base_n, base_n + length))
    cyc_edges = [(cyc_nodes[i], cyc_nodes[(i + 1) % length])
                 for i in range(length)]
    cyc_edges = [(min(e), max(e)) for e in cyc_edges]
    anchor = int(rng.integers(base_n))
    bridge = (anchor, cyc_nodes[int(rng.integers(length))])
    edges = list(g.edges) + cyc_edges + [bridge]
    g2 = build_graph(base_n + length, edges)
    return g2, sorted(cyc_edges)


def gen_topofeature(spec: DatasetSpec) -> DatasetSplit:
    """Acyclic BA base (m=1); positives get an attached 3-5 cycle and at
    least two red nodes; negatives drop the cycle, the reds, or both."""
    if spec.task != "topofeature":
        raise BadParamsError("spec.task must be 'topofeature'")
    rule = builtin_classifiers()["topofeature"]
    records = []
    for i in range(spec.count):
        rng = _record_rng(spec, i)
        n = _pick_n(spec, rng)
        base = _base_graph(spec, n, 1, rng)
        # An ER base may contain cycles on its own; re-sample edges until
        # acyclic so the motif alone controls the cycle conjunct.
        tries = 0
        while has_cycle(base):
            tries += 1
            if tries > 200:
                raise BadParamsError("could not draw an acyclic base graph")
            base = _base_graph(spec, n, 1, rng)
        positive = bool(rng.random() < 0.5)
        if positive:
            want_cycle, want_reds = True, True
        else:
            config = int(rng.integers(3))
            want_cycle = config == 0
            want_reds = config == 1
            # config == 2: neither conjunct holds.
        gt: Optional[list[Edge]] = None
        g = base
        if want_cycle:
            length = int(rng.integers(3, 6))
            g, gt = _attach_cycle(g, length, rng)
        if want_reds:
            n_red = int(rng.integers(2, max(3, g.n // 4 + 1)))
        else:
            n_red = int(rng.integers(0, 2))
        red_ids = set(rng.choice(g.n, size=min(n_red, g.n),
                                 replace=False).tolist()) if n_red else set()
        rows = [RED if u in red_ids else UNCOLORED for u in range(g.n)]
        g = _with_features(g, rows)
        label = int(evaluate(rule, g))
        assert label == int(positive), "construction must match the rule"
        records.append(DatasetRecord(g, label, gt_edges=gt if positive else None))
    return DatasetSplit(records, spec)


# --- Motif task ---

def _house_motif(offset: int) -> tuple[list[int], list[Edge]]:
    a, b, c, d, e = range(offset, offset + 5)
    return [a, b, c, d, e], [(a, b), (b, c), (c, d), (a, d), (a, e), (b, e)]


def _cycle5_motif(offset: int) -> tuple[list[int], list[Edge]]:
    ns = list(range(offset, offset + 5))
    return ns, sorted((min(ns[i], ns[(i + 1) % 5]),
                       max(ns[i], ns[(i + 1) % 5])) for i in range(5))


def _crane_motif(offset: int) -> tuple[list[int], list[Edge]]:
    a, b, c, d, e = range(offset, offset + 5)
    return [a, b, c, d, e], [(a, b), (b, c), (a, c), (c, d), (d, e)]


_MOTIFS = (_house_motif, _cycle5_motif, _crane_motif)


def _ladder_basis(k: int) -> Graph:
    # 2 x k grid.
    edges = []
    for i in range(k):
        edges.append((2 * i, 2 * i + 1))
        if i + 1 < k:
            edges.append((2 * i, 2 * i + 2))
            edges.append((2 * i + 1, 2 * i + 3))
    return build_graph(2 * k, edges)


def _tree_basis(n: int, rng: np.random.Generator) -> Graph:
    return gen_barabasi_albert(n, 1, rng)


def _wheel_basis(k: int) -> Graph:
    # k-cycle plus a hub.
    edges = [(i, (i + 1) % k) for i in range(k)]
    edges = [(min(e), max(e)) for e in edges]
    edges += [(i, k) for i in range(k)]
    return build_graph(k + 1, edges)


BASES = ("ladder", "tree", "wheel")


def _basis_graph(name: str, rng: np.random.Generator) -> Graph:
    size = int(rng.integers(6, 16))
    if name == "ladder":
        return _ladder_basis(max(3, size // 2))
    if name == "tree":
        return _tree_basis(size, rng)
    if name == "wheel":
        return _wheel_basis(max(5, size - 1))
    raise BadParamsError(f"unknown basis {name!r}")


def gen_motif_task(spec: DatasetSpec,
                   held_out_basis: str = "wheel") -> DatasetSplit:
    """Basis + bridged motif; label is the motif id (house=0, cycle5=1,
    crane=2). BaseShift OOD uses only the held-out basis; in-distribution
    splits use the remaining bases."""
    if spec.task != "motif":
        raise BadParamsError("spec.task must be 'motif'")
    if spec.ood == "baseshift":
        bases = (held_out_basis,)
    else:
        bases = tuple(b for b in BASES if b != held_out_basis)
    records = []
    for i in range(spec.count):
        rng = _record_rng(spec, i)
        basis = _basis_graph(bases[int(rng.integers(len(bases)))], rng)
        if spec.ood == "larger":
            # Grow the basis by chaining extra tree nodes.
            extra = spec.ood_nodes - basis.n - 5
            if extra > 0:
                edges = list(basis.edges)
                for j in range(extra):
                    u = basis.n + j
                    edges.append((int(rng.integers(u)), u))
                basis = build_graph(basis.n + extra, edges)
        motif_id = int(rng.integers(3))
        motif_nodes, motif_edges = _MOTIFS[motif_id](basis.n)
        bridge = (int(rng.integers(basis.n)),
                  motif_nodes[int(rng.integers(5))])
        g = build_graph(basis.n + 5,
                        list(basis.edges) + motif_edges + [bridge])
        rows = [UNCOLORED] * g.n
        g = _with_features(g, rows)
        records.append(DatasetRecord(g, motif_id,
                                     gt_edges=sorted(motif_edges)))
    return DatasetSplit(records, spec)


def generate(spec: DatasetSpec) -> DatasetSplit:
    if spec.task == "redblue":
        return gen_red_blue_nodes(spec)
    if spec.task == "topofeature":
        return gen_topofeature(spec)
    return gen_motif_task(spec)


# --- Persistence ---

def save_split(split: DatasetSplit, path) -> None:
    lines = [graph_to_record(r.graph, r.label, r.gt_edges)
             for r in split.records]
    Path(path).write_text("\n".join(lines) + "\n")


def load_split(path, spec: Optional[DatasetSpec] = None) -> DatasetSplit:
    records = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            g, y, gt = graph_from_record(line)
        except Exception as exc:
            raise SchemaError(f"bad record: {exc}", line=lineno) from exc
        if y is None:
            raise SchemaError("record without label", line=lineno)
        records.append(DatasetRecord(g, y, gt))
    if spec is None:
        spec = DatasetSpec(task="redblue", count=max(1, len(records)))
    return DatasetSplit(records, spec)
