"""Finite labeled graphs, subgraph masks, and the subgraph lattice.

Graphs are undirected, simple (no self-loops, no parallel edges), with
contiguous integer node ids and an optional dense feature vector per node.
A :class:`SubgraphMask` selects a node subset together with a compatible
edge subset; masks of a fixed host graph form a lattice ordered by
inclusion, which the explanation machinery walks exhaustively.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Optional, Sequence

from .errors import (
    DuplicateEdgeError,
    FeatureDimMismatchError,
    InvalidMaskError,
    SelfLoopError,
    TooLargeError,
)

Edge = tuple[int, int]

#: Refuse exhaustive lattice enumeration beyond this many elements (|V|+|E|).
DEFAULT_LATTICE_CAP = 24


def _canon_edge(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class Graph:
    """An immutable undirected graph with per-node feature vectors."""

    n: int
    edges: tuple[Edge, ...]
    features: tuple[tuple[float, ...], ...] = ()
    feature_names: tuple[str, ...] = ()

    @property
    def feature_dim(self) -> int:
        return len(self.feature_names)

    @property
    def node_ids(self) -> range:
        return range(self.n)

    def neighbors(self, u: int) -> list[int]:
        out = []
        for a, b in self.edges:
            if a == u:
                out.append(b)
            elif b == u:
                out.append(a)
        return out

    def degree(self, u: int) -> int:
        return sum(1 for a, b in self.edges if u in (a, b))

    def full_mask(self) -> "SubgraphMask":
        return SubgraphMask(frozenset(self.node_ids), frozenset(self.edges))

    def digest(self) -> str:
        payload = json.dumps(
            {"n": self.n, "edges": [list(e) for e in self.edges],
             "x": [list(row) for row in self.features],
             "names": list(self.feature_names)},
            separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class SubgraphMask:
    """A node subset plus a compatible edge subset of a host graph.

    ``feature_mask`` maps a retained node to a boolean keep-vector over the
    host's feature dimension; it is only present in feature-masking mode.
    """

    nodes: frozenset[int]
    edges: frozenset[Edge]
    feature_mask: Optional[tuple[tuple[int, tuple[bool, ...]], ...]] = None

    def __le__(self, other: "SubgraphMask") -> bool:
        return self.nodes <= other.nodes and self.edges <= other.edges

    def __lt__(self, other: "SubgraphMask") -> bool:
        return self <= other and self != other

    def sort_key(self) -> tuple:
        return (tuple(sorted(self.nodes)), tuple(sorted(self.edges)))

    def element_count(self) -> int:
        return len(self.nodes) + len(self.edges)

    def to_json_obj(self) -> dict:
        return {"nodes": sorted(self.nodes),
                "edges": [list(e) for e in sorted(self.edges)]}


class SizeMetric(Enum):
    EDGES_PLUS_NODES = "edges+nodes"
    EDGES_ONLY = "edges"
    NODES_ONLY = "nodes"
    EDGES_NODES_FEATURES = "edges+nodes+features"

    def size(self, mask: SubgraphMask, g: Optional[Graph] = None) -> int:
        if self is SizeMetric.EDGES_ONLY:
            return len(mask.edges)
        if self is SizeMetric.NODES_ONLY:
            return len(mask.nodes)
        base = len(mask.nodes) + len(mask.edges)
        if self is SizeMetric.EDGES_NODES_FEATURES:
            # One unit per retained nonzero feature entry.
            if mask.feature_mask is not None and g is not None:
                kept = 0
                fm = dict(mask.feature_mask)
                for u in mask.nodes:
                    keep = fm.get(u)
                    if keep is None:
                        continue
                    row = g.features[u] if u < len(g.features) else ()
                    kept += sum(1 for k, x in zip(keep, row) if k and x != 0.0)
                base += kept
            elif g is not None:
                base += sum(
                    sum(1 for x in g.features[u] if x != 0.0)
                    for u in mask.nodes if u < len(g.features))
        return base


def build_graph(n: int,
                edges: Iterable[Sequence[int]],
                features: Optional[Sequence[Sequence[float]]] = None,
                names: Optional[Sequence[str]] = None) -> Graph:
    """Validate and canonicalize a graph (edges stored with u < v, sorted)."""
    canon: set[Edge] = set()
    for e in edges:
        u, v = int(e[0]), int(e[1])
        if u == v:
            raise SelfLoopError(f"self-loop on node {u}")
        if not (0 <= u < n and 0 <= v < n):
            raise InvalidMaskError(f"edge ({u},{v}) references missing node")
        ce = _canon_edge(u, v)
        if ce in canon:
            raise DuplicateEdgeError(f"duplicate edge {ce}")
        canon.add(ce)

    feats: tuple[tuple[float, ...], ...] = ()
    fnames: tuple[str, ...] = tuple(names or ())
    if features is not None and len(features) > 0:
        rows = [tuple(float(x) for x in row) for row in features]
        if len(rows) != n:
            raise FeatureDimMismatchError(
                f"{len(rows)} feature rows for {n} nodes")
        d = len(rows[0])
        if any(len(r) != d for r in rows):
            raise FeatureDimMismatchError("ragged feature rows")
        if fnames and len(fnames) != d:
            raise FeatureDimMismatchError(
                f"{len(fnames)} names for dimension {d}")
        if not fnames:
            fnames = tuple(f"f{i}" for i in range(d))
        feats = tuple(rows)
    elif fnames:
        raise FeatureDimMismatchError("feature names given without features")
    return Graph(n=n, edges=tuple(sorted(canon)), features=feats,
                 feature_names=fnames)


def validate_mask(g: Graph, m: SubgraphMask) -> None:
    if not m.nodes <= set(g.node_ids):
        raise InvalidMaskError("mask retains unknown nodes")
    if not m.edges <= set(g.edges):
        raise InvalidMaskError("mask retains unknown edges")
    for u, v in m.edges:
        if u not in m.nodes or v not in m.nodes:
            raise InvalidMaskError(f"edge ({u},{v}) without both endpoints")
    if m.feature_mask is not None:
        for u, keep in m.feature_mask:
            if u not in m.nodes:
                raise InvalidMaskError(f"feature mask on dropped node {u}")
            if len(keep) != g.feature_dim:
                raise InvalidMaskError("feature mask dimension mismatch")


def apply_mask(g: Graph, m: SubgraphMask) -> tuple[Graph, dict[int, int]]:
    """Materialize the masked subgraph with contiguous relabeled ids.

    Returns the standalone graph and the host-id -> new-id map. Masked-out
    feature entries are zeroed (one-hot "uncolored") in feature-masking mode.
    """
    validate_mask(g, m)
    kept = sorted(m.nodes)
    relabel = {u: i for i, u in enumerate(kept)}
    new_edges = sorted(_canon_edge(relabel[u], relabel[v]) for u, v in m.edges)
    feats: tuple[tuple[float, ...], ...] = ()
    if g.features:
        fm = dict(m.feature_mask) if m.feature_mask is not None else None
        rows = []
        for u in kept:
            row = g.features[u]
            if fm is not None:
                keep = fm.get(u, tuple([True] * g.feature_dim))
                row = tuple(x if k else 0.0 for x, k in zip(row, keep))
            rows.append(row)
        feats = tuple(rows)
    sub = Graph(n=len(kept), edges=tuple(new_edges), features=feats,
                feature_names=g.feature_names if g.features else ())
    return sub, relabel


def _isolated_in_mask(m: SubgraphMask, u: int) -> bool:
    return all(u not in e for e in m.edges)


def lattice_children(g: Graph, m: SubgraphMask,
                     feature_mode: bool = False) -> list[SubgraphMask]:
    """Masks one lattice step below: drop one edge, one isolated node, or
    (feature mode) one retained feature entry."""
    validate_mask(g, m)
    out = []
    for e in sorted(m.edges):
        out.append(SubgraphMask(m.nodes, m.edges - {e}, m.feature_mask))
    for u in sorted(m.nodes):
        if _isolated_in_mask(m, u):
            fm = m.feature_mask
            if fm is not None:
                fm = tuple((v, k) for v, k in fm if v != u)
            out.append(SubgraphMask(m.nodes - {u}, m.edges, fm))
    if feature_mode and m.feature_mask is not None:
        fm = dict(m.feature_mask)
        for u in sorted(m.nodes):
            keep = fm.get(u, tuple([True] * g.feature_dim))
            for i, k in enumerate(keep):
                if k and u < len(g.features) and g.features[u][i] != 0.0:
                    new_keep = tuple(
                        kk if j != i else False for j, kk in enumerate(keep))
                    new_fm = dict(fm)
                    new_fm[u] = new_keep
                    out.append(SubgraphMask(
                        m.nodes, m.edges, tuple(sorted(new_fm.items()))))
    return out


def lattice_parents(g: Graph, m: SubgraphMask,
                    feature_mode: bool = False) -> list[SubgraphMask]:
    """Masks one lattice step above: add one absent node, one absent edge
    with both endpoints retained, or restore one masked feature entry."""
    validate_mask(g, m)
    out = []
    for u in sorted(set(g.node_ids) - m.nodes):
        fm = m.feature_mask
        out.append(SubgraphMask(m.nodes | {u}, m.edges, fm))
    for e in sorted(set(g.edges) - m.edges):
        u, v = e
        if u in m.nodes and v in m.nodes:
            out.append(SubgraphMask(m.nodes, m.edges | {e}, m.feature_mask))
    if feature_mode and m.feature_mask is not None:
        fm = dict(m.feature_mask)
        for u in sorted(m.nodes):
            keep = fm.get(u)
            if keep is None:
                continue
            for i, k in enumerate(keep):
                if not k:
                    new_keep = tuple(
                        kk if j != i else True for j, kk in enumerate(keep))
                    new_fm = dict(fm)
                    new_fm[u] = new_keep
                    out.append(SubgraphMask(
                        m.nodes, m.edges, tuple(sorted(new_fm.items()))))
    return out


def all_masks(g: Graph, cap: int = DEFAULT_LATTICE_CAP) -> list[SubgraphMask]:
    """Every valid (V', E' subset of E induced by V') mask of g."""
    if g.n + len(g.edges) > cap:
        raise TooLargeError(
            f"|V|+|E| = {g.n + len(g.edges)} exceeds lattice cap {cap}")
    masks = []
    nodes = list(g.node_ids)
    for bits in range(1 << g.n):
        vset = frozenset(nodes[i] for i in range(g.n) if bits >> i & 1)
        cand = [e for e in g.edges if e[0] in vset and e[1] in vset]
        for ebits in range(1 << len(cand)):
            eset = frozenset(cand[i] for i in range(len(cand))
                             if ebits >> i & 1)
            masks.append(SubgraphMask(vset, eset))
    return masks


def enumerate_masks_by_size(g: Graph,
                            metric: SizeMetric = SizeMetric.EDGES_PLUS_NODES,
                            max_size: Optional[int] = None,
                            cap: int = DEFAULT_LATTICE_CAP,
                            ) -> Iterator[SubgraphMask]:
    """Yield every valid mask in non-decreasing size, lexicographic within
    a size. Refuses hosts beyond the exhaustive cap."""
    masks = all_masks(g, cap=cap)
    masks.sort(key=lambda m: (metric.size(m, g),) + m.sort_key())
    for m in masks:
        if max_size is not None and metric.size(m, g) > max_size:
            break
        yield m


def has_cycle(g: Graph) -> bool:
    """True iff g contains a cycle (length >= 3; graphs are simple)."""
    parent: dict[int, Optional[int]] = {}
    adj: dict[int, list[int]] = {u: [] for u in g.node_ids}
    for u, v in g.edges:
        adj[u].append(v)
        adj[v].append(u)
    visited: set[int] = set()
    for start in g.node_ids:
        if start in visited:
            continue
        stack: list[tuple[int, Optional[int]]] = [(start, None)]
        while stack:
            u, par = stack.pop()
            if u in visited:
                return True
            visited.add(u)
            parent[u] = par
            skipped_parent = False
            for w in adj[u]:
                if w == par and not skipped_parent:
                    # Skip one multiplicity of the tree edge back to parent.
                    skipped_parent = True
                    continue
                if w in visited:
                    return True
                stack.append((w, u))
    return False


def connected_components(g: Graph) -> list[set[int]]:
    adj: dict[int, list[int]] = {u: [] for u in g.node_ids}
    for u, v in g.edges:
        adj[u].append(v)
        adj[v].append(u)
    seen: set[int] = set()
    comps = []
    for start in g.node_ids:
        if start in seen:
            continue
        comp = set()
        stack = [start]
        while stack:
            u = stack.pop()
            if u in comp:
                continue
            comp.add(u)
            stack.extend(w for w in adj[u] if w not in comp)
        seen |= comp
        comps.append(comp)
    return comps


# --- JSONL persistence (one graph per line, fixed field order) ---

def graph_to_record(g: Graph, y: Optional[int] = None,
                    gt_edges: Optional[Sequence[Edge]] = None) -> str:
    obj: dict = {"n": g.n, "edges": [list(e) for e in g.edges],
                 "x": [list(r) for r in g.features],
                 "names": list(g.feature_names)}
    if y is not None:
        obj["y"] = int(y)
    if gt_edges is not None:
        obj["gt_edges"] = [list(e) for e in sorted(gt_edges)]
    return json.dumps(obj, separators=(",", ":"))


def graph_from_record(line: str) -> tuple[Graph, Optional[int], Optional[list[Edge]]]:
    obj = json.loads(line)
    g = build_graph(obj["n"], obj["edges"], obj.get("x") or None,
                    obj.get("names") or None)
    y = obj.get("y")
    gt = None
    if "gt_edges" in obj:
        gt = [_canon_edge(int(u), int(v)) for u, v in obj["gt_edges"]]
    return g, (int(y) if y is not None else None), gt
