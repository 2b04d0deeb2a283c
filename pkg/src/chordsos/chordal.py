"""Sparsity graphs, chordality, maximal cliques and clique trees.

Nodes are labelled ``1..r`` everywhere in the public interface.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class SparsityGraph:
    """Undirected simple graph on nodes ``1..r``.

    Self-loops are implicit (every diagonal entry is part of the pattern)
    and are never stored.
    """

    __slots__ = ("_r", "_edges", "_adj")

    def __init__(self, r: int, edges: Iterable[tuple[int, int]] = ()):
        if r < 0:
            raise ValueError("node count must be nonnegative")
        es = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if not (1 <= i <= r and 1 <= j <= r):
                raise ValueError(f"edge ({i},{j}) has a node outside 1..{r}")
            if i == j:
                continue
            es.add((min(i, j), max(i, j)))
        adj = [set() for _ in range(r + 1)]
        for i, j in es:
            adj[i].add(j)
            adj[j].add(i)
        self._r = r
        self._edges = frozenset(es)
        self._adj = tuple(frozenset(a) for a in adj)

    @classmethod
    def complete(cls, r: int) -> "SparsityGraph":
        return cls(r, [(i, j) for i in range(1, r + 1) for j in range(i + 1, r + 1)])

    @classmethod
    def line(cls, r: int) -> "SparsityGraph":
        return cls(r, [(i, i + 1) for i in range(1, r)])

    @classmethod
    def star(cls, r: int, center: int = 1) -> "SparsityGraph":
        return cls(r, [(center, k) for k in range(1, r + 1) if k != center])

    @classmethod
    def from_cliques(cls, r: int, cliques: Iterable[Sequence[int]]) -> "SparsityGraph":
        return cls(r, [(a, b) for c in cliques for ai, a in enumerate(c) for b in c[ai + 1:]])

    @property
    def r(self) -> int:
        return self._r

    @property
    def edges(self) -> frozenset[tuple[int, int]]:
        return self._edges

    def neighbors(self, v: int) -> frozenset[int]:
        return self._adj[v]

    def has_edge(self, i: int, j: int) -> bool:
        return i == j or (min(i, j), max(i, j)) in self._edges

    def in_pattern(self, i: int, j: int) -> bool:
        """Membership in the edge set extended with self-loops."""
        return self.has_edge(i, j)

    def degree(self, v: int) -> int:
        return len(self._adj[v])

    def induced(self, nodes: Sequence[int]) -> "SparsityGraph":
        """Subgraph on ``nodes``, relabelled ``1..len(nodes)`` in the given order."""
        pos = {v: k + 1 for k, v in enumerate(nodes)}
        return SparsityGraph(len(nodes), [(pos[i], pos[j]) for i, j in self._edges if i in pos and j in pos])

    def union(self, other: "SparsityGraph") -> "SparsityGraph":
        if other.r != self.r:
            raise ValueError("graphs have different node counts")
        return SparsityGraph(self.r, self._edges | other._edges)

    def is_complete(self) -> bool:
        return len(self._edges) == self._r * (self._r - 1) // 2

    def __eq__(self, other):
        if not isinstance(other, SparsityGraph):
            return NotImplemented
        return self._r == other._r and self._edges == other._edges

    def __hash__(self):
        return hash((self._r, self._edges))

    def __repr__(self) -> str:
        return f"SparsityGraph({self._r}, {sorted(self._edges)})"


@dataclass(frozen=True)
class EliminationOrder:
    """Node order; as a certificate, each node's later neighbours form a clique."""

    order: tuple[int, ...]

    def position(self) -> dict[int, int]:
        return {v: k for k, v in enumerate(self.order)}


@dataclass(frozen=True)
class CliqueSet:
    cliques: tuple[tuple[int, ...], ...]

    def __len__(self) -> int:
        return len(self.cliques)

    def __iter__(self):
        return iter(self.cliques)

    def __getitem__(self, k: int) -> tuple[int, ...]:
        return self.cliques[k]


@dataclass(frozen=True)
class CliqueTree:
    """Spanning forest over clique indices (0-based).

    ``parent[k]`` is ``None`` for roots.  ``separators[k]`` is the intersection
    of clique ``k`` with its parent (empty for roots).  ``order`` lists every
    clique after its parent.
    """

    cliques: CliqueSet
    parent: tuple[int | None, ...]
    separators: tuple[tuple[int, ...], ...]
    order: tuple[int, ...] = field(default=())

    def children(self, k: int) -> list[int]:
        return [c for c, p in enumerate(self.parent) if p == k]


def maximum_cardinality_search(g: SparsityGraph) -> list[int]:
    """Visit order of maximum cardinality search (ties: lowest node label)."""
    r = g.r
    weight = [0] * (r + 1)
    visited = [False] * (r + 1)
    # bucket by weight for O(r + |E|) behaviour
    buckets: list[set[int]] = [set(range(1, r + 1))] + [set() for _ in range(r)]
    top = 0
    visit = []
    for _ in range(r):
        while top > 0 and not buckets[top]:
            top -= 1
        v = min(buckets[top])
        buckets[top].discard(v)
        visited[v] = True
        visit.append(v)
        for u in g.neighbors(v):
            if not visited[u]:
                buckets[weight[u]].discard(u)
                weight[u] += 1
                buckets[weight[u]].add(u)
                top = max(top, weight[u])
    return visit


def is_perfect_elimination_order(g: SparsityGraph, order: Sequence[int]) -> bool:
    """Check that each node's later neighbours form a clique (Tarjan-Yannakakis test)."""
    if sorted(order) != list(range(1, g.r + 1)):
        return False
    pos = {v: k for k, v in enumerate(order)}
    follow: dict[int, set[int]] = {v: set() for v in order}
    for v in order:
        later = [u for u in g.neighbors(v) if pos[u] > pos[v]]
        if not later:
            continue
        w = min(later, key=pos.__getitem__)
        # later neighbours of v other than w must be adjacent to w
        follow[w].update(u for u in later if u != w)
    for w, required in follow.items():
        if not required <= g.neighbors(w):
            return False
    return True


def is_chordal(g: SparsityGraph) -> tuple[bool, EliminationOrder | None]:
    """Chordality test; returns a perfect elimination ordering when chordal."""
    order = list(reversed(maximum_cardinality_search(g)))
    if is_perfect_elimination_order(g, order):
        return True, EliminationOrder(tuple(order))
    return False, None


def chordal_extension(g: SparsityGraph) -> SparsityGraph:
    """Greedy minimum-degree elimination fill; ties go to the lowest node label."""
    adj = {v: set(g.neighbors(v)) for v in range(1, g.r + 1)}
    remaining = set(adj)
    fill = set()
    while remaining:
        v = min(remaining, key=lambda u: (len(adj[u]), u))
        nbrs = sorted(adj[v])
        for a_i, a in enumerate(nbrs):
            for b in nbrs[a_i + 1:]:
                if b not in adj[a]:
                    adj[a].add(b)
                    adj[b].add(a)
                    fill.add((a, b))
        for u in nbrs:
            adj[u].discard(v)
        remaining.discard(v)
        del adj[v]
    return SparsityGraph(g.r, g.edges | fill)


def maximal_cliques(g: SparsityGraph, peo: EliminationOrder) -> CliqueSet:
    """Maximal cliques of a chordal graph from its perfect elimination ordering.

    Cliques are returned with sorted node labels, ordered by their smallest
    node (then lexicographically).
    """
    if not is_perfect_elimination_order(g, peo.order):
        raise ValueError("elimination order is not a perfect elimination ordering of the graph")
    pos = peo.position()
    candidates = []
    for v in peo.order:
        later = {u for u in g.neighbors(v) if pos[u] > pos[v]}
        candidates.append(frozenset([v]) | later)
    # a candidate is maximal iff it is not contained in another candidate
    candidates.sort(key=len, reverse=True)
    kept: list[frozenset[int]] = []
    for c in candidates:
        if not any(c <= k for k in kept):
            kept.append(c)
    return CliqueSet(tuple(sorted(tuple(sorted(c)) for c in kept)))


def chordal_cliques(g: SparsityGraph) -> tuple[SparsityGraph, CliqueSet]:
    """Extend ``g`` if needed and return the (possibly extended) graph with its cliques."""
    ok, peo = is_chordal(g)
    if not ok:
        g = chordal_extension(g)
        ok, peo = is_chordal(g)
        assert ok
    return g, maximal_cliques(g, peo)


def clique_tree(cs: CliqueSet) -> CliqueTree:
    """Maximum-weight spanning forest of the clique intersection graph.

    Prim's algorithm from clique 0; each clique attaches to the
    lowest-index tree clique with the largest intersection.  Cliques with no
    overlap start new components.
    """
    t = len(cs)
    sets = [set(c) for c in cs]
    parent: list[int | None] = [None] * t
    in_tree = [False] * t
    best_w = [-1] * t
    best_p: list[int | None] = [None] * t
    order = []
    for _ in range(t):
        # pick the next clique: largest attachment weight, then lowest index
        cand = [k for k in range(t) if not in_tree[k]]
        k = max(cand, key=lambda c: (best_w[c], -c))
        if best_w[k] <= 0:
            parent[k] = None
        else:
            parent[k] = best_p[k]
        in_tree[k] = True
        order.append(k)
        for j in range(t):
            if not in_tree[j]:
                w = len(sets[k] & sets[j])
                if w > best_w[j]:
                    best_w[j] = w
                    best_p[j] = k
    seps = tuple(tuple(sorted(sets[k] & sets[p])) if p is not None else () for k, p in enumerate(parent))
    return CliqueTree(cs, tuple(parent), seps, tuple(order))


def has_running_intersection(tree: CliqueTree) -> bool:
    """Cliques containing each node must induce a connected subtree."""
    cs = tree.cliques
    nodes = {v for c in cs for v in c}
    for v in nodes:
        holders = {k for k, c in enumerate(cs) if v in c}
        # in a forest, a vertex set is connected iff exactly one member has its parent outside
        tops = [k for k in holders if tree.parent[k] is None or tree.parent[k] not in holders]
        if len(tops) != 1:
            return False
    return True


def clique_index_matrix(clique: Sequence[int], r: int) -> np.ndarray:
    """0/1 matrix ``E`` with ``E[i, j] = 1`` iff the i-th clique node is ``j + 1``."""
    nodes = list(clique)
    if any(not 1 <= v <= r for v in nodes):
        raise ValueError(f"clique {nodes} has nodes outside 1..{r}")
    if nodes != sorted(set(nodes)):
        raise ValueError("clique nodes must be sorted and distinct")
    E = np.zeros((len(nodes), r))
    E[np.arange(len(nodes)), np.asarray(nodes, dtype=int) - 1] = 1.0
    return E
