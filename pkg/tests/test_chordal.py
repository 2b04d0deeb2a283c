import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chordsos.chordal import (CliqueSet, SparsityGraph, chordal_cliques, chordal_extension, clique_index_matrix,
                              clique_tree, has_running_intersection, is_chordal, is_perfect_elimination_order,
                              maximal_cliques)

CYCLE4 = SparsityGraph(4, [(1, 2), (2, 3), (3, 4), (1, 4)])


def brute_force_chordal(g: SparsityGraph) -> bool:
    """No induced cycle of length >= 4 (checked over all vertex subsets)."""
    for size in range(4, g.r + 1):
        for S in itertools.combinations(range(1, g.r + 1), size):
            s = set(S)
            degs = [len(g.neighbors(v) & s) for v in S]
            if any(dg != 2 for dg in degs):
                continue
            # all degree 2: a union of cycles; induced cycle iff connected
            seen, stack = {S[0]}, [S[0]]
            while stack:
                v = stack.pop()
                for u in g.neighbors(v) & s:
                    if u not in seen:
                        seen.add(u)
                        stack.append(u)
            if seen == s:
                return False
    return True


def all_graphs(r):
    pairs = [(i, j) for i in range(1, r + 1) for j in range(i + 1, r + 1)]
    for mask in range(1 << len(pairs)):
        yield SparsityGraph(r, [p for k, p in enumerate(pairs) if mask >> k & 1])


def test_examples():
    assert is_chordal(SparsityGraph.line(3))[0]
    assert not is_chordal(CYCLE4)[0]
    assert is_chordal(SparsityGraph.star(5))[0]


def test_extension_of_chordal_graph_adds_nothing():
    for g in (SparsityGraph.line(5), SparsityGraph.star(6), SparsityGraph.complete(4), SparsityGraph(4)):
        assert chordal_extension(g) == g


def test_cycle_extension_min_degree_lowest_index():
    # node 1 is eliminated first (all degrees equal), joining its neighbours 2 and 4
    ext = chordal_extension(CYCLE4)
    assert len(ext.edges) == 5
    assert ext.edges - CYCLE4.edges == {(2, 4)}
    assert is_chordal(ext)[0]


def test_maximal_cliques_examples():
    g = SparsityGraph.line(3)
    _, peo = is_chordal(g)
    assert maximal_cliques(g, peo).cliques == ((1, 2), (2, 3))
    _, peo = is_chordal(SparsityGraph.complete(4))
    assert maximal_cliques(SparsityGraph.complete(4), peo).cliques == ((1, 2, 3, 4),)
    g = SparsityGraph.star(5)
    _, peo = is_chordal(g)
    assert maximal_cliques(g, peo).cliques == ((1, 2), (1, 3), (1, 4), (1, 5))


def test_maximal_cliques_rejects_bad_certificate():
    from chordsos.chordal import EliminationOrder
    with pytest.raises(ValueError):
        maximal_cliques(CYCLE4, EliminationOrder((1, 2, 3, 4)))


def test_clique_tree_examples():
    t = clique_tree(CliqueSet(((1, 2), (2, 3))))
    assert t.parent == (None, 0) and t.separators == ((), (2,))
    t = clique_tree(CliqueSet(((1, 2, 3),)))
    assert t.parent == (None,) and t.separators == ((),)
    t = clique_tree(CliqueSet(((1, 2), (1, 3), (1, 4), (1, 5))))
    assert t.parent == (None, 0, 0, 0)
    assert all(s == (1,) for s in t.separators[1:])


def test_index_matrices():
    np.testing.assert_array_equal(clique_index_matrix((1, 2), 3), [[1, 0, 0], [0, 1, 0]])
    np.testing.assert_array_equal(clique_index_matrix((2, 3), 3), [[0, 1, 0], [0, 0, 1]])
    np.testing.assert_array_equal(clique_index_matrix((1, 2, 3, 4), 4), np.eye(4))
    with pytest.raises(ValueError):
        clique_index_matrix((3, 1), 3)


@pytest.mark.parametrize("r", [1, 2, 3, 4, 5, 6])
def test_chordality_matches_brute_force_exhaustive(r):
    for g in all_graphs(r):
        ok, peo = is_chordal(g)
        assert ok == brute_force_chordal(g), g
        if ok:
            assert is_perfect_elimination_order(g, peo.order)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2 ** 21 - 1))
def test_chordality_matches_brute_force_r7(mask):
    pairs = [(i, j) for i in range(1, 8) for j in range(i + 1, 8)]
    g = SparsityGraph(7, [p for k, p in enumerate(pairs) if mask >> k & 1])
    assert is_chordal(g)[0] == brute_force_chordal(g)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2 ** 32 - 1))
def test_extension_cliques_and_tree(r, seed):
    rng = np.random.default_rng(seed)
    g = SparsityGraph(r, [(i, j) for i in range(1, r + 1) for j in range(i + 1, r + 1) if rng.random() < 0.4])
    ext, cs = chordal_cliques(g)
    assert g.edges <= ext.edges and is_chordal(ext)[0]
    # cliques are complete, maximal and cover every edge
    for c in cs:
        assert all(ext.has_edge(a, b) for a, b in itertools.combinations(c, 2))
        others = set(range(1, r + 1)) - set(c)
        assert not any(all(ext.has_edge(v, u) for u in c) for v in others)
    covered = {(a, b) for c in cs for a, b in itertools.combinations(c, 2)}
    assert covered == set(ext.edges)
    assert SparsityGraph.from_cliques(r, cs) == ext
    assert has_running_intersection(clique_tree(cs))
