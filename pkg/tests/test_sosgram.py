import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chordsos import fixtures, io
from chordsos.chordal import CliqueSet, SparsityGraph
from chordsos.poly import PolyMatrix, variables
from chordsos.psdchordal import lambda_min
from chordsos.sosgram import (coefficient_equations, factor_product, find_gram, gram_structure, is_sos,
                              reconstruct, sos_factor, structure_for)

from conftest import lifted_sos_sum, random_gram

# sparse Gram printed for the three-by-three worked example, basis [1, x]
Q_PRINTED = np.array([
    [1, 0, 0, 0.4, 0, 0],
    [0, 1, 0.6, 0, 0, 0],
    [0, 0.6, 3, -1, 1, 0.8],
    [0.4, 0, -1, 1, 0.2, 0],
    [0, 0, 1, 0.2, 2, 0],
    [0, 0, 0.8, 0, 0, 1],
])


def eq3():
    return io.load(fixtures.path("eq3.json")).payload


def test_structure_sizes():
    st_ = structure_for(eq3())
    assert (st_.r, st_.n, st_.d, st_.N, st_.l) == (3, 1, 1, 2, 6)
    assert st_.cliques.cliques == ((1, 2), (2, 3))
    assert st_.hyper_cliques == ((1, 2, 3, 4), (3, 4, 5, 6))


def test_printed_gram_reconstructs_worked_example():
    P = eq3()
    st_ = structure_for(P)
    assert lambda_min(Q_PRINTED) > 0
    assert reconstruct(structure=st_, Q=Q_PRINTED).max_coeff_diff(P) <= 1e-12
    assert coefficient_equations(st_, P, sparse=True).residual(Q_PRINTED) <= 1e-12


@pytest.mark.parametrize("sparse", [True, False])
def test_find_gram_worked_example(sparse):
    P = eq3()
    cert = find_gram(P, sparse=sparse)
    assert cert.feasible and cert.margin > 0
    assert cert.lambda_min >= 0
    assert reconstruct(cert).max_coeff_diff(P) <= 1e-6
    if sparse:
        # zero outside the lifted pattern
        assert cert.Q[0, 4] == 0.0 and cert.Q[1, 5] == 0.0


def test_find_gram_infeasible_diagonal():
    (x,) = variables(1)
    P = PolyMatrix.from_upper(2, 1, {(1, 1): x ** 2 + 1, (2, 2): -1.0})
    assert not find_gram(P).feasible
    assert not is_sos(P)


def test_constant_matrices():
    P = PolyMatrix.constant(np.array([[2.0, 1.0], [1.0, 1.0]]), 0)
    cert = find_gram(P, sparse=False)
    assert cert.feasible
    np.testing.assert_allclose(cert.Q, [[2, 1], [1, 1]], atol=1e-6)
    assert not is_sos(PolyMatrix.constant(np.array([[1.0, 2.0], [2.0, 1.0]]), 0))


def test_scalar_polynomials():
    (x,) = variables(1)
    assert is_sos(PolyMatrix([[x ** 2 - 2 * x + 1]]))
    assert not is_sos(PolyMatrix([[x ** 2 - 3 * x + 1]]))


def test_sos_factor_reproduces_matrix():
    P = eq3()
    cert = find_gram(P, sparse=False)
    M = sos_factor(cert)
    assert 1 <= len(M) <= 6
    assert factor_product(M, 3, 1).max_coeff_diff(P) <= 1e-6


def test_sparse_gram_respects_clique_layout():
    st_ = gram_structure(3, 1, 1, SparsityGraph.line(3), CliqueSet(((1, 2), (2, 3))))
    np.testing.assert_array_equal(st_.multiplicity(), [1, 1, 2, 2, 1, 1])
    lifted = st_.lifted_pattern()
    assert lifted.has_edge(1, 4) and lifted.has_edge(3, 6) and not lifted.has_edge(1, 5)
    np.testing.assert_array_equal(st_.lifted_index_matrix(1)[:, 2:], np.eye(4))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(1, 2), st.integers(0, 1), st.integers(0, 2 ** 32 - 1))
def test_sparse_feasible_implies_dense_feasible(r, n, d, seed):
    rng = np.random.default_rng(seed)
    P, _ = lifted_sos_sum(rng, r, n, d, low_rank=bool(seed & 1))
    if seed & 2:
        # push some instances towards the boundary of the sparse cone
        P = P - PolyMatrix.identity(r, n, P.pattern) * float(rng.uniform(0, 0.3))
    sparse = find_gram(P, sparse=True)
    if sparse.feasible:
        assert find_gram(P, sparse=False).feasible


def test_random_dense_gram_round_trip(rng):
    for _ in range(10):
        r, n, d = int(rng.integers(1, 4)), int(rng.integers(1, 3)), int(rng.integers(0, 2))
        st_ = gram_structure(r, n, d, SparsityGraph.complete(r))
        P = reconstruct(structure=st_, Q=random_gram(rng, st_.l))
        cert = find_gram(P, sparse=False)
        assert cert.feasible
        assert reconstruct(cert).max_coeff_diff(P) <= 1e-6 * max(1.0, P.max_abs_coeff())
