import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chordsos import fixtures, io
from chordsos.chordal import CliqueSet, SparsityGraph
from chordsos.poly import PolyMatrix, Polynomial, variables
from chordsos.psdchordal import SparseSymMatrix, decompose_psd, lambda_min, pattern_mask
from chordsos.sosdc import (CliqueNotSosError, InconsistentGramError, NotSparseSosError, PartialPolyMatrix,
                            SosDecomposition, _clique_cert, _completion_structure, check_consistency,
                            complete_sos, decompose_sos, independent_clique_grams, pairwise_violations,
                            verify_decomposition)
from chordsos.sosgram import gram_structure, is_sos, reconstruct

from conftest import inconsistent_partial, interior_two_separator, lifted_sos_sum, masked_sos, random_chordal

(x,) = variables(1)
Q1 = np.array([[1, 0, 0, 0.4], [0, 1, 0.6, 0], [0, 0.6, 1.11, -0.545], [0.4, 0, -0.545, 0.56]])
Q2 = np.array([[1.89, -0.455, 1, 0.8], [-0.455, 0.44, 0.2, 0], [1, 0.2, 2, 0], [0.8, 0, 0, 1]])
P1 = PolyMatrix([[x ** 2 + 1, x], [x, 0.56 * x ** 2 - 1.09 * x + 1.11]])
P2 = PolyMatrix([[0.44 * x ** 2 - 0.91 * x + 1.89, x + 1], [x + 1, x ** 2 + 2]])


def eq3():
    return io.load(fixtures.path("eq3.json")).payload


def eq5():
    return io.load(fixtures.path("eq5.json")).payload


def test_printed_pieces_verify():
    dec = SosDecomposition.from_pieces(eq3(), [((1, 2), P1, Q1), ((2, 3), P2, Q2)])
    rep = verify_decomposition(eq3(), dec)
    assert rep.ok
    assert rep.residual <= 1e-12 and max(rep.piece_residuals) <= 1e-12
    assert min(rep.lambda_min) > 0


def test_perturbed_piece_reports_residual():
    bad = P1 + PolyMatrix([[Polynomial.zero(1), Polynomial.zero(1)], [Polynomial.zero(1), 0.1 * x]])
    dec = SosDecomposition.from_pieces(eq3(), [((1, 2), bad, Q1), ((2, 3), P2, Q2)])
    rep = verify_decomposition(eq3(), dec)
    assert not rep.ok
    assert rep.residual == pytest.approx(0.1, abs=1e-12)
    assert rep.piece_residuals[0] == pytest.approx(0.1, abs=1e-12)


def test_indefinite_piece_flagged():
    Qbad = Q1.copy()
    Qbad[3, 3] = 0.2
    Pbad = reconstruct(structure=gram_structure(2, 1, 1, SparsityGraph.complete(2)), Q=Qbad)
    P = Pbad.inflate((1, 2), 3) + P2.inflate((2, 3), 3)
    rep = verify_decomposition(P, SosDecomposition.from_pieces(P, [((1, 2), Pbad, Qbad), ((2, 3), P2, Q2)]))
    assert not rep.ok
    assert rep.residual <= 1e-12
    assert rep.lambda_min[0] < 0 and rep.lambda_min[1] > 0


def test_decompose_worked_example():
    P = eq3()
    dec = decompose_sos(P)
    assert [pc.clique for pc in dec.pieces] == [(1, 2), (2, 3)]
    rep = verify_decomposition(P, dec)
    assert rep.ok and rep.residual <= 1e-6
    assert all(lm >= -1e-9 for lm in rep.lambda_min)
    assert dec.added_edges == ()


def test_decompose_constant_matches_psd_split():
    X = np.array([[2.0, 1.0, 0.0], [1.0, 1.0, 1.0], [0.0, 1.0, 2.0]])
    g = SparsityGraph.line(3)
    dec = decompose_sos(PolyMatrix.constant(X, 1, g))
    ref = decompose_psd(SparseSymMatrix(X, g), CliqueSet(((1, 2), (2, 3))))
    assert dec.structure.d == 0
    for pc, (_, Xk) in zip(dec.pieces, ref):
        np.testing.assert_allclose(pc.Q, Xk, atol=1e-6)


def test_decompose_non_chordal_pattern_is_extended():
    g = SparsityGraph(4, [(1, 2), (2, 3), (3, 4), (1, 4)])
    P = PolyMatrix.constant(4 * np.eye(4) + pattern_mask(g) - np.eye(4), 1, g)
    with pytest.warns(UserWarning, match="not chordal"):
        dec = decompose_sos(P)
    assert dec.added_edges == ((2, 4),)
    assert verify_decomposition(P, dec).ok


def test_decompose_outside_sparse_cone():
    # PSD but not decomposable along the single separator node
    P = PolyMatrix.constant(np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0]]), 1,
                            SparsityGraph.line(3))
    with pytest.raises(NotSparseSosError):
        decompose_sos(P)


def test_partial_matrix_validation():
    g = SparsityGraph.line(3)
    with pytest.raises(ValueError):
        PartialPolyMatrix(3, 1, g, {(1, 1): x ** 2, (2, 2): 1.0})
    with pytest.raises(ValueError):
        PartialPolyMatrix(3, 1, g, {(1, 1): 1.0, (2, 2): 1.0, (3, 3): 1.0, (1, 3): x})
    P = PartialPolyMatrix(3, 1, g, {(1, 1): 1.0, (2, 2): 1.0, (3, 3): 1.0})
    assert P.entry(1, 2).is_zero() and P.entry(1, 3) is None


def test_complete_worked_example():
    P = eq5()
    comp = complete_sos(P)
    for (i, j), p in P.entries.items():
        assert comp.F.entry(i, j).max_coeff_diff(p) <= 1e-6
    assert is_sos(comp.F)
    assert lambda_min(comp.Qhat) >= -1e-9
    assert reconstruct(structure=comp.structure, Q=comp.Qhat).max_coeff_diff(comp.F) <= 1e-6
    ok, worst = check_consistency(comp.clique_certificates, comp.structure)
    assert ok and worst == 0.0


def test_printed_completion_is_sos():
    fill = 0.3 * x ** 2 + 0.6 * x + 0.3
    assert is_sos(eq5().filled({(1, 3): fill}))


def test_worked_example_clique_grams_already_agree():
    # the clique Grams for this example are pinned down by the data, so even
    # independently solved blocks agree on the overlap
    P = eq5()
    structure = _completion_structure(P)
    certs = independent_clique_grams(P, structure)
    ok, worst = check_consistency(certs, structure)
    assert ok and worst <= 1e-7


def test_independent_grams_inconsistent_but_coupled_consistent():
    P = interior_two_separator()
    structure = _completion_structure(P)
    ok, worst = check_consistency(independent_clique_grams(P, structure), structure)
    assert not ok and worst > 0.1
    comp = complete_sos(P)
    ok, worst = check_consistency(comp.clique_certificates, comp.structure)
    assert ok and worst <= 1e-7
    assert is_sos(comp.F)


def test_complete_fully_specified():
    F = eq3().with_pattern(SparsityGraph.complete(3))
    comp = complete_sos(PartialPolyMatrix.from_matrix(F))
    assert comp.F == F
    assert len(comp.clique_certificates) == 1
    assert reconstruct(structure=comp.structure, Q=comp.Qhat).max_coeff_diff(F) <= 1e-6


def test_complete_clique_failure_is_reported():
    ent = dict(eq5().entries)
    ent[(2, 2)] = Polynomial.constant(1, -1.0)
    with pytest.raises(CliqueNotSosError) as info:
        complete_sos(PartialPolyMatrix(3, 1, SparsityGraph.line(3), ent))
    assert info.value.clique == 0 and info.value.nodes == (1, 2)


def test_complete_inconsistent_pair_is_reported():
    P = inconsistent_partial()
    structure = _completion_structure(P)
    assert all(c.feasible for c in independent_clique_grams(P, structure))
    with pytest.raises(InconsistentGramError) as info:
        complete_sos(P)
    assert info.value.pair == (0, 1)
    assert info.value.margin < -1e-3


def test_complete_rejects_non_chordal():
    from chordsos.psdchordal import NotChordalError
    g = SparsityGraph(4, [(1, 2), (2, 3), (3, 4), (1, 4)])
    with pytest.raises(NotChordalError):
        complete_sos(PartialPolyMatrix(4, 0, g, {(i, i): 1.0 for i in range(1, 5)}))


def test_consistency_trivial_cases():
    P = eq5()
    structure = _completion_structure(P)
    Q = np.random.default_rng(0).standard_normal((structure.l, structure.l))
    Q = Q @ Q.T
    certs = [_clique_cert(structure, k, Q) for k in range(2)]
    assert check_consistency(certs, structure) == (True, 0.0)
    assert pairwise_violations(certs, structure) == {(0, 1): 0.0}
    single = _completion_structure(PartialPolyMatrix.from_matrix(eq3().with_pattern(SparsityGraph.complete(3))))
    assert check_consistency([_clique_cert(single, 0, np.eye(single.l))], single) == (True, 0.0)
    with pytest.raises(ValueError):
        check_consistency(certs[:1], structure)


# -- properties ---------------------------------------------------------------

instances = st.tuples(st.integers(1, 6), st.integers(1, 2), st.integers(0, 1), st.integers(0, 2 ** 32 - 1))


@settings(max_examples=100, deadline=None)
@given(instances)
def test_round_trip_lifted_sums(inst):
    r, n, d, seed = inst
    rng = np.random.default_rng(seed)
    P, _ = lifted_sos_sum(rng, r, n, d, low_rank=bool(seed & 1))
    dec = decompose_sos(P)
    rep = verify_decomposition(P, dec)
    assert rep.ok, rep


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
def test_constant_reduction_matches_psd(r, seed):
    rng = np.random.default_rng(seed)
    g, cs = random_chordal(rng, r)
    X = np.zeros((r, r))
    for c in cs:
        idx = np.asarray(c) - 1
        V = rng.standard_normal((len(c), len(c)))
        X[np.ix_(idx, idx)] += V @ V.T + 0.1 * np.eye(len(c))
    dec = decompose_sos(PolyMatrix.constant(X, int(rng.integers(1, 3)), g))
    ref = decompose_psd(SparseSymMatrix(X, g), cs)
    scale = max(1.0, np.abs(X).max())
    assert [pc.clique for pc in dec.pieces] == list(cs.cliques)
    for pc, (_, Xk) in zip(dec.pieces, ref):
        np.testing.assert_allclose(pc.Q, Xk, atol=1e-5 * scale)
        # constant pieces carry the same numbers as their Gram blocks
        np.testing.assert_allclose(pc.P.eval(np.zeros(pc.P.nvars)), pc.Q, atol=1e-12 * scale)


@settings(max_examples=100, deadline=None)
@given(instances)
def test_completion_agreement_and_consistency(inst):
    r, n, d, seed = inst
    rng = np.random.default_rng(seed)
    P, _ = masked_sos(rng, r, n, d)
    comp = complete_sos(P)
    for (i, j), p in P.entries.items():
        assert comp.F.entry(i, j).max_coeff_diff(p) <= 1e-6
    ok, worst = check_consistency(comp.clique_certificates, comp.structure)
    assert ok and worst <= 1e-7
    assert lambda_min(comp.Qhat) >= -1e-7 * max(1.0, np.abs(comp.Qhat).max())


@settings(max_examples=15, deadline=None)
@given(instances)
def test_completed_cliques_are_sos(inst):
    r, n, d, seed = inst
    rng = np.random.default_rng(seed)
    P, _ = masked_sos(rng, r, n, d)
    comp = complete_sos(P)
    assert is_sos(comp.F)
    for c in comp.structure.cliques:
        assert is_sos(comp.F.principal(c))
