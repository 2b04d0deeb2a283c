import numpy as np
import pytest
from hypothesis import settings

from chordsos.chordal import SparsityGraph, chordal_cliques
from chordsos.poly import PolyMatrix
from chordsos.sosdc import PartialPolyMatrix
from chordsos.sosgram import gram_structure, reconstruct

# fixed example sequence so that runs are reproducible
settings.register_profile("repro", derandomize=True)
settings.load_profile("repro")

# filled in by test_acceptance.py, printed at the end of the run
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def record(criterion: int, ok: bool, msg: str) -> None:
    """Log one (part of an) acceptance criterion; a criterion passes if all its parts do."""
    ACCEPTANCE.setdefault(criterion, []).append((bool(ok), msg))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[k]
        ok = all(p for p, _ in parts)
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  " + "; ".join(m for _, m in parts))


def random_graph(rng, r, p=0.5):
    return SparsityGraph(r, [(i, j) for i in range(1, r + 1) for j in range(i + 1, r + 1) if rng.random() < p])


def random_chordal(rng, r, p=0.4):
    g, cs = chordal_cliques(random_graph(rng, r, p))
    return g, cs


def random_gram(rng, size, rank=None):
    rank = size if rank is None else rank
    V = rng.standard_normal((size, rank))
    return V @ V.T / max(1, rank)


def lifted_sos_sum(rng, r, n, d, low_rank=False):
    """``sum_k E_k^T P_k E_k`` from random SOS pieces on a random chordal pattern."""
    g, cs = random_chordal(rng, r)
    total = PolyMatrix.from_upper(r, n, {}, g)
    pieces = []
    for c in cs:
        st = gram_structure(len(c), n, d, SparsityGraph.complete(len(c)))
        rank = int(rng.integers(1, st.l + 1)) if low_rank else None
        Pk = reconstruct(structure=st, Q=random_gram(rng, st.l, rank))
        pieces.append((c, Pk))
        total = total + Pk.inflate(c, r)
    return total.with_pattern(g), pieces


def masked_sos(rng, r, n, d):
    """Random dense SOS matrix restricted to a random chordal pattern (always completable)."""
    g, cs = random_chordal(rng, r)
    st = gram_structure(r, n, d, SparsityGraph.complete(r))
    F = reconstruct(structure=st, Q=random_gram(rng, st.l) + 0.05 * np.eye(st.l))
    return PartialPolyMatrix.from_matrix(F, g), F


def inconsistent_partial(seed=1):
    """Cliques {1,2,3} and {2,3,4}; each clique SOS with a unique Gram, but the two Grams
    disagree on the antisymmetric part of the (2,3) block, so no completion exists."""
    rng = np.random.default_rng(seed)
    J = np.array([[0.0, 1.0], [-1.0, 0.0]])
    st = gram_structure(3, 1, 1, SparsityGraph.complete(3))
    V1 = np.vstack([rng.standard_normal((2, 2)), np.eye(2), J.T])
    V2 = np.vstack([np.eye(2), J, rng.standard_normal((2, 2))])
    P1 = reconstruct(structure=st, Q=V1 @ V1.T)
    P2 = reconstruct(structure=st, Q=V2 @ V2.T)
    ent = {(a, b): P1.entry(a, b) for a in range(1, 4) for b in range(a, 4)}
    for a in range(1, 4):
        for b in range(a, 4):
            ent.setdefault((a + 1, b + 1), P2.entry(a, b))
    return PartialPolyMatrix(4, 1, SparsityGraph.from_cliques(4, [(1, 2, 3), (2, 3, 4)]), ent)


def interior_two_separator(seed=0, s=0.1):
    """Cliques {1,2,3}, {2,3,4} with PD clique Grams; completable, but independently
    solved clique Grams pick different antisymmetric parts on the (2,3) block."""
    rng = np.random.default_rng(seed)
    st = gram_structure(3, 1, 1, SparsityGraph.complete(3))
    V = rng.standard_normal((6, 6))
    G1 = V @ V.T
    K = np.zeros((4, 4))
    K[0, 3] = K[3, 0] = s
    K[1, 2] = K[2, 1] = -s
    O = G1[2:, 2:] + K
    X = rng.standard_normal((4, 2))
    G2 = np.block([[O, X], [X.T, X.T @ np.linalg.pinv(O) @ X + np.eye(2)]])
    P1 = reconstruct(structure=st, Q=G1)
    P2 = reconstruct(structure=st, Q=G2)
    ent = {(a, b): P1.entry(a, b) for a in range(1, 4) for b in range(a, 4)}
    for a in range(1, 4):
        for b in range(a, 4):
            ent.setdefault((a + 1, b + 1), P2.entry(a, b))
    return PartialPolyMatrix(4, 1, SparsityGraph.from_cliques(4, [(1, 2, 3), (2, 3, 4)]), ent)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
