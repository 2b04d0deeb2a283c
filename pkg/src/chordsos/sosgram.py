"""Gram-matrix machinery for SOS polynomial matrices.

A symmetric ``r x r`` polynomial matrix of degree ``2d`` is SOS iff
``P(x) = (I_r kron v_d(x))^T Q (I_r kron v_d(x))`` for some PSD ``Q`` of
side ``l = r N``, ``N = len(v_d)``.  Gram index ``(j - 1) N + a`` (1-based
``j``, 0-based ``a``) refers to basis monomial ``a`` of matrix row ``j``.

Two layouts of the Gram variable are supported:

* dense: one PSD block of side ``l``;
* clique: one PSD block per hyper-clique, ``Q = sum_k E_k^T Q_k E_k``, which
  makes ``Q`` structurally zero outside the lifted pattern.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .chordal import CliqueSet, SparsityGraph, chordal_cliques, is_chordal, maximal_cliques
from .conic import (SQRT2, Cone, ConicProblem, SolveResult, SolverSettings, Status, solve,
                    svec_index, svec_len, unsvec)
from .poly import Monomial, Polynomial, PolyMatrix, monomial_basis
from .psdchordal import NotChordalError, NotPSDError, lambda_min


@dataclass(frozen=True)
class GramStructure:
    r: int
    n: int
    d: int
    pattern: SparsityGraph
    cliques: CliqueSet
    basis: tuple[Monomial, ...] = field(repr=False)
    hyper_cliques: tuple[tuple[int, ...], ...] = field(repr=False)

    @property
    def N(self) -> int:
        return len(self.basis)

    @property
    def l(self) -> int:
        return self.r * self.N

    def gram_index(self, node: int, a: int) -> int:
        """0-based Gram row of basis monomial ``a`` in matrix row ``node`` (1-based)."""
        return (node - 1) * self.N + a

    def lifted_pattern(self) -> SparsityGraph:
        return SparsityGraph.from_cliques(self.l, self.hyper_cliques)

    def lifted_cliques(self) -> CliqueSet:
        return CliqueSet(tuple(self.hyper_cliques))

    def lifted_index_matrix(self, k: int) -> np.ndarray:
        from .chordal import clique_index_matrix
        return clique_index_matrix(self.hyper_cliques[k], self.l)

    def multiplicity(self) -> np.ndarray:
        """How many hyper-cliques contain each Gram index."""
        m = np.zeros(self.l)
        for hc in self.hyper_cliques:
            m[np.asarray(hc) - 1] += 1
        return m


def gram_structure(r: int, n: int, d: int, pattern: SparsityGraph,
                   cliques: CliqueSet | None = None) -> GramStructure:
    if pattern.r != r:
        raise ValueError("pattern size does not match r")
    if cliques is None:
        ok, peo = is_chordal(pattern)
        if not ok:
            raise NotChordalError("pattern is not chordal; extend it first")
        cliques = maximal_cliques(pattern, peo)
    basis = tuple(monomial_basis(n, d))
    N = len(basis)
    hyper = tuple(tuple(a for j in c for a in range((j - 1) * N + 1, j * N + 1)) for c in cliques)
    return GramStructure(r, n, d, pattern, cliques, basis, hyper)


def half_degree(P: PolyMatrix) -> int:
    return max(0, math.ceil(P.degree / 2))


def structure_for(P: PolyMatrix, d: int | None = None) -> GramStructure:
    """Gram structure for ``P`` on its pattern, chordally extended if necessary."""
    pattern, cliques = chordal_cliques(P.pattern)
    return gram_structure(P.r, P.nvars, half_degree(P) if d is None else d, pattern, cliques)


# -- coefficient matching -------------------------------------------------

@dataclass(frozen=True)
class GramEquation:
    """``sum w * Q[p, q] = rhs`` for one monomial of one matrix entry (0-based ``p <= q``)."""

    i: int
    j: int
    monomial: Monomial
    terms: tuple[tuple[int, int, float], ...]
    rhs: float


@dataclass(frozen=True)
class CoefficientSystem:
    structure: GramStructure
    sparse: bool
    equations: tuple[GramEquation, ...]

    def residual(self, Q: np.ndarray) -> float:
        worst = 0.0
        for eq in self.equations:
            lhs = sum(w * Q[p, q] for p, q, w in eq.terms)
            worst = max(worst, abs(lhs - eq.rhs))
        return worst


def _pair_table(basis: Sequence[Monomial]) -> dict[Monomial, list[tuple[int, int]]]:
    table: dict[Monomial, list[tuple[int, int]]] = {}
    for a, ma in enumerate(basis):
        for b, mb in enumerate(basis):
            table.setdefault(ma * mb, []).append((a, b))
    return dict(sorted(table.items(), key=lambda t: t[0].sort_key()))


def entry_pairs(structure: GramStructure, sparse: bool) -> list[tuple[int, int]]:
    """1-based ``(i, j)``, ``i <= j``, whose coefficients are matched."""
    r = structure.r
    if sparse:
        return [(i, j) for i in range(1, r + 1) for j in range(i, r + 1) if structure.pattern.in_pattern(i, j)]
    return [(i, j) for i in range(1, r + 1) for j in range(i, r + 1)]


def gram_terms(structure: GramStructure, i: int, j: int, pairs: Sequence[tuple[int, int]]):
    """Gram entries (0-based, ``p <= q``) with weights whose sum is the coefficient of entry ``(i, j)``."""
    if i == j:
        acc: dict[tuple[int, int], float] = {}
        for a, b in pairs:
            p, q = structure.gram_index(i, a), structure.gram_index(i, b)
            key = (min(p, q), max(p, q))
            acc[key] = acc.get(key, 0.0) + 1.0
        return tuple((p, q, w) for (p, q), w in acc.items())
    return tuple((structure.gram_index(i, a), structure.gram_index(j, b), 1.0) for a, b in pairs)


def coefficient_equations(structure: GramStructure, P: PolyMatrix, sparse: bool = True) -> CoefficientSystem:
    """Linear equations on Gram entries expressing ``P = (I kron v)^T Q (I kron v)``.

    In sparse mode only entries on the pattern get equations; the blocks
    ``Q_ij`` off the pattern are structurally absent.
    """
    if P.r != structure.r or P.nvars != structure.n:
        raise ValueError("matrix does not match the Gram structure")
    if P.degree > 2 * structure.d:
        raise ValueError(f"matrix degree {P.degree} exceeds 2d = {2 * structure.d}")
    if sparse:
        for i in range(1, P.r + 1):
            for j in range(i + 1, P.r + 1):
                if not P.entry(i, j).is_zero() and not structure.pattern.has_edge(i, j):
                    raise ValueError(f"entry ({i},{j}) is outside the structure's pattern")
    table = _pair_table(structure.basis)
    eqs = []
    for i, j in entry_pairs(structure, sparse):
        p = P.entry(i, j)
        for mono, pairs in table.items():
            eqs.append(GramEquation(i, j, mono, gram_terms(structure, i, j, pairs), p.coeff(mono)))
    return CoefficientSystem(structure, sparse, tuple(eqs))


# -- Gram SDP assembly ----------------------------------------------------

class GramSDP:
    """Conic program over a Gram matrix in dense or clique layout.

    Variable vector: ``[extra columns..., margin, Gram blocks...]``.  With
    ``interior=True`` the column after the extras is a margin ``t`` and the Gram
    matrix is ``S + t D`` (``D = I`` dense, clique multiplicities otherwise)
    with ``S`` in the PSD cone; the objective then maximises ``t``.
    """

    def __init__(self, structure: GramStructure, pairs: Sequence[tuple[int, int]], layout: str,
                 rows: Sequence[tuple[int, int, Monomial]], rhs: np.ndarray,
                 extra_columns: Sequence[dict[int, float]] = (), extra_cost: Sequence[float] = (),
                 interior: bool = False):
        if layout not in ("dense", "clique"):
            raise ValueError("layout must be 'dense' or 'clique'")
        self.structure = structure
        self.layout = layout
        self.interior = interior
        self.rows = list(rows)

        self.n_extra = len(extra_columns)
        self.n_free = self.n_extra + (1 if interior else 0)
        if layout == "dense":
            sizes = (structure.l,)
        else:
            sizes = tuple(len(hc) for hc in structure.hyper_cliques)
        self.cone = Cone(free=self.n_free, psd=sizes)
        offs = self.cone.psd_offsets()
        # Gram entry (p, q), p <= q -> list of (column, coefficient)
        self._where: dict[tuple[int, int], list[tuple[int, float]]] = {}
        if layout == "dense":
            self._local = None
        else:
            self._local = [{g - 1: a for a, g in enumerate(hc)} for hc in structure.hyper_cliques]
            self._node_cliques = {}
            for k, c in enumerate(structure.cliques):
                for v in c:
                    self._node_cliques.setdefault(v, []).append(k)
        mult = structure.multiplicity() if layout == "clique" else np.ones(structure.l)
        table = _pair_table(structure.basis)
        pair_list = list(pairs)
        row_index = {key: k for k, key in enumerate(self.rows)}
        A_rows, A_cols, A_vals = [], [], []
        for i, j in pair_list:
            if layout == "clique":
                owners = [k for k in self._node_cliques.get(i, []) if j in structure.cliques[k]]
            for mono, bpairs in table.items():
                eq = row_index[(i, j, mono)]
                for p, q, w in gram_terms(structure, i, j, bpairs):
                    if layout == "dense":
                        col = offs[0] + svec_index(structure.l, p, q)
                        A_rows.append(eq)
                        A_cols.append(col)
                        A_vals.append(w if p == q else w / SQRT2)
                    else:
                        for k in owners:
                            loc = self._local[k]
                            col = offs[k] + svec_index(len(loc), loc[p], loc[q])
                            A_rows.append(eq)
                            A_cols.append(col)
                            A_vals.append(w if p == q else w / SQRT2)
                    if interior and p == q:
                        A_rows.append(eq)
                        A_cols.append(self.n_extra)
                        A_vals.append(w * mult[p])
        for col, colmap in enumerate(extra_columns):
            for eq, v in colmap.items():
                if v != 0.0:
                    A_rows.append(eq)
                    A_cols.append(col)
                    A_vals.append(v)
        A = sp.csr_matrix((A_vals, (A_rows, A_cols)), shape=(len(self.rows), self.cone.dim))
        A.sum_duplicates()
        c = np.zeros(self.cone.dim)
        c[:self.n_extra] = np.asarray(extra_cost, dtype=float)
        if interior:
            c[self.n_extra] = -1.0
        self.problem = ConicProblem(c, A, np.asarray(rhs, dtype=float), self.cone)

    @classmethod
    def for_matrix(cls, structure: GramStructure, P: PolyMatrix, layout: str, interior: bool = True,
                   sparse: bool | None = None):
        sparse_eqs = layout == "clique" if sparse is None else sparse
        system = coefficient_equations(structure, P, sparse=sparse_eqs)
        rows = [(e.i, e.j, e.monomial) for e in system.equations]
        rhs = np.array([e.rhs for e in system.equations])
        return cls(structure, entry_pairs(structure, sparse_eqs), layout, rows, rhs, interior=interior), system

    def solve(self, settings: SolverSettings | None = None) -> SolveResult:
        return solve(self.problem, settings)

    def polish(self, z: np.ndarray) -> np.ndarray:
        """Least-norm correction of ``z`` onto the coefficient equations (cone membership not kept)."""
        A, b = self.problem.A, self.problem.b
        dz = spla.lsqr(A, b - A @ z, atol=1e-15, btol=1e-15, iter_lim=10 * A.shape[1])[0]
        return z + dz

    def extra_values(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z[:self.n_extra])

    def margin(self, z: np.ndarray) -> float:
        return float(z[self.n_extra]) if self.interior else 0.0

    def blocks(self, z: np.ndarray, include_margin: bool = True) -> list[np.ndarray]:
        """PSD blocks (``S_k + t I`` when interior and ``include_margin``)."""
        t = self.margin(z) if include_margin else 0.0
        out = []
        for k, (off, n) in enumerate(zip(self.cone.psd_offsets(), self.cone.psd)):
            B = unsvec(z[off:off + svec_len(n)], n)
            if t:
                B = B + t * np.eye(n)
            out.append(B)
        return out

    def gram(self, z: np.ndarray, include_margin: bool = True) -> np.ndarray:
        blocks = self.blocks(z, include_margin)
        if self.layout == "dense":
            return blocks[0]
        Q = np.zeros((self.structure.l, self.structure.l))
        for hc, B in zip(self.structure.hyper_cliques, blocks):
            idx = np.asarray(hc) - 1
            Q[np.ix_(idx, idx)] += B
        return Q


# -- certificates ---------------------------------------------------------

@dataclass
class GramCertificate:
    """Gram matrix ``Q`` for a polynomial matrix, with solve diagnostics.

    ``feasible`` is False when the search proved (numerically) that no
    PSD Gram exists; ``Q`` is then only the solver's best iterate and
    ``solve`` holds the solver output as evidence.
    """

    structure: GramStructure
    Q: np.ndarray
    sparse: bool
    feasible: bool = True
    margin: float = math.nan
    blocks: list[np.ndarray] | None = None
    solve: SolveResult | None = None

    @property
    def lambda_min(self) -> float:
        return lambda_min(self.Q)


def reconstruct(cert: GramCertificate | None = None, *, structure: GramStructure | None = None,
                Q: np.ndarray | None = None, pattern: SparsityGraph | None = None) -> PolyMatrix:
    """Polynomial matrix ``(I kron v)^T Q (I kron v)``.

    Either a certificate or a ``structure``/``Q`` pair can be given.
    """
    if cert is not None:
        structure, Q = cert.structure, cert.Q
    assert structure is not None and Q is not None
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (structure.l, structure.l):
        raise ValueError(f"Gram has shape {Q.shape}, expected {(structure.l, structure.l)}")
    n, N, r = structure.n, structure.N, structure.r
    table = _pair_table(structure.basis)
    upper = {}
    for i in range(1, r + 1):
        for j in range(i, r + 1):
            block = Q[(i - 1) * N:i * N, (j - 1) * N:j * N]
            if i != j:
                block = 0.5 * (block + Q[(j - 1) * N:j * N, (i - 1) * N:i * N].T)
            terms = {}
            for mono, pairs in table.items():
                val = sum(block[a, b] for a, b in pairs)
                if val != 0.0:
                    terms[mono] = val
            upper[(i, j)] = Polynomial(n, terms)
    return PolyMatrix.from_upper(r, n, upper, pattern)


def gram_tolerance(P: PolyMatrix) -> float:
    return 1e-6 * max(1.0, P.max_abs_coeff())


def find_gram(P: PolyMatrix, sparse: bool = True, structure: GramStructure | None = None,
              settings: SolverSettings | None = None) -> GramCertificate:
    """Search for a PSD Gram matrix of ``P``, the most interior one.

    Maximises ``t`` subject to ``Q - t D`` PSD and coefficient matching.  In
    sparse mode ``Q`` is the sum of lifted hyper-clique blocks, so it is
    exactly zero outside the lifted pattern.  ``P`` is declared SOS when the
    optimal margin is nonnegative up to the coefficient tolerance; a
    slightly negative margin is then dropped from ``Q`` so that the returned
    matrix is PSD.
    """
    if structure is None:
        structure = structure_for(P)
    layout = "clique" if sparse else "dense"
    sdp, system = GramSDP.for_matrix(structure, P, layout, interior=True)
    settings = settings or SolverSettings(eps_abs=1e-9, eps_rel=1e-9, max_iters=200000)
    res = sdp.solve(settings)
    tol = gram_tolerance(P)
    if res.status in (Status.INFEASIBLE, Status.UNBOUNDED, Status.NUMERICAL_ERROR) or res.primal is None:
        if res.status == Status.NUMERICAL_ERROR:
            raise RuntimeError("conic solver reported a numerical error")
        return GramCertificate(structure, np.zeros((structure.l, structure.l)), sparse, False, -math.inf,
                               None, res)
    z = res.primal
    t = sdp.margin(z)
    feasible = t >= -tol
    keep = t > 0
    blocks = sdp.blocks(z, include_margin=keep)
    Q = sdp.gram(z, include_margin=keep)
    if feasible and system.residual(Q) > tol:
        # the solver stopped short of matching coefficients; keep a polished
        # iterate only if it is still PSD with exact coefficients
        zp = sdp.polish(z)
        tp = sdp.margin(zp)
        bp = sdp.blocks(zp, include_margin=tp > 0)
        Qp = sdp.gram(zp, include_margin=tp > 0)
        floor = -1e-9 * max(1.0, float(np.abs(Qp).max(initial=0.0)))
        if system.residual(Qp) <= tol and all(lambda_min(B) >= floor for B in bp):
            t, blocks, Q = tp, bp, Qp
        else:
            feasible = res.status == Status.OPTIMAL and system.residual(Q) <= 10 * tol
    return GramCertificate(structure, Q, sparse, bool(feasible), t, blocks, res)


def is_sos(P: PolyMatrix, settings: SolverSettings | None = None) -> bool:
    return find_gram(P, sparse=False, settings=settings).feasible


def sos_factor(cert: GramCertificate, rank_tol: float = 1e-8) -> list[list[Polynomial]]:
    """Rows of ``M(x)`` (``s x r``) with ``M^T M = P``; ``s`` is the numerical rank of ``Q``.

    Entry ``M[k][j]`` is a polynomial of degree at most ``d``.
    """
    Q = 0.5 * (cert.Q + cert.Q.T)
    w, U = np.linalg.eigh(Q)
    top = max(float(w[-1]) if w.size else 0.0, 0.0)
    if w.size and w[0] < -1e-7 * max(1.0, top):
        raise NotPSDError(f"Gram matrix is indefinite (lambda_min={w[0]:.3e})", float(w[0]))
    st = cert.structure
    keep = np.where(w > rank_tol * top)[0] if top > 0 else np.array([], dtype=int)
    rows = []
    for k in keep[::-1]:
        vec = math.sqrt(w[k]) * U[:, k]
        row = []
        for j in range(1, st.r + 1):
            coeffs = vec[(j - 1) * st.N:j * st.N]
            row.append(Polynomial(st.n, {m: c for m, c in zip(st.basis, coeffs)}))
        rows.append(row)
    return rows


def factor_product(M: Sequence[Sequence[Polynomial]], r: int, nvars: int) -> PolyMatrix:
    """``M^T M`` as a polynomial matrix."""
    upper = {}
    for i in range(r):
        for j in range(i, r):
            acc = Polynomial.zero(nvars)
            for row in M:
                acc = acc + row[i] * row[j]
            upper[(i + 1, j + 1)] = acc
    return PolyMatrix.from_upper(r, nvars, upper)
