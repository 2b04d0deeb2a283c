"""Decomposition and completion of sparse SOS polynomial matrices."""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .chordal import CliqueSet, SparsityGraph, chordal_cliques, is_chordal, maximal_cliques
from .conic import SQRT2, Cone, ConicProblem, SolveResult, SolverSettings, solve, svec_index
from .poly import Polynomial, PolyMatrix
from .psdchordal import (NotChordalError, PartialSymMatrix, SparseSymMatrix, complete_psd,
                         decompose_psd, lambda_min)
from .sosgram import (GramCertificate, GramStructure, _pair_table, entry_pairs, find_gram, gram_structure,
                      gram_terms, half_degree, reconstruct)


class SosInfeasibleError(Exception):
    """No certificate of the requested kind exists (numerically)."""


class NotSparseSosError(SosInfeasibleError):
    """The matrix admits no Gram matrix supported on the lifted pattern."""

    def __init__(self, message: str, margin: float):
        super().__init__(message)
        self.margin = margin


class CliqueNotSosError(SosInfeasibleError):
    def __init__(self, message: str, clique: int, nodes: tuple[int, ...]):
        super().__init__(message)
        self.clique = clique
        self.nodes = nodes


class InconsistentGramError(SosInfeasibleError):
    def __init__(self, message: str, pair: tuple[int, int] | None, margin: float):
        super().__init__(message)
        self.pair = pair
        self.margin = margin


@dataclass(frozen=True)
class SosPiece:
    clique: tuple[int, ...]
    P: PolyMatrix
    Q: np.ndarray


@dataclass
class SosDecomposition:
    source: PolyMatrix
    structure: GramStructure
    pieces: list[SosPiece]
    gram: np.ndarray | None = None
    added_edges: tuple[tuple[int, int], ...] = ()

    @property
    def r(self) -> int:
        return self.source.r

    def reassemble(self) -> PolyMatrix:
        total = PolyMatrix.from_upper(self.r, self.source.nvars, {})
        for piece in self.pieces:
            total = total + piece.P.inflate(piece.clique, self.r)
        return total

    @classmethod
    def from_pieces(cls, P: PolyMatrix, pieces: Sequence[tuple[Sequence[int], PolyMatrix, np.ndarray]],
                    d: int | None = None) -> "SosDecomposition":
        """Wrap externally supplied pieces (for verification)."""
        cliques = CliqueSet(tuple(tuple(c) for c, _, _ in pieces))
        structure = gram_structure(P.r, P.nvars, half_degree(P) if d is None else d,
                                   SparsityGraph.from_cliques(P.r, cliques), cliques)
        return cls(P, structure, [SosPiece(tuple(c), Pk, np.asarray(Qk, dtype=float)) for c, Pk, Qk in pieces])


def _piece_structure(size: int, n: int, d: int) -> GramStructure:
    return gram_structure(size, n, d, SparsityGraph.complete(size))


def decompose_sos(P: PolyMatrix, settings: SolverSettings | None = None) -> SosDecomposition:
    """Split ``P`` into SOS pieces on the maximal cliques of its pattern.

    1. find a Gram matrix supported on the lifted pattern;
    2. chordally decompose it into hyper-clique blocks ``Q_k``;
    3. map each block back to a polynomial matrix ``P_k``.

    Raises :class:`NotSparseSosError` when no sparse Gram exists, which does
    not rule out ``P`` being SOS with a dense Gram.
    """
    pattern = P.pattern
    ok, _ = is_chordal(pattern)
    added: tuple[tuple[int, int], ...] = ()
    if not ok:
        ext, _ = chordal_cliques(pattern)
        added = tuple(sorted(ext.edges - pattern.edges))
        warnings.warn(f"pattern is not chordal; extended with edges {list(added)}", stacklevel=2)
    ext_pattern, cliques = chordal_cliques(pattern)
    Pext = P.with_pattern(ext_pattern)
    structure = gram_structure(P.r, P.nvars, half_degree(P), ext_pattern, cliques)
    cert = find_gram(Pext, sparse=True, structure=structure, settings=settings)
    if not cert.feasible:
        raise NotSparseSosError(f"no Gram matrix on the lifted pattern (margin {cert.margin:.3e})", cert.margin)
    lifted = structure.lifted_pattern()
    blocks = decompose_psd(SparseSymMatrix(cert.Q, lifted), structure.lifted_cliques())
    pieces = []
    sub = {}
    for k, Qk in blocks:
        c = structure.cliques[k]
        st = sub.setdefault(len(c), _piece_structure(len(c), P.nvars, structure.d))
        pieces.append(SosPiece(tuple(c), reconstruct(structure=st, Q=Qk), Qk))
    return SosDecomposition(P, structure, pieces, cert.Q, added)


@dataclass
class DecompositionReport:
    ok: bool
    residual: float
    piece_residuals: list[float]
    lambda_min: list[float]


def verify_decomposition(P: PolyMatrix, dec: SosDecomposition, tol: float = 1e-6) -> DecompositionReport:
    """Recheck reassembly, per-piece Gram reconstruction and per-piece PSD-ness."""
    scale = max(1.0, P.max_abs_coeff())
    residual = dec.reassemble().max_coeff_diff(P)
    piece_res, lmins = [], []
    for piece in dec.pieces:
        st = _piece_structure(len(piece.clique), P.nvars, dec.structure.d)
        piece_res.append(reconstruct(structure=st, Q=piece.Q).max_coeff_diff(piece.P))
        lmins.append(lambda_min(piece.Q))
    psd_ok = all(lm >= -1e-7 * max(1.0, float(np.abs(pc.Q).max(initial=0.0)))
                 for lm, pc in zip(lmins, dec.pieces))
    ok = residual <= tol * scale and all(r <= tol * scale for r in piece_res) and psd_ok
    return DecompositionReport(bool(ok), residual, piece_res, lmins)


# -- completion -----------------------------------------------------------

class PartialPolyMatrix:
    """Symmetric polynomial matrix specified on ``pattern`` plus the diagonal."""

    def __init__(self, r: int, nvars: int, pattern: SparsityGraph, entries: Mapping[tuple[int, int], Polynomial]):
        if pattern.r != r:
            raise ValueError("pattern size does not match r")
        given: dict[tuple[int, int], Polynomial] = {}
        for (i, j), p in entries.items():
            a, b = min(i, j), max(i, j)
            if not pattern.in_pattern(a, b):
                raise ValueError(f"entry ({a},{b}) is outside the pattern")
            if not isinstance(p, Polynomial):
                p = Polynomial.constant(nvars, float(p))
            if p.nvars != nvars:
                raise ValueError(f"entry ({a},{b}) has the wrong number of variables")
            if (a, b) in given and given[(a, b)] != p:
                raise ValueError(f"conflicting values for entry ({a},{b})")
            given[(a, b)] = p
        zero = Polynomial.zero(nvars)
        for i in range(1, r + 1):
            if (i, i) not in given:
                raise ValueError(f"diagonal entry ({i},{i}) is unspecified")
        for i, j in pattern.edges:
            given.setdefault((i, j), zero)
        self.r = r
        self.nvars = nvars
        self.pattern = pattern
        self.entries = dict(sorted(given.items()))

    @classmethod
    def from_matrix(cls, P: PolyMatrix, pattern: SparsityGraph | None = None) -> "PartialPolyMatrix":
        pattern = P.pattern if pattern is None else pattern
        entries = {(i, j): P.entry(i, j) for i in range(1, P.r + 1) for j in range(i, P.r + 1)
                   if pattern.in_pattern(i, j)}
        return cls(P.r, P.nvars, pattern, entries)

    def entry(self, i: int, j: int) -> Polynomial | None:
        return self.entries.get((min(i, j), max(i, j)))

    @property
    def degree(self) -> int:
        return max((p.degree for p in self.entries.values()), default=-1)

    def max_abs_coeff(self) -> float:
        return max((p.max_abs_coeff() for p in self.entries.values()), default=0.0)

    def principal(self, nodes: Sequence[int]) -> PolyMatrix:
        upper = {}
        for a, i in enumerate(nodes):
            for j in nodes[a:]:
                p = self.entry(i, j)
                if p is None:
                    raise ValueError(f"entry ({i},{j}) inside {list(nodes)} is unspecified")
                upper[(a + 1, nodes.index(j) + 1)] = p
        return PolyMatrix.from_upper(len(nodes), self.nvars, upper, SparsityGraph.complete(len(nodes)))

    def filled(self, fill: Mapping[tuple[int, int], Polynomial]) -> PolyMatrix:
        """Full matrix with the given values in the unspecified positions."""
        upper = dict(self.entries)
        for (i, j), p in fill.items():
            key = (min(i, j), max(i, j))
            if key in self.entries:
                raise ValueError(f"entry {key} is already specified")
            upper[key] = p
        return PolyMatrix.from_upper(self.r, self.nvars, upper, SparsityGraph.complete(self.r))

    def __eq__(self, other):
        if not isinstance(other, PartialPolyMatrix):
            return NotImplemented
        return (self.r, self.nvars, self.pattern, self.entries) == (other.r, other.nvars, other.pattern,
                                                                     other.entries)

    def __repr__(self) -> str:
        return f"PartialPolyMatrix(r={self.r}, nvars={self.nvars}, pattern={sorted(self.pattern.edges)})"


@dataclass
class SosCompletion:
    F: PolyMatrix
    Qhat: np.ndarray
    structure: GramStructure
    clique_certificates: list[GramCertificate]
    margin: float
    solve: SolveResult | None = field(default=None, repr=False)


def _clique_cert(structure: GramStructure, k: int, Q: np.ndarray) -> GramCertificate:
    idx = np.asarray(structure.hyper_cliques[k]) - 1
    st = _piece_structure(len(structure.cliques[k]), structure.n, structure.d)
    return GramCertificate(st, Q[np.ix_(idx, idx)].copy(), sparse=False)


def lift_block(structure: GramStructure, k: int, Qk: np.ndarray) -> np.ndarray:
    """``E_k^T Q_k E_k`` for hyper-clique ``k``."""
    out = np.zeros((structure.l, structure.l))
    idx = np.asarray(structure.hyper_cliques[k]) - 1
    out[np.ix_(idx, idx)] = Qk
    return out


def check_consistency(certs: Sequence[GramCertificate], structure: GramStructure,
                      tol: float = 1e-7) -> tuple[bool, float]:
    """Compare clique Grams on every overlap of hyper-cliques; return (ok, largest discrepancy)."""
    if len(certs) != len(structure.hyper_cliques):
        raise ValueError("need one certificate per clique")
    worst = 0.0
    for (i, hi), (j, hj) in itertools.combinations(enumerate(structure.hyper_cliques), 2):
        common = sorted(set(hi) & set(hj))
        if not common:
            continue
        pi = [hi.index(g) for g in common]
        pj = [hj.index(g) for g in common]
        diff = certs[i].Q[np.ix_(pi, pi)] - certs[j].Q[np.ix_(pj, pj)]
        worst = max(worst, float(np.abs(diff).max()))
    return worst <= tol, worst


def pairwise_violations(certs: Sequence[GramCertificate], structure: GramStructure) -> dict[tuple[int, int], float]:
    out = {}
    for (i, hi), (j, hj) in itertools.combinations(enumerate(structure.hyper_cliques), 2):
        common = sorted(set(hi) & set(hj))
        if common:
            pi = [hi.index(g) for g in common]
            pj = [hj.index(g) for g in common]
            out[(i, j)] = float(np.abs(certs[i].Q[np.ix_(pi, pi)] - certs[j].Q[np.ix_(pj, pj)]).max())
    return out


def independent_clique_grams(P: PartialPolyMatrix, structure: GramStructure | None = None,
                             settings: SolverSettings | None = None) -> list[GramCertificate]:
    """Solve each clique's SOS condition on its own (no coupling between cliques)."""
    if structure is None:
        structure = _completion_structure(P)
    certs = []
    for k, c in enumerate(structure.cliques):
        Pk = P.principal(list(c))
        st = _piece_structure(len(c), P.nvars, structure.d)
        certs.append(find_gram(Pk, sparse=False, structure=st, settings=settings))
    return certs


def _completion_structure(P: PartialPolyMatrix) -> GramStructure:
    ok, peo = is_chordal(P.pattern)
    if not ok:
        raise NotChordalError("completion needs a chordal pattern")
    cliques = maximal_cliques(P.pattern, peo)
    return gram_structure(P.r, P.nvars, max(0, math.ceil(P.degree / 2)), P.pattern, cliques)


def _coupled_problem(structure: GramStructure, P: PartialPolyMatrix):
    """Clique Gram blocks ``S_k + t I`` with shared overlap entries, matching ``P`` on the pattern.

    Every lifted entry ``(p, q)`` has an owner: the first hyper-clique
    containing both indices.  Coefficient equations read the owner's copy;
    the other copies are tied to it by equality rows.
    """
    hcs = structure.hyper_cliques
    sizes = tuple(len(h) for h in hcs)
    cone = Cone(free=1, psd=sizes)
    offs = cone.psd_offsets()
    local = [{g - 1: a for a, g in enumerate(h)} for h in hcs]
    members = [set(h) for h in hcs]

    def owners(p, q):
        return [k for k in range(len(hcs)) if p + 1 in members[k] and q + 1 in members[k]]

    def col(k, p, q):
        return offs[k] + svec_index(sizes[k], local[k][p], local[k][q])

    rows, cols, vals, rhs = [], [], [], []
    eq = 0
    table = _pair_table(structure.basis)
    for i, j in entry_pairs(structure, sparse=True):
        poly = P.entry(i, j)
        for mono, pairs in table.items():
            for p, q, w in gram_terms(structure, i, j, pairs):
                k = owners(p, q)[0]
                rows.append(eq)
                cols.append(col(k, p, q))
                vals.append(w if p == q else w / SQRT2)
                if p == q:
                    rows.append(eq)
                    cols.append(0)
                    vals.append(w)
            rhs.append(poly.coeff(mono))
            eq += 1
    seen = set()
    for k, h in enumerate(hcs):
        for a_i, a in enumerate(h):
            for b in h[a_i:]:
                p, q = a - 1, b - 1
                if (p, q) in seen:
                    continue
                seen.add((p, q))
                own = owners(p, q)
                for k2 in own[1:]:
                    # margins cancel on the diagonal, so only the S parts are tied
                    rows += [eq, eq]
                    cols += [col(k2, p, q), col(own[0], p, q)]
                    vals += [1.0, -1.0]
                    rhs.append(0.0)
                    eq += 1
    c = np.zeros(cone.dim)
    c[0] = -1.0
    A = sp.csr_matrix((vals, (rows, cols)), shape=(eq, cone.dim))
    A.sum_duplicates()
    return ConicProblem(c, A, np.asarray(rhs), cone), owners, col


def complete_sos(P: PartialPolyMatrix, settings: SolverSettings | None = None) -> SosCompletion:
    """SOS completion of a partial polynomial matrix with chordal pattern.

    Checks each clique for SOS, then solves one coupled SDP for clique Grams
    that agree on every overlap, assembles the partial lifted Gram and fills
    it by maximum-determinant PSD completion.
    """
    structure = _completion_structure(P)
    tol = 1e-6 * max(1.0, P.max_abs_coeff())
    settings = settings or SolverSettings(eps_abs=1e-9, eps_rel=1e-9, max_iters=200000)
    independent = independent_clique_grams(P, structure, settings)
    for k, cert in enumerate(independent):
        if not cert.feasible:
            nodes = structure.cliques[k]
            raise CliqueNotSosError(f"clique {k + 1} {list(nodes)}: principal submatrix is not SOS", k, nodes)

    problem, owners, col = _coupled_problem(structure, P)
    res = solve(problem, settings)
    if res.primal is None or (res.primal[0] < -tol):
        viol = pairwise_violations(independent, structure)
        pair = max(viol, key=viol.get) if viol else None
        margin = res.primal[0] if res.primal is not None else -math.inf
        raise InconsistentGramError(
            f"no consistent clique Grams exist (margin {margin:.3e}); "
            f"largest independent discrepancy between cliques {pair}", pair, margin)
    z = res.primal
    t = float(z[0])
    shift = t if t > 0 else 0.0
    l = structure.l
    Qp = np.full((l, l), np.nan)
    for k, h in enumerate(structure.hyper_cliques):
        for a_i, a in enumerate(h):
            for b in h[a_i:]:
                p, q = a - 1, b - 1
                if not np.isnan(Qp[p, q]):
                    continue
                k0 = owners(p, q)[0]
                v = z[col(k0, p, q)]
                v = v if p == q else v / SQRT2
                if p == q:
                    v += shift
                Qp[p, q] = Qp[q, p] = v
    lifted = structure.lifted_pattern()
    Qhat = complete_psd(PartialSymMatrix(Qp, lifted), structure.lifted_cliques())
    Fhat = reconstruct(structure=structure, Q=Qhat)
    fill = {(i, j): Fhat.entry(i, j) for i in range(1, P.r + 1) for j in range(i + 1, P.r + 1)
            if P.entry(i, j) is None}
    F = P.filled(fill)
    certs = [_clique_cert(structure, k, Qhat) for k in range(len(structure.cliques))]
    return SosCompletion(F, Qhat, structure, certs, t, res)
