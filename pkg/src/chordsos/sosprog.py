"""Matrix-valued SOS programs and the benchmark instances.

A program minimises ``w^T u`` subject to ``P0(x) - sum_i u_i P_i(x)`` being
SOS.  The dense formulation uses one Gram matrix of side ``rN``; the
decomposed formulation uses one Gram block per maximal clique of the
(chordal) pattern, which restricts the certificate to the sparse cone.
"""

from __future__ import annotations

import itertools
import math
import statistics
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .chordal import SparsityGraph, chordal_cliques
from .conic import SolveResult, SolverSettings, Status
from .poly import PolyMatrix, variables
from .sosgram import (GramCertificate, GramSDP, GramStructure, coefficient_equations, entry_pairs,
                      gram_structure, gram_tolerance)

FORMULATIONS = ("dense", "decomposed")


@dataclass(frozen=True)
class SosProgram:
    """``min w^T u  s.t.  P[0] - sum_i u_i P[i + 1]`` SOS."""

    w: tuple[float, ...]
    P: tuple[PolyMatrix, ...]

    def __post_init__(self):
        w = tuple(float(v) for v in self.w)
        P = tuple(self.P)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "P", P)
        if not P:
            raise ValueError("program needs at least P0")
        if len(P) != len(w) + 1:
            raise ValueError(f"{len(w)} weights but {len(P) - 1} decision matrices")
        r, n = P[0].r, P[0].nvars
        for k, M in enumerate(P):
            if M.r != r or M.nvars != n:
                raise ValueError(f"P{k} has a different dimension or number of variables")

    @property
    def h(self) -> int:
        return len(self.w)

    @property
    def r(self) -> int:
        return self.P[0].r

    @property
    def nvars(self) -> int:
        return self.P[0].nvars

    @property
    def pattern(self) -> SparsityGraph:
        g = self.P[0].pattern
        for M in self.P[1:]:
            g = g.union(M.pattern)
        return g

    @property
    def d(self) -> int:
        deg = max(M.degree for M in self.P)
        return max(0, math.ceil(deg / 2))

    def constraint_matrix(self, u: Sequence[float]) -> PolyMatrix:
        """``P0 - sum_i u_i P_i`` on the program's pattern."""
        M = self.P[0]
        for ui, Pi in zip(u, self.P[1:]):
            M = M - Pi * ui
        return M.with_pattern(self.pattern)


@dataclass
class SosProgramResult:
    formulation: str
    status: Status
    u: np.ndarray | None
    objective: float
    certificate: GramCertificate | None
    solve: SolveResult | None = field(default=None, repr=False)
    build_time: float = 0.0
    solve_time: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == Status.OPTIMAL and self.u is not None


def _build(prog: SosProgram, formulation: str) -> tuple[GramSDP, GramStructure]:
    if formulation not in FORMULATIONS:
        raise ValueError(f"unknown formulation {formulation!r}")
    sparse = formulation == "decomposed"
    if sparse:
        pattern, cliques = chordal_cliques(prog.pattern)
    else:
        pattern = SparsityGraph.complete(prog.r)
        cliques = None
    structure = gram_structure(prog.r, prog.nvars, prog.d, pattern, cliques)
    P0 = prog.P[0].with_pattern(pattern) if sparse else prog.P[0]
    system = coefficient_equations(structure, P0, sparse=sparse)
    rows = [(e.i, e.j, e.monomial) for e in system.equations]
    rhs = np.array([e.rhs for e in system.equations])
    # a decision u_i enters each equation as +u_i * coeff(P_i), moved to the left-hand side
    columns = []
    for Pi in prog.P[1:]:
        columns.append({k: Pi.entry(i, j).coeff(m) for k, (i, j, m) in enumerate(rows)
                        if Pi.entry(i, j).coeff(m) != 0.0})
    sdp = GramSDP(structure, entry_pairs(structure, sparse), "clique" if sparse else "dense", rows, rhs,
                  columns, prog.w)
    return sdp, structure


def build_sdp(prog: SosProgram, formulation: str) -> GramSDP:
    return _build(prog, formulation)[0]


def _default_settings() -> SolverSettings:
    return SolverSettings(eps_abs=1e-8, eps_rel=1e-8, max_iters=50000)


def solve_program(prog: SosProgram, formulation: str, settings: SolverSettings | None = None,
                  repeats: int = 1) -> SosProgramResult:
    """Solve in either formulation; ``repeats > 1`` reports the median solve time."""
    t0 = time.perf_counter()
    sdp, structure = _build(prog, formulation)
    build_time = time.perf_counter() - t0
    settings = settings or _default_settings()
    times = []
    res = None
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        res = sdp.solve(settings)
        times.append(time.perf_counter() - t0)
    solve_time = statistics.median(times)
    sparse = formulation == "decomposed"
    if res.status != Status.OPTIMAL or res.primal is None:
        return SosProgramResult(formulation, res.status, None, math.nan, None, res, build_time, solve_time)
    z = res.primal
    u = sdp.extra_values(z).copy()
    blocks = sdp.blocks(z)
    # zero-pattern-consistent certificate of the constraint matrix
    cert = GramCertificate(structure, sdp.gram(z), sparse, True, 0.0, blocks, res)
    objective = float(np.dot(prog.w, u))
    return SosProgramResult(formulation, res.status, u, objective, cert, res, build_time, solve_time)


def solve_dense(prog: SosProgram, settings: SolverSettings | None = None, repeats: int = 1) -> SosProgramResult:
    return solve_program(prog, "dense", settings, repeats)


def solve_decomposed(prog: SosProgram, settings: SolverSettings | None = None,
                     repeats: int = 1) -> SosProgramResult:
    return solve_program(prog, "decomposed", settings, repeats)


def verify_result(prog: SosProgram, result: SosProgramResult, tol: float | None = None) -> dict:
    """Recheck a returned certificate against ``P0 - sum u_i P_i``.

    Reports the coefficient residual, the smallest Gram eigenvalue and, for
    the decomposed formulation, whether the Gram is supported on the lifted
    pattern.
    """
    from .sosgram import reconstruct
    from .psdchordal import lambda_min, pattern_mask

    if not result.ok:
        return {"ok": False, "residual": math.inf, "lambda_min": math.nan, "supported": False}
    M = prog.constraint_matrix(result.u)
    cert = result.certificate
    R = reconstruct(cert)
    residual = R.max_coeff_diff(M)
    lm = lambda_min(cert.Q)
    supported = True
    if cert.sparse:
        mask = pattern_mask(cert.structure.lifted_pattern())
        supported = bool(np.all(cert.Q[~mask] == 0.0))
    tol = gram_tolerance(M) if tol is None else tol
    scale = max(1.0, float(np.abs(cert.Q).max(initial=0.0)))
    ok = residual <= tol and lm >= -1e-6 * scale and supported
    return {"ok": bool(ok), "residual": residual, "lambda_min": lm, "supported": supported}


# -- instances --------------------------------------------------------------

def eig_bound_program(P: PolyMatrix) -> SosProgram:
    """``min gamma  s.t.  P + gamma I`` SOS, written with ``P1 = -I``."""
    I = PolyMatrix.identity(P.r, P.nvars, P.pattern)
    return SosProgram((1.0,), (P, -I))


def eig_bound(P: PolyMatrix, formulation: str = "dense", settings: SolverSettings | None = None) -> float:
    res = solve_program(eig_bound_program(P), formulation, settings)
    if not res.ok:
        raise RuntimeError(f"eigenvalue-bound program ended with status {res.status.value}")
    return float(res.u[0])


def arrow_benchmark(r: int) -> PolyMatrix:
    """Arrow-pattern benchmark in two variables; maximal cliques ``{1, k}``."""
    if r < 2:
        raise ValueError("arrow benchmark needs r >= 2")
    x1, x2 = variables(2)
    p3 = x1 ** 2 + x2 ** 2 + 1
    p2 = x1 + x2
    upper = {(1, 1): p3 * float(r)}
    for k in range(2, r + 1):
        upper[(1, k)] = p2
        upper[(k, k)] = p3
    return PolyMatrix.from_upper(r, 2, upper, SparsityGraph.star(r, 1))


def conservatism_example() -> PolyMatrix:
    """3x3 two-variable matrix with zero (2,3) entry where the sparse cone is strictly smaller."""
    x1, x2 = variables(2)
    p1 = 0.8 * x1 ** 2 + 0.9 * x1 * x2 + 0.3 * x2 ** 2 + 1.4 * x1 + 0.9 * x2 + 0.8
    p2 = 0.3 * x1 + 0.91 * x2 + 0.2
    p3 = 0.1 * x1 + x2 + 0.8
    p4 = 0.4 * x1 ** 2 + 1.3 * x1 * x2 + 1.1 * x2 ** 2 + 1.4 * x1 + 2.3 * x2 + 1.3
    p5 = 0.7 * x1 ** 2 + 1.3 * x1 * x2 + 0.9 * x2 ** 2 + x1 + 1.1 * x2 + 0.4
    upper = {(1, 1): p1, (1, 2): p2, (1, 3): p3, (2, 2): p4, (3, 3): p5}
    return PolyMatrix.from_upper(3, 2, upper, SparsityGraph(3, [(1, 2), (1, 3)]))


def evaluation_grid(nvars: int, lo: float = -2.0, hi: float = 2.0, points: int = 21) -> np.ndarray:
    axis = np.linspace(lo, hi, points)
    return np.array(list(itertools.product(axis, repeat=nvars))) if nvars else np.zeros((1, 0))


def bound_soundness(P: PolyMatrix, gamma: float, grid: np.ndarray | None = None) -> float:
    """Smallest eigenvalue of ``P(x) + gamma I`` over the grid (nonnegative if the bound is sound)."""
    if grid is None:
        grid = evaluation_grid(P.nvars)
    worst = math.inf
    I = np.eye(P.r)
    for x in grid:
        worst = min(worst, float(np.linalg.eigvalsh(P.eval(x) + gamma * I)[0]))
    return worst


def arrow_table(rs: Sequence[int], settings: SolverSettings | None = None, repeats: int = 3) -> list[dict]:
    """Rows ``(r, gamma_dense, gamma_dec, t_dense, t_dec)`` for the arrow family."""
    rows = []
    for r in rs:
        prog = eig_bound_program(arrow_benchmark(r))
        dense = solve_dense(prog, settings, repeats)
        dec = solve_decomposed(prog, settings, repeats)
        rows.append({
            "r": r,
            "gamma_dense": dense.objective,
            "gamma_dec": dec.objective,
            "t_dense": dense.solve_time,
            "t_dec": dec.solve_time,
            "status_dense": dense.status.value,
            "status_dec": dec.status.value,
        })
    return rows
