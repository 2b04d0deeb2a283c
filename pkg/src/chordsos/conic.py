"""Standard-form conic programs and a deterministic operator-splitting solver.

Problems have the form::

    minimize    c^T z
    subject to  A z = b,   z in K

where ``K`` is an ordered product of a free block, a nonnegative orthant and
PSD blocks.  A PSD block of side ``n`` occupies ``n(n+1)/2`` coordinates
holding the lower triangle column by column, with off-diagonal entries
multiplied by ``sqrt(2)`` so that ``svec(X) . svec(Y) = trace(X Y)``.

The dual is ``maximize b^T nu  s.t.  c - A^T nu = s,  s in K*``.
"""

from __future__ import annotations

import enum
import functools
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)


def svec_len(n: int) -> int:
    return n * (n + 1) // 2


def svec_index(n: int, i: int, j: int) -> int:
    """Position of entry ``(i, j)`` (0-based, any order) inside ``svec`` of an ``n x n`` block."""
    if i < j:
        i, j = j, i
    return j * n - j * (j - 1) // 2 + (i - j)


@functools.lru_cache(maxsize=None)
def _col_major(n: int) -> tuple[np.ndarray, np.ndarray]:
    # column-major lower triangle, matching svec_index
    rows, cols = [], []
    for j in range(n):
        for i in range(j, n):
            rows.append(i)
            cols.append(j)
    return np.asarray(rows, dtype=int), np.asarray(cols, dtype=int)


def svec(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    rows, cols = _col_major(M.shape[0])
    scale = np.where(rows == cols, 1.0, SQRT2)
    return M[rows, cols] * scale


def unsvec(v: np.ndarray, n: int) -> np.ndarray:
    rows, cols = _col_major(n)
    scale = np.where(rows == cols, 1.0, 1.0 / SQRT2)
    M = np.zeros((n, n))
    M[rows, cols] = np.asarray(v, dtype=float) * scale
    M[cols, rows] = M[rows, cols]
    return M


@dataclass(frozen=True)
class Cone:
    free: int = 0
    nonneg: int = 0
    psd: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "psd", tuple(int(n) for n in self.psd))
        if self.free < 0 or self.nonneg < 0 or any(n < 1 for n in self.psd):
            raise ValueError("invalid cone dimensions")

    @property
    def dim(self) -> int:
        return self.free + self.nonneg + sum(svec_len(n) for n in self.psd)

    def psd_offsets(self) -> list[int]:
        off = self.free + self.nonneg
        out = []
        for n in self.psd:
            out.append(off)
            off += svec_len(n)
        return out


@dataclass(frozen=True)
class ConicProblem:
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    cone: Cone

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        A = sp.csr_matrix(self.A, dtype=float)
        if A.shape[1] == 0 and self.cone.dim == 0:
            A = sp.csr_matrix((b.size, 0))
        if c.size != self.cone.dim:
            raise ValueError(f"objective has length {c.size}, cone dimension is {self.cone.dim}")
        if A.shape != (b.size, self.cone.dim):
            raise ValueError(f"A has shape {A.shape}, expected {(b.size, self.cone.dim)}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "A", A)

    @property
    def n_constraints(self) -> int:
        return self.b.size

    @property
    def n_variables(self) -> int:
        return self.cone.dim

    def psd_block(self, z: np.ndarray, k: int) -> np.ndarray:
        off = self.cone.psd_offsets()[k]
        n = self.cone.psd[k]
        return unsvec(z[off:off + svec_len(n)], n)


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITERS = "max_iters"
    NUMERICAL_ERROR = "numerical_error"


@dataclass(frozen=True)
class SolverSettings:
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    max_iters: int = 20000
    rho: float = 1.0
    adaptive_rho: bool = True
    alpha: float = 1.6
    eps_infeas: float = 1e-7
    check_every: int = 10
    deterministic: bool = True

    def __post_init__(self):
        if self.eps_abs <= 0 or self.eps_rel <= 0 or self.eps_infeas <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1 or self.rho <= 0 or not 0 < self.alpha < 2:
            raise ValueError("invalid iteration settings")
        if not self.deterministic:
            raise ValueError("only deterministic mode is supported")


@dataclass
class SolveResult:
    status: Status
    primal: np.ndarray | None
    dual: np.ndarray | None
    slack: np.ndarray | None
    objective: float
    dual_objective: float
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    solve_time: float
    certificate: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == Status.OPTIMAL


def psd_project(block: np.ndarray) -> np.ndarray:
    """Nearest PSD matrix in Frobenius norm (eigenvalue clipping)."""
    M = np.asarray(block, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expected a square matrix")
    if np.abs(M - M.T).max(initial=0.0) > 1e-10 * max(1.0, np.abs(M).max(initial=0.0)):
        raise ValueError("matrix is not symmetric")
    M = 0.5 * (M + M.T)
    w, U = np.linalg.eigh(M)
    keep = w > 0
    Up = U[:, keep]
    out = (Up * w[keep]) @ Up.T
    return 0.5 * (out + out.T)


class _ConeProjector:
    """Projection onto K (and K*), vectorised over PSD blocks of equal size."""

    def __init__(self, cone: Cone):
        self.cone = cone
        self.nf = cone.free
        self.nn = cone.nonneg
        groups: dict[int, list[int]] = {}
        for off, n in zip(cone.psd_offsets(), cone.psd):
            groups.setdefault(n, []).append(off)
        self.groups = []
        for n, offs in sorted(groups.items()):
            rows, cols = _col_major(n)
            m = svec_len(n)
            index = (np.asarray(offs)[:, None] + np.arange(m)[None, :])
            scale = np.where(rows == cols, 1.0, 1.0 / SQRT2)
            self.groups.append((n, index, rows, cols, scale))

    def _psd_part(self, v: np.ndarray, out: np.ndarray):
        for n, index, rows, cols, scale in self.groups:
            V = v[index] * scale
            if n == 1:
                out[index] = np.maximum(V, 0.0)
                continue
            M = np.zeros((index.shape[0], n, n))
            M[:, rows, cols] = V
            M[:, cols, rows] = V
            w, U = np.linalg.eigh(M)
            np.maximum(w, 0.0, out=w)
            P = (U * w[:, None, :]) @ np.swapaxes(U, 1, 2)
            out[index] = P[:, rows, cols] / scale

    def project(self, v: np.ndarray) -> np.ndarray:
        out = np.empty_like(v)
        out[:self.nf] = v[:self.nf]
        out[self.nf:self.nf + self.nn] = np.maximum(v[self.nf:self.nf + self.nn], 0.0)
        self._psd_part(v, out)
        return out

    def project_dual(self, v: np.ndarray) -> np.ndarray:
        out = self.project(v)
        out[:self.nf] = 0.0
        return out


class _AffineProjector:
    """Euclidean projection onto ``{x : A x = b}`` with one cached factorisation."""

    def __init__(self, A: sp.csr_matrix, b: np.ndarray):
        self.A = A
        self.AT = A.T.tocsr()
        self.b = b
        m = A.shape[0]
        self.M = (A @ self.AT).tocsc()
        self.lu = None
        self.reg = 0.0
        if m:
            diag = np.abs(self.M.diagonal())
            scale = float(diag.max()) if diag.size else 1.0
            try:
                self.lu = spla.splu(self.M, permc_spec="MMD_AT_PLUS_A")
                if not np.all(np.isfinite(self.lu.solve(np.ones(m)))):
                    raise RuntimeError("singular")
            except RuntimeError:
                # redundant rows: regularise and refine against the true system
                self.reg = 1e-10 * max(scale, 1.0)
                self.lu = spla.splu((self.M + self.reg * sp.eye(m)).tocsc(), permc_spec="MMD_AT_PLUS_A")

    def solve_normal(self, rhs: np.ndarray) -> np.ndarray:
        w = self.lu.solve(rhs)
        if self.reg:
            for _ in range(3):
                w = w + self.lu.solve(rhs - self.M @ w)
        return w

    def project(self, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return the projection and the multiplier ``w`` with ``x = v - A^T w``."""
        if self.lu is None:
            return v.copy(), np.zeros(0)
        w = self.solve_normal(self.A @ v - self.b)
        return v - self.AT @ w, w


def _cone_distance(proj: _ConeProjector, v: np.ndarray, dual: bool) -> float:
    p = proj.project_dual(v) if dual else proj.project(v)
    return float(np.linalg.norm(v - p))


def solve(p: ConicProblem, s: SolverSettings | None = None) -> SolveResult:
    """Solve ``p`` by ADMM on the splitting ``x in {Ax = b}``, ``z in K``, ``x = z``.

    Each iteration projects onto the affine set (cached factorisation of
    ``A A^T``) and onto the cone (batched eigendecompositions), followed by a
    dual update with over-relaxation.  The penalty is rebalanced from the
    residual ratio.  Primal infeasibility and unboundedness are detected from
    the diverging iterate differences.
    """
    s = s or SolverSettings()
    t0 = time.perf_counter()
    c, A, b = p.c, p.A, p.b
    nz = p.n_variables
    proj = _ConeProjector(p.cone)
    aff = _AffineProjector(A, b)
    norm_b = float(np.linalg.norm(b))
    norm_c = float(np.linalg.norm(c))

    rho = s.rho
    alpha = s.alpha
    z = np.zeros(nz)
    y = np.zeros(nz)
    w = np.zeros(p.n_constraints)
    prev = None
    status = Status.MAX_ITERS
    certificate = None
    it = 0
    rp = rd = gap = math.inf
    pobj = dobj = math.nan
    last_rho_change = 0
    rho_wait = 50

    for it in range(1, s.max_iters + 1):
        v = z - (y + c) / rho
        x, w = aff.project(v)
        xh = alpha * x + (1.0 - alpha) * z
        z = proj.project(xh + y / rho)
        y = y + rho * (xh - z)

        if it % s.check_every and it != s.max_iters:
            continue

        nu = -rho * w
        slack = -y
        Az = A @ z
        rp_abs = float(np.linalg.norm(Az - b))
        ATnu = A.T @ nu
        rd_abs = float(np.linalg.norm(c - ATnu - slack))
        pobj = float(c @ z)
        dobj = float(b @ nu)
        gap_abs = abs(pobj - dobj)
        rp = rp_abs / (1.0 + norm_b)
        rd = rd_abs / (1.0 + norm_c)
        gap = gap_abs / (1.0 + abs(pobj) + abs(dobj))
        if not all(map(math.isfinite, (rp_abs, rd_abs, pobj, dobj))):
            status = Status.NUMERICAL_ERROR
            break
        if (rp_abs <= s.eps_abs + s.eps_rel * max(norm_b, float(np.linalg.norm(Az)))
                and rd_abs <= s.eps_abs + s.eps_rel * max(norm_c, float(np.linalg.norm(ATnu)))
                and gap_abs <= s.eps_abs + s.eps_rel * (abs(pobj) + abs(dobj))):
            status = Status.OPTIMAL
            break

        if prev is not None and prev[3] == rho:
            dnu = nu - prev[0]
            dz = z - prev[1]
            # primal infeasibility: A^T y in K*, b^T y < 0
            cert = -dnu
            bc = float(b @ cert)
            if bc < 0:
                q = (A.T @ cert) / -bc
                if _cone_distance(proj, q, dual=True) <= s.eps_infeas * max(1.0, float(np.linalg.norm(q))) \
                        and float(np.linalg.norm(cert)) / -bc < 1.0 / s.eps_infeas:
                    status = Status.INFEASIBLE
                    certificate = cert / -bc
                    break
            # unboundedness: A d = 0, d in K, c^T d < 0
            cd = float(c @ dz)
            if cd < 0:
                d = dz / -cd
                if float(np.linalg.norm(A @ d)) <= s.eps_infeas * max(1.0, float(np.linalg.norm(d))) \
                        and _cone_distance(proj, d, dual=False) <= s.eps_infeas * max(1.0, float(np.linalg.norm(d))):
                    status = Status.UNBOUNDED
                    certificate = d
                    break
        prev = (nu, z, y, rho)

        # back off geometrically so rho settles instead of oscillating
        if s.adaptive_rho and it - last_rho_change >= rho_wait:
            ratio = math.sqrt(max(rp, 1e-300) / max(rd, 1e-300))
            if ratio > 5.0 or ratio < 0.2:
                rho = float(np.clip(rho * ratio, 1e-6, 1e6))
                last_rho_change = it
                rho_wait *= 2

    elapsed = time.perf_counter() - t0
    nu = -rho * w
    info = {"rho": rho, "iterations": it}
    if status in (Status.INFEASIBLE, Status.UNBOUNDED):
        return SolveResult(status, None, None, None, math.inf if status == Status.INFEASIBLE else -math.inf,
                           math.nan, rp, rd, gap, it, elapsed, certificate, info)
    return SolveResult(status, z, nu, -y, pobj, dobj, rp, rd, gap, it, elapsed, None, info)


def split_free(p: ConicProblem) -> ConicProblem:
    """Rewrite free variables as differences of nonnegative ones."""
    nf = p.cone.free
    if nf == 0:
        return p
    Af = p.A[:, :nf]
    A = sp.hstack([Af, -Af, p.A[:, nf:]]).tocsr()
    c = np.concatenate([p.c[:nf], -p.c[:nf], p.c[nf:]])
    return ConicProblem(c, A, p.b, Cone(0, 2 * nf + p.cone.nonneg, p.cone.psd))


def merge_split(p: ConicProblem, z: np.ndarray) -> np.ndarray:
    """Map a solution of ``split_free(p)`` back to the variables of ``p``."""
    nf = p.cone.free
    if nf == 0:
        return z
    return np.concatenate([z[:nf] - z[nf:2 * nf], z[2 * nf:]])


def block_matrix_rows(cone: Cone, entries: Sequence[tuple[int, int, int, float]]):
    """Helper for callers assembling A: map ``(block, i, j, coeff on X_ij)`` to svec coefficients.

    ``coeff`` multiplies the matrix entry ``X_ij`` itself; both triangles of a
    symmetric matrix need separate mention to count twice.
    """
    offs = cone.psd_offsets()
    out = []
    for k, i, j, a in entries:
        n = cone.psd[k]
        out.append((offs[k] + svec_index(n, i, j), a if i == j else a / SQRT2))
    return out
