"""Chordal decomposition and PSD completion of constant symmetric matrices."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .chordal import (CliqueSet, CliqueTree, SparsityGraph, clique_tree, is_chordal,
                      maximal_cliques)

log = logging.getLogger(__name__)


class NotChordalError(ValueError):
    pass


class NotPSDError(ValueError):
    """Raised when a matrix (or a clique block) is not PSD within tolerance."""

    def __init__(self, message: str, lambda_min: float, clique: int | None = None):
        super().__init__(message)
        self.lambda_min = lambda_min
        self.clique = clique


def psd_tol(M: np.ndarray, rel: float = 1e-8) -> float:
    return rel * max(1.0, float(np.linalg.norm(M, 2))) if M.size else rel


def lambda_min(M: np.ndarray) -> float:
    if M.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])


@dataclass(frozen=True)
class SparseSymMatrix:
    """Symmetric matrix whose entries vanish outside ``pattern`` (plus diagonal)."""

    values: np.ndarray
    pattern: SparsityGraph

    def __post_init__(self):
        X = np.asarray(self.values, dtype=float)
        r = self.pattern.r
        if X.shape != (r, r):
            raise ValueError(f"values have shape {X.shape}, pattern has {r} nodes")
        if not np.allclose(X, X.T, atol=1e-12, rtol=0):
            raise ValueError("values are not symmetric")
        mask = pattern_mask(self.pattern)
        if np.any(X[~mask] != 0.0):
            raise ValueError("nonzero entry outside the sparsity pattern")
        X = 0.5 * (X + X.T)
        X.setflags(write=False)
        object.__setattr__(self, "values", X)

    @property
    def r(self) -> int:
        return self.pattern.r


@dataclass(frozen=True)
class PartialSymMatrix:
    """Symmetric matrix specified on ``pattern`` plus diagonal; other entries unknown.

    ``values`` holds NaN at unspecified positions.
    """

    values: np.ndarray
    pattern: SparsityGraph

    def __post_init__(self):
        Z = np.array(self.values, dtype=float)
        r = self.pattern.r
        if Z.shape != (r, r):
            raise ValueError(f"values have shape {Z.shape}, pattern has {r} nodes")
        mask = pattern_mask(self.pattern)
        if np.any(np.isnan(Z[mask])):
            raise ValueError("pattern entries (including the diagonal) must be specified")
        if not np.allclose(np.where(mask, Z, 0.0), np.where(mask, Z, 0.0).T, atol=1e-12, rtol=0):
            raise ValueError("specified entries are not symmetric")
        Z[~mask] = np.nan
        Z.setflags(write=False)
        object.__setattr__(self, "values", Z)

    @property
    def r(self) -> int:
        return self.pattern.r

    @classmethod
    def from_matrix(cls, M: np.ndarray, pattern: SparsityGraph) -> "PartialSymMatrix":
        return cls(np.asarray(M, dtype=float), pattern)

    def specified(self) -> np.ndarray:
        return pattern_mask(self.pattern)


def pattern_mask(pattern: SparsityGraph) -> np.ndarray:
    r = pattern.r
    mask = np.eye(r, dtype=bool)
    for i, j in pattern.edges:
        mask[i - 1, j - 1] = mask[j - 1, i - 1] = True
    return mask


def project_pattern(M: np.ndarray, pattern: SparsityGraph) -> SparseSymMatrix:
    """Keep the entries on the pattern (plus diagonal) and zero the rest."""
    M = np.asarray(M, dtype=float)
    if M.shape != (pattern.r, pattern.r):
        raise ValueError(f"matrix shape {M.shape} does not match pattern with {pattern.r} nodes")
    return SparseSymMatrix(np.where(pattern_mask(pattern), 0.5 * (M + M.T), 0.0), pattern)


def _pivot_threshold(X: np.ndarray) -> float:
    return 1e-12 * max(1.0, float(np.abs(X).max(initial=0.0)))


def decompose_psd(X: SparseSymMatrix, cs: CliqueSet | None = None) -> list[tuple[int, np.ndarray]]:
    """Split a chordal-pattern PSD matrix into PSD clique blocks.

    Runs a zero-fill LDL^T factorisation along a perfect elimination
    ordering of the pattern.  Each rank-one term ``d_i l_i l_i^T`` is
    supported on a clique and is added to the lowest-index maximal clique
    containing that support.  Returns ``(k, X_k)`` for every clique ``k``
    (0-based) so that ``sum_k E_k^T X_k E_k == X``.
    """
    ok, peo = is_chordal(X.pattern)
    if not ok:
        raise NotChordalError("sparsity pattern is not chordal; extend it first")
    if cs is None:
        cs = maximal_cliques(X.pattern, peo)
    V = np.array(X.values, dtype=float)
    thr = _pivot_threshold(V)
    column_tol = 1e-6 * max(1.0, float(np.abs(V).max(initial=0.0)))
    clique_sets = [set(c) for c in cs]
    pieces = [np.zeros((len(c), len(c))) for c in cs]
    where = [{v: a for a, v in enumerate(c)} for c in cs]
    pos = peo.position()
    for v in peo.order:
        i = v - 1
        later = sorted((u for u in X.pattern.neighbors(v) if pos[u] > pos[v]), key=pos.__getitem__)
        support = [v] + later
        idx = np.asarray(support, dtype=int) - 1
        d = V[i, i]
        col = V[idx[1:], i]
        if d > thr:
            vec = np.concatenate(([d], col))
            block = np.outer(vec, vec) / d
        else:
            if d < -psd_tol(V) or (col.size and np.abs(col).max() > column_tol):
                raise NotPSDError(f"matrix is not PSD (pivot {d:.3e} at node {v})", lambda_min(V))
            continue
        k = next(k for k, s in enumerate(clique_sets) if set(support) <= s)
        loc = [where[k][u] for u in support]
        pieces[k][np.ix_(loc, loc)] += block
        V[np.ix_(idx, idx)] -= block
    return [(k, 0.5 * (P + P.T)) for k, P in enumerate(pieces)]


def reassemble(pieces: Sequence[tuple[int, np.ndarray]], cs: CliqueSet, r: int) -> np.ndarray:
    """``sum_k E_k^T X_k E_k``."""
    X = np.zeros((r, r))
    for k, Xk in pieces:
        idx = np.asarray(cs[k], dtype=int) - 1
        X[np.ix_(idx, idx)] += Xk
    return X


def verify_psd_decomposition(X: np.ndarray, pieces: Sequence[tuple[int, np.ndarray]], cs: CliqueSet,
                             rel_tol: float = 1e-8) -> dict:
    """Report reassembly residual and smallest piece eigenvalue."""
    X = np.asarray(X, dtype=float)
    residual = float(np.abs(reassemble(pieces, cs, X.shape[0]) - X).max(initial=0.0))
    lmins = [lambda_min(Xk) for _, Xk in pieces]
    scale = max(1.0, float(np.linalg.norm(X, 2)))
    ok = residual <= rel_tol * scale and all(l >= -psd_tol(Xk) for l, (_, Xk) in zip(lmins, pieces))
    return {"ok": ok, "residual": residual, "lambda_min": lmins}


def complete_psd(Z: PartialSymMatrix, cs: CliqueSet | None = None,
                 tree: CliqueTree | None = None) -> np.ndarray:
    """PSD completion of a partial matrix with chordal pattern.

    Cliques are merged along the clique tree (parents before children);
    each merge fills the block between the new clique's private nodes and
    everything already placed with the maximum-determinant choice
    ``W13 = W12 pinv(W22) W23`` through the separator.  If rounding on a
    degenerate instance leaves the result visibly indefinite, an SDP
    feasibility solve on the unspecified entries takes over.
    """
    ok, peo = is_chordal(Z.pattern)
    if not ok:
        raise NotChordalError("sparsity pattern is not chordal; extend it first")
    if cs is None:
        cs = maximal_cliques(Z.pattern, peo)
    if tree is None:
        tree = clique_tree(cs)
    mask = Z.specified()
    Zs = np.where(mask, Z.values, 0.0)
    for k, c in enumerate(cs):
        idx = np.asarray(c, dtype=int) - 1
        block = Zs[np.ix_(idx, idx)]
        lm = lambda_min(block)
        if lm < -psd_tol(block):
            raise NotPSDError(f"clique {k + 1} {list(c)} submatrix is not PSD (lambda_min={lm:.3e})", lm, k)
    W = Zs.copy()
    placed: list[int] = []
    for k in tree.order:
        clique = list(cs[k])
        placed_set = set(placed)
        sep = [v for v in clique if v in placed_set]
        new = [v for v in clique if v not in placed_set]
        rest = [v for v in placed if v not in set(sep)]
        if new and rest:
            n_idx = np.asarray(new) - 1
            r_idx = np.asarray(rest) - 1
            if sep:
                s_idx = np.asarray(sep) - 1
                fill = W[np.ix_(n_idx, s_idx)] @ np.linalg.pinv(W[np.ix_(s_idx, s_idx)], hermitian=True) \
                    @ W[np.ix_(s_idx, r_idx)]
            else:
                fill = np.zeros((len(new), len(rest)))
            # keep entries the user specified (there are none between new and rest in a valid tree)
            sub_mask = mask[np.ix_(n_idx, r_idx)]
            fill = np.where(sub_mask, W[np.ix_(n_idx, r_idx)], fill)
            W[np.ix_(n_idx, r_idx)] = fill
            W[np.ix_(r_idx, n_idx)] = fill.T
        placed.extend(new)
    W = np.where(mask, Zs, 0.5 * (W + W.T))
    lm = lambda_min(W)
    if lm < -1e-7 * max(1.0, float(np.linalg.norm(Zs, 2))):
        log.info("max-determinant completion has lambda_min=%.3e; falling back to SDP", lm)
        W = _complete_psd_sdp(Zs, mask)
    return W


def _complete_psd_sdp(Zs: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Most-interior completion: maximise t with X - tI PSD and X fixed on the mask."""
    from .conic import ConicProblem, Cone, SolverSettings, solve, svec_index, unsvec

    r = Zs.shape[0]
    nv = r * (r + 1) // 2
    rows, cols, vals, b = [], [], [], []
    eq = 0
    for j in range(r):
        for i in range(j, r):
            if mask[i, j]:
                # variable layout: [t, svec(X - tI)]
                cols.append(1 + svec_index(r, i, j))
                vals.append(1.0 if i == j else 1.0 / np.sqrt(2.0))
                rows.append(eq)
                if i == j:
                    rows.append(eq)
                    cols.append(0)
                    vals.append(1.0)
                b.append(Zs[i, j])
                eq += 1
    c = np.zeros(1 + nv)
    c[0] = -1.0
    import scipy.sparse as sp
    A = sp.csr_matrix((vals, (rows, cols)), shape=(eq, 1 + nv))
    res = solve(ConicProblem(c, A, np.asarray(b), Cone(free=1, psd=(r,))), SolverSettings(eps_abs=1e-9, eps_rel=1e-9))
    if res.primal is None:
        raise NotPSDError("SDP completion failed", float("nan"))
    t = res.primal[0]
    X = unsvec(res.primal[1:], r) + t * np.eye(r)
    return np.where(mask, Zs, X)
