"""Sparse multivariate polynomials and symmetric polynomial matrices.

Monomials are dense exponent tuples ``(e_1, ..., e_n)``.  All iteration is in
graded lexicographic order with ``x1 > x2 > ... > xn``, so that
``monomial_basis(2, 2)`` is ``[1, x1, x2, x1^2, x1*x2, x2^2]``.
"""

from __future__ import annotations

import itertools
import math
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .chordal import SparsityGraph


class Monomial(tuple):
    """Exponent vector of a monomial.  ``Monomial((2, 1))`` is ``x1^2 x2``."""

    __slots__ = ()

    def __new__(cls, exponents: Iterable[int]):
        exps = tuple(int(e) for e in exponents)
        if any(e < 0 for e in exps):
            raise ValueError(f"negative exponent in {exps}")
        return super().__new__(cls, exps)

    @property
    def nvars(self) -> int:
        return len(self)

    @property
    def degree(self) -> int:
        return sum(self)

    def __mul__(self, other):
        if not isinstance(other, Monomial):
            return NotImplemented
        if len(self) != len(other):
            raise ValueError("monomials live in different numbers of variables")
        return Monomial(a + b for a, b in zip(self, other))

    def sort_key(self):
        return (self.degree, tuple(-e for e in self))

    def __repr__(self) -> str:
        return f"Monomial({tuple(self)})"

    def __str__(self) -> str:
        parts = []
        for i, e in enumerate(self, start=1):
            if e == 1:
                parts.append(f"x{i}")
            elif e > 1:
                parts.append(f"x{i}^{e}")
        return "*".join(parts) or "1"

    @classmethod
    def one(cls, nvars: int) -> "Monomial":
        return cls((0,) * nvars)


def monomial_basis(n: int, d: int) -> list[Monomial]:
    """All monomials in ``n`` variables of degree at most ``d``, graded-lex.

    The constant monomial comes first and the length is ``C(n + d, d)``.
    """
    if n < 0 or d < 0:
        raise ValueError("need n >= 0 and d >= 0")
    basis = []
    for k in range(d + 1):
        for combo in itertools.combinations_with_replacement(range(n), k):
            exps = [0] * n
            for v in combo:
                exps[v] += 1
            basis.append(Monomial(exps))
    return basis


class Polynomial:
    """Immutable sparse polynomial with float coefficients.

    Zero coefficients are never stored.  Arithmetic with Python numbers
    is supported, so ``x1, x2 = variables(2); p = 0.8 * x1**2 + x2 - 1``
    works as expected.
    """

    __slots__ = ("_nvars", "_terms", "_hash")

    def __init__(self, nvars: int, terms: Mapping[Sequence[int], float] | None = None):
        if nvars < 0:
            raise ValueError("nvars must be nonnegative")
        clean: dict[Monomial, float] = {}
        for mono, coef in (terms or {}).items():
            m = mono if isinstance(mono, Monomial) else Monomial(mono)
            if len(m) != nvars:
                raise ValueError(f"monomial {tuple(m)} does not have {nvars} variables")
            c = float(coef)
            if not math.isfinite(c):
                raise ValueError("non-finite coefficient")
            if c != 0.0:
                clean[m] = clean.get(m, 0.0) + c
        ordered = sorted(((m, c) for m, c in clean.items() if c != 0.0), key=lambda t: t[0].sort_key())
        self._nvars = nvars
        self._terms = dict(ordered)
        self._hash = None

    # -- construction --------------------------------------------------
    @classmethod
    def zero(cls, nvars: int) -> "Polynomial":
        return cls(nvars)

    @classmethod
    def constant(cls, nvars: int, value: float) -> "Polynomial":
        return cls(nvars, {Monomial.one(nvars): value})

    @classmethod
    def variable(cls, index: int, nvars: int) -> "Polynomial":
        """The variable ``x_index`` (1-based)."""
        if not 1 <= index <= nvars:
            raise ValueError(f"variable index {index} out of range 1..{nvars}")
        exps = [0] * nvars
        exps[index - 1] = 1
        return cls(nvars, {Monomial(exps): 1.0})

    # -- accessors -----------------------------------------------------
    @property
    def nvars(self) -> int:
        return self._nvars

    @property
    def terms(self) -> Mapping[Monomial, float]:
        return MappingProxyType(self._terms)

    def coeff(self, mono: Sequence[int]) -> float:
        return self._terms.get(Monomial(mono), 0.0)

    @property
    def degree(self) -> int:
        """Total degree; the zero polynomial has degree -1."""
        return max((m.degree for m in self._terms), default=-1)

    def is_zero(self) -> bool:
        return not self._terms

    def max_abs_coeff(self) -> float:
        return max((abs(c) for c in self._terms.values()), default=0.0)

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self):
        return iter(self._terms.items())

    # -- arithmetic ----------------------------------------------------
    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other._nvars != self._nvars:
                raise ValueError(f"nvars mismatch: {self._nvars} vs {other._nvars}")
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(self._nvars, float(other))
        raise TypeError(f"cannot combine Polynomial with {type(other).__name__}")

    def __add__(self, other):
        try:
            other = self._coerce(other)
        except TypeError:
            return NotImplemented
        out = dict(self._terms)
        for m, c in other._terms.items():
            out[m] = out.get(m, 0.0) + c
        return Polynomial(self._nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self._nvars, {m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        try:
            other = self._coerce(other)
        except TypeError:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            s = float(other)
            return Polynomial(self._nvars, {m: s * c for m, c in self._terms.items()})
        try:
            other = self._coerce(other)
        except TypeError:
            return NotImplemented
        out: dict[Monomial, float] = {}
        for ma, ca in self._terms.items():
            for mb, cb in other._terms.items():
                m = ma * mb
                out[m] = out.get(m, 0.0) + ca * cb
        return Polynomial(self._nvars, out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only nonnegative integer powers")
        out = Polynomial.constant(self._nvars, 1.0)
        for _ in range(k):
            out = out * self
        return out

    def __call__(self, point) -> float:
        return self.evaluate(point)

    def evaluate(self, point) -> float:
        x = np.asarray(point, dtype=float).reshape(-1)
        if x.size != self._nvars:
            raise ValueError(f"point has length {x.size}, expected {self._nvars}")
        total = 0.0
        for m, c in self._terms.items():
            total += c * float(np.prod(x ** np.asarray(m, dtype=float)))
        return total

    def cleanup(self, tol: float) -> "Polynomial":
        """Drop terms with ``|coefficient| <= tol``."""
        return Polynomial(self._nvars, {m: c for m, c in self._terms.items() if abs(c) > tol})

    def max_coeff_diff(self, other: "Polynomial") -> float:
        other = self._coerce(other)
        keys = set(self._terms) | set(other._terms)
        return max((abs(self._terms.get(m, 0.0) - other._terms.get(m, 0.0)) for m in keys), default=0.0)

    def almost_equal(self, other: "Polynomial", tol: float = 1e-9) -> bool:
        """Coefficient-wise comparison with tolerance scaled by the largest coefficient."""
        other = self._coerce(other)
        scale = max(1.0, self.max_abs_coeff(), other.max_abs_coeff())
        return self.max_coeff_diff(other) <= tol * scale

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self._nvars == other._nvars and self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self._nvars, tuple(self._terms.items())))
        return self._hash

    def __repr__(self) -> str:
        return f"Polynomial({self._nvars}, {str(self)!r})"

    def __str__(self) -> str:
        if not self._terms:
            return "0"
        pieces = []
        for m, c in reversed(list(self._terms.items())):
            ms = str(m)
            if ms == "1":
                pieces.append(f"{c:g}")
            elif c == 1.0:
                pieces.append(ms)
            elif c == -1.0:
                pieces.append(f"-{ms}")
            else:
                pieces.append(f"{c:g}*{ms}")
        return " + ".join(pieces).replace("+ -", "- ")


def variables(nvars: int) -> tuple[Polynomial, ...]:
    return tuple(Polynomial.variable(i, nvars) for i in range(1, nvars + 1))


def poly_add(a: Polynomial, b: Polynomial) -> Polynomial:
    if a.nvars != b.nvars:
        raise ValueError(f"nvars mismatch: {a.nvars} vs {b.nvars}")
    return a + b


def poly_mul(a: Polynomial, b: Polynomial) -> Polynomial:
    if a.nvars != b.nvars:
        raise ValueError(f"nvars mismatch: {a.nvars} vs {b.nvars}")
    return a * b


class PolyMatrix:
    """Symmetric ``r x r`` matrix of polynomials with a declared sparsity pattern.

    Entries outside the pattern (edges plus diagonal) must be the zero
    polynomial; the constructor enforces this together with symmetry.
    ``pattern=None`` infers the pattern from the nonzero entries.
    """

    __slots__ = ("_entries", "_pattern", "_nvars")

    def __init__(self, entries: Sequence[Sequence[Polynomial]], pattern: SparsityGraph | None = None,
                 nvars: int | None = None):
        rows = [list(row) for row in entries]
        r = len(rows)
        if any(len(row) != r for row in rows):
            raise ValueError("entries must form a square array")
        if nvars is None:
            if r == 0:
                raise ValueError("nvars is required for an empty matrix")
            nvars = rows[0][0].nvars
        for i in range(r):
            for j in range(r):
                p = rows[i][j]
                if not isinstance(p, Polynomial):
                    p = Polynomial.constant(nvars, float(p))
                    rows[i][j] = p
                if p.nvars != nvars:
                    raise ValueError(f"entry ({i + 1},{j + 1}) has nvars {p.nvars}, expected {nvars}")
        for i in range(r):
            for j in range(i + 1, r):
                if rows[i][j] != rows[j][i]:
                    raise ValueError(f"entries ({i + 1},{j + 1}) and ({j + 1},{i + 1}) differ")
        if pattern is None:
            pattern = SparsityGraph(r, [(i + 1, j + 1) for i in range(r) for j in range(i + 1, r)
                                        if not rows[i][j].is_zero()])
        if pattern.r != r:
            raise ValueError(f"pattern has {pattern.r} nodes, matrix has dimension {r}")
        for i in range(r):
            for j in range(i + 1, r):
                if not rows[i][j].is_zero() and not pattern.has_edge(i + 1, j + 1):
                    raise ValueError(f"entry ({i + 1},{j + 1}) is nonzero but outside the pattern")
        self._entries = tuple(tuple(row) for row in rows)
        self._pattern = pattern
        self._nvars = nvars

    @classmethod
    def from_upper(cls, r: int, nvars: int, upper: Mapping[tuple[int, int], Polynomial],
                   pattern: SparsityGraph | None = None) -> "PolyMatrix":
        """Build from a dict of 1-based ``(i, j)`` entries with ``i <= j``."""
        zero = Polynomial.zero(nvars)
        rows = [[zero] * r for _ in range(r)]
        for (i, j), p in upper.items():
            if not (1 <= i <= r and 1 <= j <= r):
                raise ValueError(f"entry ({i},{j}) out of range")
            if not isinstance(p, Polynomial):
                p = Polynomial.constant(nvars, float(p))
            rows[i - 1][j - 1] = p
            rows[j - 1][i - 1] = p
        return cls(rows, pattern, nvars=nvars)

    @classmethod
    def constant(cls, values, nvars: int = 1, pattern: SparsityGraph | None = None) -> "PolyMatrix":
        M = np.asarray(values, dtype=float)
        r = M.shape[0]
        return cls([[Polynomial.constant(nvars, M[i, j]) for j in range(r)] for i in range(r)],
                   pattern, nvars=nvars)

    @classmethod
    def identity(cls, r: int, nvars: int, pattern: SparsityGraph | None = None) -> "PolyMatrix":
        return cls.constant(np.eye(r), nvars, pattern if pattern is not None else SparsityGraph(r))

    @property
    def r(self) -> int:
        return len(self._entries)

    @property
    def nvars(self) -> int:
        return self._nvars

    @property
    def pattern(self) -> SparsityGraph:
        return self._pattern

    @property
    def entries(self) -> tuple[tuple[Polynomial, ...], ...]:
        return self._entries

    def __getitem__(self, ij) -> Polynomial:
        """0-based ``(i, j)`` access, like a numpy array."""
        i, j = ij
        return self._entries[i][j]

    def entry(self, i: int, j: int) -> Polynomial:
        """1-based access matching the pattern's node labels."""
        return self._entries[i - 1][j - 1]

    @property
    def degree(self) -> int:
        return max((p.degree for row in self._entries for p in row), default=-1)

    def max_abs_coeff(self) -> float:
        return max((p.max_abs_coeff() for row in self._entries for p in row), default=0.0)

    def with_pattern(self, pattern: SparsityGraph) -> "PolyMatrix":
        return PolyMatrix(self._entries, pattern, nvars=self._nvars)

    def _check_same_shape(self, other: "PolyMatrix"):
        if other.r != self.r or other.nvars != self.nvars:
            raise ValueError("matrices differ in dimension or number of variables")

    def _combine(self, other: "PolyMatrix", op) -> "PolyMatrix":
        self._check_same_shape(other)
        rows = [[op(self._entries[i][j], other._entries[i][j]) for j in range(self.r)] for i in range(self.r)]
        return PolyMatrix(rows, self._pattern.union(other._pattern), nvars=self._nvars)

    def __add__(self, other: "PolyMatrix") -> "PolyMatrix":
        return self._combine(other, lambda a, b: a + b)

    def __sub__(self, other: "PolyMatrix") -> "PolyMatrix":
        return self._combine(other, lambda a, b: a - b)

    def __mul__(self, s: float) -> "PolyMatrix":
        s = float(s)
        return PolyMatrix([[p * s for p in row] for row in self._entries], self._pattern, nvars=self._nvars)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def eval(self, point) -> np.ndarray:
        return eval_matrix(self, point)

    def principal(self, nodes: Sequence[int]) -> "PolyMatrix":
        """Principal submatrix on 1-based ``nodes`` (``E_C P E_C^T``)."""
        idx = [v - 1 for v in nodes]
        rows = [[self._entries[i][j] for j in idx] for i in idx]
        return PolyMatrix(rows, self._pattern.induced(nodes), nvars=self._nvars)

    def inflate(self, nodes: Sequence[int], r: int) -> "PolyMatrix":
        """Embed this ``|C| x |C|`` matrix into an ``r x r`` zero matrix (``E_C^T P E_C``)."""
        if len(nodes) != self.r:
            raise ValueError("clique size does not match matrix dimension")
        upper = {}
        for a, i in enumerate(nodes):
            for b, j in enumerate(nodes):
                if i <= j:
                    upper[(i, j)] = self._entries[a][b]
        edges = [(i, j) for a, i in enumerate(nodes) for j in nodes[a + 1:]]
        return PolyMatrix.from_upper(r, self._nvars, upper, SparsityGraph(r, edges))

    def max_coeff_diff(self, other: "PolyMatrix") -> float:
        self._check_same_shape(other)
        return max((self._entries[i][j].max_coeff_diff(other._entries[i][j])
                    for i in range(self.r) for j in range(i, self.r)), default=0.0)

    def almost_equal(self, other: "PolyMatrix", tol: float = 1e-9) -> bool:
        scale = max(1.0, self.max_abs_coeff(), other.max_abs_coeff())
        return self.max_coeff_diff(other) <= tol * scale

    def cleanup(self, tol: float) -> "PolyMatrix":
        return PolyMatrix([[p.cleanup(tol) for p in row] for row in self._entries], self._pattern,
                          nvars=self._nvars)

    def __eq__(self, other):
        if not isinstance(other, PolyMatrix):
            return NotImplemented
        return self._nvars == other._nvars and self._entries == other._entries

    def __hash__(self):
        return hash((self._nvars, self._entries))

    def __repr__(self) -> str:
        return f"PolyMatrix(r={self.r}, nvars={self._nvars}, pattern={sorted(self._pattern.edges)})"


def eval_matrix(P: PolyMatrix, point) -> np.ndarray:
    """Evaluate every entry at ``point``; the result is a symmetric array."""
    x = np.asarray(point, dtype=float).reshape(-1)
    if x.size != P.nvars:
        raise ValueError(f"point has length {x.size}, expected {P.nvars}")
    r = P.r
    out = np.zeros((r, r))
    for i in range(r):
        for j in range(i, r):
            out[i, j] = out[j, i] = P[i, j].evaluate(x)
    return out
