"""JSON problem files.

Layout (``schema_version`` 1)::

    {
      "schema_version": 1,
      "kind": "poly_matrix" | "partial_poly_matrix" | "sos_program",
      "nvars": 2,
      "r": 3,
      "pattern": [[1, 2], [1, 3]],
      "entries": [{"i": 1, "j": 1, "terms": [[[2, 0], 0.8], [[0, 0], 1.0]]}, ...],
      "w": [1.0],                          # sos_program only
      "matrices": [[...entries...], ...]   # sos_program only: P0, P1, ...
    }

Entries are stored for the upper triangle only (``i <= j``, 1-based).  A
term is ``[exponent vector, coefficient]``.  In a ``partial_poly_matrix``
every listed entry is specified and all others are unknown; the diagonal
must be listed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Union

from .chordal import SparsityGraph
from .poly import Polynomial, PolyMatrix
from .sosdc import PartialPolyMatrix
from .sosprog import SosProgram

SCHEMA_VERSION = 1
KINDS = ("poly_matrix", "partial_poly_matrix", "sos_program")

Payload = Union[PolyMatrix, PartialPolyMatrix, SosProgram]


class ProblemFileError(ValueError):
    """Malformed problem file; ``line``/``column`` are set for JSON syntax errors."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
        self.line = line
        self.column = column


@dataclass(frozen=True)
class ProblemFile:
    kind: str
    payload: Payload

    @property
    def r(self) -> int:
        return self.payload.r

    @property
    def nvars(self) -> int:
        return self.payload.nvars


# -- decoding -------------------------------------------------------------

def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ProblemFileError(f"{where}: missing field {key!r}")
    return obj[key]


def _poly(terms: Any, nvars: int, where: str) -> Polynomial:
    if not isinstance(terms, list):
        raise ProblemFileError(f"{where}: 'terms' must be a list")
    acc: dict[tuple[int, ...], float] = {}
    for t, term in enumerate(terms):
        if not (isinstance(term, list) and len(term) == 2 and isinstance(term[0], list)):
            raise ProblemFileError(f"{where}.terms[{t}]: expected [exponents, coefficient]")
        exps, coef = term
        if len(exps) != nvars or any(not isinstance(e, int) or isinstance(e, bool) or e < 0 for e in exps):
            raise ProblemFileError(f"{where}.terms[{t}]: exponent vector must be {nvars} nonnegative integers")
        if not isinstance(coef, (int, float)) or isinstance(coef, bool):
            raise ProblemFileError(f"{where}.terms[{t}]: coefficient must be a number")
        key = tuple(exps)
        if key in acc:
            raise ProblemFileError(f"{where}.terms[{t}]: repeated monomial {list(key)}")
        acc[key] = float(coef)
    return Polynomial(nvars, acc)


def _entries(raw: Any, r: int, nvars: int, where: str) -> dict[tuple[int, int], Polynomial]:
    if not isinstance(raw, list):
        raise ProblemFileError(f"{where}: entries must be a list")
    out = {}
    for k, e in enumerate(raw):
        loc = f"{where}[{k}]"
        if not isinstance(e, dict):
            raise ProblemFileError(f"{loc}: entry must be an object")
        i, j = _require(e, "i", loc), _require(e, "j", loc)
        if not (isinstance(i, int) and isinstance(j, int) and 1 <= i <= j <= r):
            raise ProblemFileError(f"{loc}: need 1 <= i <= j <= {r}, got ({i}, {j})")
        if (i, j) in out:
            raise ProblemFileError(f"{loc}: duplicate entry ({i}, {j})")
        out[(i, j)] = _poly(_require(e, "terms", loc), nvars, loc)
    return out


def _pattern(raw: Any, r: int) -> SparsityGraph:
    if not isinstance(raw, list):
        raise ProblemFileError("pattern must be a list of [i, j] pairs")
    edges = []
    for k, e in enumerate(raw):
        if not (isinstance(e, list) and len(e) == 2 and all(isinstance(v, int) for v in e)):
            raise ProblemFileError(f"pattern[{k}]: expected [i, j]")
        i, j = e
        if not (1 <= i <= r and 1 <= j <= r) or i == j:
            raise ProblemFileError(f"pattern[{k}]: bad edge ({i}, {j})")
        edges.append((i, j))
    return SparsityGraph(r, edges)


def _matrix(entries: dict, r: int, nvars: int, pattern: SparsityGraph, where: str) -> PolyMatrix:
    try:
        return PolyMatrix.from_upper(r, nvars, entries, pattern)
    except ValueError as exc:
        raise ProblemFileError(f"{where}: {exc}") from None


def from_dict(doc: Any) -> ProblemFile:
    if not isinstance(doc, dict):
        raise ProblemFileError("top level must be an object")
    version = _require(doc, "schema_version", "file")
    if version != SCHEMA_VERSION:
        raise ProblemFileError(f"unsupported schema_version {version!r}")
    kind = _require(doc, "kind", "file")
    if kind not in KINDS:
        raise ProblemFileError(f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}")
    nvars = _require(doc, "nvars", "file")
    r = _require(doc, "r", "file")
    if not (isinstance(nvars, int) and nvars >= 0 and isinstance(r, int) and r >= 1):
        raise ProblemFileError("nvars must be >= 0 and r >= 1")
    pattern = _pattern(_require(doc, "pattern", "file"), r)
    if kind == "poly_matrix":
        return ProblemFile(kind, _matrix(_entries(_require(doc, "entries", "file"), r, nvars, "entries"),
                                         r, nvars, pattern, "entries"))
    if kind == "partial_poly_matrix":
        ent = _entries(_require(doc, "entries", "file"), r, nvars, "entries")
        try:
            return ProblemFile(kind, PartialPolyMatrix(r, nvars, pattern, ent))
        except ValueError as exc:
            raise ProblemFileError(f"entries: {exc}") from None
    w = _require(doc, "w", "file")
    mats = _require(doc, "matrices", "file")
    if not (isinstance(w, list) and all(isinstance(v, (int, float)) for v in w)):
        raise ProblemFileError("w must be a list of numbers")
    if not isinstance(mats, list) or not mats:
        raise ProblemFileError("matrices must be a nonempty list")
    P = [_matrix(_entries(m, r, nvars, f"matrices[{k}]"), r, nvars, pattern, f"matrices[{k}]")
         for k, m in enumerate(mats)]
    try:
        return ProblemFile(kind, SosProgram(tuple(w), tuple(P)))
    except ValueError as exc:
        raise ProblemFileError(str(exc)) from None


def loads(text: str) -> ProblemFile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from None
    return from_dict(doc)


def load(path) -> ProblemFile:
    return loads(Path(path).read_text(encoding="utf-8"))


# -- encoding -------------------------------------------------------------

def _terms(p: Polynomial) -> list:
    return [[list(m), float(c)] for m, c in p.terms.items()]


def _matrix_entries(P: PolyMatrix) -> list:
    return [{"i": i, "j": j, "terms": _terms(P.entry(i, j))}
            for i in range(1, P.r + 1) for j in range(i, P.r + 1) if not P.entry(i, j).is_zero()]


def to_dict(payload: Payload) -> dict:
    if isinstance(payload, ProblemFile):
        payload = payload.payload
    if isinstance(payload, PolyMatrix):
        kind, pattern = "poly_matrix", payload.pattern
        body = {"entries": _matrix_entries(payload)}
    elif isinstance(payload, PartialPolyMatrix):
        kind, pattern = "partial_poly_matrix", payload.pattern
        body = {"entries": [{"i": i, "j": j, "terms": _terms(p)} for (i, j), p in payload.entries.items()]}
    elif isinstance(payload, SosProgram):
        kind, pattern = "sos_program", payload.pattern
        body = {"w": list(payload.w), "matrices": [_matrix_entries(M) for M in payload.P]}
    else:
        raise TypeError(f"cannot serialise {type(payload).__name__}")
    doc = {"schema_version": SCHEMA_VERSION, "kind": kind, "nvars": payload.nvars, "r": payload.r,
           "pattern": [list(e) for e in sorted(pattern.edges)]}
    doc.update(body)
    return doc


def _format(doc: dict) -> str:
    # one entry per line keeps files diffable without deep indentation
    def entries(es, pad):
        if not es:
            return "[]"
        inner = (",\n" + pad + "  ").join(json.dumps(e) for e in es)
        return "[\n" + pad + "  " + inner + "\n" + pad + "]"

    parts = []
    for key, val in doc.items():
        if key == "entries":
            text = entries(val, "  ")
        elif key == "matrices":
            text = "[\n    " + ",\n    ".join(entries(m, "    ") for m in val) + "\n  ]" if val else "[]"
        else:
            text = json.dumps(val)
        parts.append(f"  {json.dumps(key)}: {text}")
    return "{\n" + ",\n".join(parts) + "\n}\n"


def dumps(payload: Payload) -> str:
    return _format(to_dict(payload))


def dump(payload: Payload, path) -> None:
    Path(path).write_text(dumps(payload), encoding="utf-8")
