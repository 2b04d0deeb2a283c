"""SDPA sparse format (``.dat-s``) writer and reader.

A standard-form problem ``min c^T z, A z = b, z in K`` is written as the
SDPA dual problem ``max F0 . Y  s.t.  Fi . Y = ci, Y PSD`` with ``Y = z``,
``F0 = -C`` and ``ci = b_i``.  The nonnegative orthant becomes a diagonal
block (negative size in the header) placed before the PSD blocks, matching
the cone order.  Free variables are not representable; call
:func:`chordsos.conic.split_free` first.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .conic import SQRT2, Cone, ConicProblem, svec_index


class SdpaFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


@dataclass
class SdpaProblem:
    """Block-sparse data as it appears in the file.

    ``entries`` maps ``(matno, blkno)`` (``blkno`` 1-based) to a dict
    ``{(i, j): value}`` with 1-based ``i <= j``.
    """

    c: np.ndarray
    blocks: tuple[int, ...]
    entries: dict[tuple[int, int], dict[tuple[int, int], float]]

    @property
    def m(self) -> int:
        return len(self.c)


def _fmt(v: float) -> str:
    # 15 significant digits so that write(parse(write(x))) is a fixed point
    return repr(float(f"{v:.15g}"))


def to_sdpa(p: ConicProblem) -> SdpaProblem:
    if p.cone.free:
        raise ValueError("free variables present; apply split_free first")
    blocks: list[int] = []
    # (block number, local size, offset, diagonal?)
    layout = []
    off = 0
    if p.cone.nonneg:
        blocks.append(-p.cone.nonneg)
        layout.append((len(blocks), p.cone.nonneg, off, True))
        off += p.cone.nonneg
    for n, o in zip(p.cone.psd, p.cone.psd_offsets()):
        blocks.append(n)
        layout.append((len(blocks), n, o, False))
    coord = {}
    for blk, n, o, diag in layout:
        if diag:
            for i in range(n):
                coord[o + i] = (blk, i + 1, i + 1, 1.0)
        else:
            for j in range(n):
                for i in range(j, n):
                    coord[o + svec_index(n, i, j)] = (blk, j + 1, i + 1, 1.0 if i == j else 1.0 / SQRT2)
    entries: dict[tuple[int, int], dict[tuple[int, int], float]] = {}

    def put(mat, col, val):
        if val == 0.0:
            return
        blk, i, j, scale = coord[col]
        entries.setdefault((mat, blk), {})[(i, j)] = val * scale

    for col in np.flatnonzero(p.c):
        put(0, int(col), -float(p.c[col]))
    A = p.A.tocsr()
    for row in range(A.shape[0]):
        lo, hi = A.indptr[row], A.indptr[row + 1]
        for col, val in zip(A.indices[lo:hi], A.data[lo:hi]):
            put(row + 1, int(col), float(val))
    return SdpaProblem(np.asarray(p.b, dtype=float).copy(), tuple(blocks), entries)


def from_sdpa(s: SdpaProblem) -> ConicProblem:
    nonneg = 0
    psd = []
    layout = {}
    for k, n in enumerate(s.blocks, start=1):
        if n < 0:
            if psd:
                raise ValueError("diagonal blocks must precede matrix blocks")
            layout[k] = ("diag", nonneg, -n)
            nonneg += -n
        else:
            layout[k] = ("psd", len(psd), n)
            psd.append(n)
    cone = Cone(0, nonneg, tuple(psd))
    offs = cone.psd_offsets()

    def column(blk, i, j):
        kind, where, n = layout[blk]
        if kind == "diag":
            if i != j:
                raise ValueError(f"off-diagonal entry in diagonal block {blk}")
            return where + i - 1, 1.0
        return offs[where] + svec_index(n, i - 1, j - 1), (1.0 if i == j else SQRT2)

    c = np.zeros(cone.dim)
    rows, cols, vals = [], [], []
    for (mat, blk), ent in sorted(s.entries.items()):
        for (i, j), v in ent.items():
            col, scale = column(blk, i, j)
            if mat == 0:
                c[col] -= v * scale
            else:
                rows.append(mat - 1)
                cols.append(col)
                vals.append(v * scale)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(s.m, cone.dim))
    return ConicProblem(c, A, np.asarray(s.c, dtype=float), cone)


def write_sdpa(s: SdpaProblem, comment: str | None = None) -> str:
    out = io.StringIO()
    if comment:
        for line in comment.splitlines():
            out.write(f'"{line}"\n')
    out.write(f"{s.m}\n{len(s.blocks)}\n")
    out.write(" ".join(str(n) for n in s.blocks) + "\n")
    out.write(" ".join(_fmt(v) for v in s.c) + "\n")
    for (mat, blk) in sorted(s.entries):
        for (i, j), v in sorted(s.entries[(mat, blk)].items()):
            if v != 0.0:
                out.write(f"{mat} {blk} {i} {j} {_fmt(v)}\n")
    return out.getvalue()


def export_sdpa(p: ConicProblem, comment: str | None = None) -> str:
    return write_sdpa(to_sdpa(p), comment)


_SEP = re.compile(r"[,{}()]")


def parse_sdpa(text: str) -> SdpaProblem:
    lines = text.splitlines()
    k = 0
    while k < len(lines) and (not lines[k].strip() or lines[k].lstrip()[0] in "\"*"):
        k += 1

    def header(what):
        nonlocal k
        while k < len(lines) and not lines[k].strip():
            k += 1
        if k >= len(lines):
            raise SdpaFormatError(f"missing {what}")
        toks = _SEP.sub(" ", lines[k]).split()
        k += 1
        return toks, k

    def ints(toks, line, count=None):
        try:
            vals = [int(t) for t in toks]
        except ValueError:
            raise SdpaFormatError(f"expected integers, got {' '.join(toks)!r}", line) from None
        if count is not None and len(vals) < count:
            raise SdpaFormatError(f"expected {count} integers", line)
        return vals

    toks, line = header("constraint count")
    m = ints(toks[:1], line, 1)[0]
    toks, line = header("block count")
    nb = ints(toks[:1], line, 1)[0]
    toks, line = header("block structure")
    blocks = tuple(ints(toks[:nb], line, nb))
    if len(blocks) != nb or any(b == 0 for b in blocks):
        raise SdpaFormatError("bad block structure", line)
    # the objective vector may wrap over several lines
    cvals: list[float] = []
    while len(cvals) < m:
        toks, line = header("objective vector")
        try:
            cvals.extend(float(t) for t in toks)
        except ValueError:
            raise SdpaFormatError("non-numeric objective entry", line) from None
    if len(cvals) != m:
        raise SdpaFormatError(f"objective has {len(cvals)} entries, expected {m}", line)
    entries: dict[tuple[int, int], dict[tuple[int, int], float]] = {}
    for idx in range(k, len(lines)):
        raw = _SEP.sub(" ", lines[idx]).split()
        if not raw:
            continue
        lineno = idx + 1
        if len(raw) < 5:
            raise SdpaFormatError("entry lines need 'matno blkno i j value'", lineno)
        mat, blk, i, j = ints(raw[:4], lineno)
        try:
            v = float(raw[4])
        except ValueError:
            raise SdpaFormatError(f"bad value {raw[4]!r}", lineno) from None
        if not 0 <= mat <= m or not 1 <= blk <= nb:
            raise SdpaFormatError(f"matrix {mat} / block {blk} out of range", lineno)
        n = abs(blocks[blk - 1])
        if not (1 <= i <= n and 1 <= j <= n):
            raise SdpaFormatError(f"index ({i},{j}) outside block of size {n}", lineno)
        if i > j:
            i, j = j, i
        entries.setdefault((mat, blk), {})[(i, j)] = v
    return SdpaProblem(np.asarray(cvals), blocks, entries)


def read_sdpa(path) -> SdpaProblem:
    with open(path, encoding="utf-8") as fh:
        return parse_sdpa(fh.read())
