"""Command-line interface.

Exit codes: 0 success, 2 infeasible / not completable, 1 usage, parse or
solver error.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io
from .chordal import SparsityGraph, chordal_extension, is_chordal, maximal_cliques
from .conic import Status, split_free
from .poly import PolyMatrix
from .psdchordal import NotPSDError, PartialSymMatrix, SparseSymMatrix, complete_psd, decompose_psd, lambda_min
from .sdpa import export_sdpa
from .sosdc import (CliqueNotSosError, InconsistentGramError, NotSparseSosError, PartialPolyMatrix,
                    complete_sos, decompose_sos, verify_decomposition)
from .sosgram import find_gram, reconstruct
from .sosprog import (FORMULATIONS, SosProgram, arrow_table, build_sdp, eig_bound_program, solve_program,
                      verify_result)

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2

log = logging.getLogger("chordsos")


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return _json_safe(obj.item())
    return obj


def _dump_json(obj) -> str:
    return json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n"


def _emit(args, report: dict, text_lines: list[str]):
    if args.format == "json":
        sys.stdout.write(_dump_json(report))
    else:
        sys.stdout.write("\n".join(text_lines) + "\n")


def _program_pattern(pf: io.ProblemFile) -> SparsityGraph:
    return pf.payload.pattern


def _constant_values(P) -> np.ndarray:
    """Numeric matrix of a degree-0 (partial) polynomial matrix; NaN where unspecified."""
    if P.degree > 0:
        raise CliError("--psd needs constant entries (degree 0)")
    M = np.full((P.r, P.r), np.nan)
    for i in range(1, P.r + 1):
        for j in range(i, P.r + 1):
            p = P.entry(i, j)
            if p is None:
                continue
            v = p.coeff((0,) * P.nvars)
            M[i - 1, j - 1] = M[j - 1, i - 1] = v
    return M


def _matrix_list(M: np.ndarray) -> list:
    return [[None if math.isnan(v) else float(v) for v in row] for row in M]


def _edges(g: SparsityGraph) -> list:
    return [list(e) for e in sorted(g.edges)]


# -- commands ---------------------------------------------------------------

def cmd_check_chordal(args) -> int:
    pf = io.load(args.file)
    g = _program_pattern(pf)
    ok, peo = is_chordal(g)
    report = {"chordal": ok, "r": g.r, "edges": _edges(g)}
    if ok:
        cs = maximal_cliques(g, peo)
        report.update(peo=list(peo.order), cliques=[list(c) for c in cs], extension=[])
    else:
        ext = chordal_extension(g)
        _, peo_ext = is_chordal(ext)
        cs = maximal_cliques(ext, peo_ext)
        report.update(peo=None, cliques=[list(c) for c in cs],
                      extension=[list(e) for e in sorted(ext.edges - g.edges)])
    lines = [f"chordal: {'yes' if ok else 'no'}"]
    if ok:
        lines.append("perfect elimination order: " + " ".join(map(str, report["peo"])))
    else:
        lines.append("suggested extension: " + ", ".join(f"({i},{j})" for i, j in report["extension"]))
    lines.append("maximal cliques" + ("" if ok else " (extended)") + ": "
                 + " ".join("{" + ",".join(map(str, c)) + "}" for c in report["cliques"]))
    _emit(args, report, lines)
    return EXIT_OK


def _write_out(out: str | None, name: str, payload) -> str | None:
    if out is None:
        return None
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    path = d / name
    io.dump(payload, path)
    return str(path)


def cmd_decompose(args) -> int:
    pf = io.load(args.file)
    if pf.kind != "poly_matrix":
        raise CliError("decompose expects a poly_matrix file")
    P: PolyMatrix = pf.payload
    pieces_out = []
    if args.psd:
        X = _constant_values(P)
        chordal, peo = is_chordal(P.pattern)
        if not chordal:
            raise CliError("pattern is not chordal; run check-chordal for an extension")
        cs = maximal_cliques(P.pattern, peo)
        try:
            pieces = decompose_psd(SparseSymMatrix(X, P.pattern), cs)
        except NotPSDError as exc:
            return _infeasible(args, str(exc), {"lambda_min": exc.lambda_min})
        total = np.zeros_like(X)
        for k, Xk in pieces:
            idx = np.asarray(cs[k]) - 1
            total[np.ix_(idx, idx)] += Xk
            piece = PolyMatrix.constant(Xk, nvars=P.nvars, pattern=SparsityGraph.complete(len(cs[k])))
            pieces_out.append({"clique": list(cs[k]), "matrix": _matrix_list(Xk), "lambda_min": lambda_min(Xk),
                               "file": _write_out(args.out, f"piece_{k + 1}.json", piece)})
        residual = float(np.abs(total - X).max(initial=0.0))
        ok = residual <= 1e-8 * max(1.0, float(np.abs(X).max())) and \
            all(p["lambda_min"] >= -1e-8 * max(1.0, float(np.abs(p["matrix"]).max())) for p in pieces_out)
        added = []
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                dec = decompose_sos(P)
            except NotSparseSosError as exc:
                dense = find_gram(P, sparse=False)
                hint = ("the matrix is SOS with a dense Gram matrix, but not with one supported on the pattern"
                        if dense.feasible else "the matrix is not SOS even with a dense Gram matrix")
                return _infeasible(args, f"{exc}; {hint}", {"dense_feasible": dense.feasible,
                                                             "margin": exc.margin})
        rep = verify_decomposition(P, dec)
        for k, (piece, lm) in enumerate(zip(dec.pieces, rep.lambda_min)):
            pieces_out.append({"clique": list(piece.clique), "lambda_min": lm,
                               "file": _write_out(args.out, f"piece_{k + 1}.json", piece.P)})
        residual = rep.residual
        ok = rep.ok
        added = [list(e) for e in dec.added_edges]
    report = {"mode": "psd" if args.psd else "sos", "ok": bool(ok), "reassembly_residual": residual,
              "pieces": pieces_out, "extension": added}
    lines = [f"{len(pieces_out)} pieces ({report['mode']})"]
    if added:
        lines.append("pattern extended with " + ", ".join(f"({i},{j})" for i, j in added))
    for k, p in enumerate(pieces_out, start=1):
        where = f" -> {p['file']}" if p["file"] else ""
        lines.append(f"  piece {k}: clique {{{','.join(map(str, p['clique']))}}} "
                     f"lambda_min {p['lambda_min']:.3e}{where}")
    lines.append(f"reassembly residual {residual:.3e} ({'ok' if ok else 'FAILED'})")
    _emit(args, report, lines)
    return EXIT_OK if ok else EXIT_ERROR


def _infeasible(args, message: str, extra: dict) -> int:
    report = {"ok": False, "infeasible": True, "message": message}
    report.update(extra)
    _emit(args, report, [f"infeasible: {message}"])
    return EXIT_INFEASIBLE


def cmd_complete(args) -> int:
    pf = io.load(args.file)
    if pf.kind == "poly_matrix":
        Pp = PartialPolyMatrix.from_matrix(pf.payload)
    elif pf.kind == "partial_poly_matrix":
        Pp = pf.payload
    else:
        raise CliError("complete expects a partial_poly_matrix file")
    ok, _ = is_chordal(Pp.pattern)
    if not ok:
        raise CliError("pattern is not chordal; completion needs a chordal pattern")
    if args.psd:
        Z = _constant_values(Pp)
        try:
            W = complete_psd(PartialSymMatrix(Z, Pp.pattern))
        except NotPSDError as exc:
            extra = {"lambda_min": exc.lambda_min}
            if exc.clique is not None:
                extra["clique"] = exc.clique + 1
            return _infeasible(args, str(exc), extra)
        full = PolyMatrix.constant(W, nvars=Pp.nvars, pattern=SparsityGraph.complete(Pp.r))
        path = _write_out_file(args.out, full)
        lm = lambda_min(W)
        report = {"mode": "psd", "ok": True, "matrix": _matrix_list(W), "lambda_min": lm, "file": path}
        lines = ["completed matrix:"] + ["  " + " ".join(f"{v:.6g}" for v in row) for row in W]
        lines.append(f"lambda_min {lm:.3e}")
    else:
        try:
            comp = complete_sos(Pp)
        except CliqueNotSosError as exc:
            return _infeasible(args, str(exc), {"clique": exc.clique + 1, "nodes": list(exc.nodes)})
        except InconsistentGramError as exc:
            pair = [exc.pair[0] + 1, exc.pair[1] + 1] if exc.pair else None
            return _infeasible(args, str(exc), {"pair": pair, "margin": exc.margin})
        path = _write_out_file(args.out, comp.F)
        check = find_gram(comp.F, sparse=False)
        agree = max(comp.F.entry(i, j).max_coeff_diff(p) for (i, j), p in Pp.entries.items())
        gram_res = reconstruct(structure=comp.structure, Q=comp.Qhat).max_coeff_diff(comp.F)
        fills = {f"{i},{j}": str(comp.F.entry(i, j).cleanup(1e-12))
                 for i in range(1, Pp.r + 1) for j in range(i + 1, Pp.r + 1) if Pp.entry(i, j) is None}
        ok = check.feasible and agree <= 1e-6 * max(1.0, Pp.max_abs_coeff())
        report = {"mode": "sos", "ok": bool(ok), "fill": fills, "agreement_residual": agree,
                  "gram_residual": gram_res, "gram_lambda_min": lambda_min(comp.Qhat), "margin": comp.margin,
                  "is_sos": check.feasible, "file": path}
        lines = ["completed entries:"] + [f"  ({k}): {v}" for k, v in fills.items()]
        lines.append(f"agreement residual {agree:.3e}, Gram lambda_min {report['gram_lambda_min']:.3e}, "
                     f"SOS check {'passed' if check.feasible else 'FAILED'}")
        if not ok:
            _emit(args, report, lines)
            return EXIT_ERROR
    _emit(args, report, lines)
    return EXIT_OK


def _write_out_file(out: str | None, payload) -> str | None:
    if out is None:
        return None
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    io.dump(payload, out)
    return out


def _as_program(pf: io.ProblemFile) -> SosProgram:
    if pf.kind == "sos_program":
        return pf.payload
    if pf.kind == "poly_matrix":
        return eig_bound_program(pf.payload)
    raise CliError("expected an sos_program or poly_matrix file")


def cmd_solve(args) -> int:
    prog = _as_program(io.load(args.file))
    res = solve_program(prog, args.formulation)
    report = {"formulation": args.formulation, "status": res.status.value,
              "timing": {"solve": res.solve_time, "build": res.build_time}}
    if res.status in (Status.INFEASIBLE, Status.UNBOUNDED):
        report["ok"] = False
        _emit(args, report, [f"status: {res.status.value}"])
        return EXIT_INFEASIBLE
    if not res.ok:
        report["ok"] = False
        _emit(args, report, [f"status: {res.status.value} after {res.solve.iterations} iterations"])
        return EXIT_ERROR
    check = verify_result(prog, res)
    report.update(ok=check["ok"], u=[float(v) for v in res.u], objective=res.objective,
                  iterations=res.solve.iterations,
                  certificate={"blocks": [b.shape[0] for b in res.certificate.blocks],
                               "residual": check["residual"], "lambda_min": check["lambda_min"],
                               "supported_on_pattern": check["supported"]})
    lines = [f"status: {res.status.value} ({args.formulation})",
             f"objective: {res.objective:.6f}",
             "u: " + " ".join(f"{v:.6f}" for v in res.u),
             f"certificate: {len(res.certificate.blocks)} PSD block(s), residual {check['residual']:.2e}, "
             f"lambda_min {check['lambda_min']:.2e}",
             f"solve time: {res.solve_time:.3f} s"]
    _emit(args, report, lines)
    return EXIT_OK if check["ok"] else EXIT_ERROR


def _parse_rs(text: str) -> list[int]:
    try:
        rs = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise CliError(f"bad --r list {text!r}") from None
    if not rs or any(r < 2 for r in rs):
        raise CliError("--r needs integers >= 2")
    return rs


BENCH_COLUMNS = ("r", "gamma_dense", "gamma_dec", "t_dense", "t_dec")


def bench_csv(rows: list[dict]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_COLUMNS)
    for row in rows:
        w.writerow([row["r"]] + [f"{row[c]:.6f}" for c in BENCH_COLUMNS[1:]])
    return buf.getvalue()


def bench_text(rows: list[dict]) -> str:
    head = f"{'r':>4}  {'gamma_dense':>12}  {'gamma_dec':>12}  {'t_dense':>10}  {'t_dec':>10}"
    out = [head]
    for row in rows:
        out.append(f"{row['r']:>4}  {row['gamma_dense']:>12.6f}  {row['gamma_dec']:>12.6f}  "
                   f"{row['t_dense']:>10.6f}  {row['t_dec']:>10.6f}")
    return "\n".join(out) + "\n"


def cmd_bench(args) -> int:
    if args.family != "arrow":
        raise CliError(f"unknown family {args.family!r}")
    rows = arrow_table(_parse_rs(args.r), repeats=args.repeats)
    if args.csv:
        Path(args.csv).write_text(bench_csv(rows), encoding="utf-8")
    if args.format == "json":
        sys.stdout.write(_dump_json({"family": args.family, "rows": rows}))
    elif args.format == "csv":
        sys.stdout.write(bench_csv(rows))
    else:
        sys.stdout.write(bench_text(rows))
    bad = [row["r"] for row in rows if row["status_dense"] != "optimal" or row["status_dec"] != "optimal"]
    return EXIT_ERROR if bad else EXIT_OK


def cmd_export_sdpa(args) -> int:
    prog = _as_program(io.load(args.file))
    sdp = build_sdp(prog, args.formulation)
    split = split_free(sdp.problem)
    text = export_sdpa(split, comment=f"{args.formulation} formulation, r={prog.r}")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    blocks = ([-split.cone.nonneg] if split.cone.nonneg else []) + list(split.cone.psd)
    report = {"formulation": args.formulation, "constraints": split.A.shape[0], "blocks": blocks,
              "file": args.out}
    if args.out:
        _emit(args, report, [f"wrote {args.out}: {report['constraints']} constraints, "
                             f"{len(sdp.cone.psd)} PSD block(s)"])
    elif args.format == "json":
        report["sdpa"] = text
        _emit(args, report, [])
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="chordsos", description="Chordal decomposition and completion of sparse SOS matrices.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help, formats=("text", "json")):
        s = sub.add_parser(name, help=help)
        s.add_argument("--format", choices=formats, default="text", help="output format")
        s.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
        s.set_defaults(func=func)
        return s

    s = command("check-chordal", cmd_check_chordal, "chordality, PEO and maximal cliques")
    s.add_argument("file")

    for name, func, what in (("decompose", cmd_decompose, "split into clique pieces"),
                             ("complete", cmd_complete, "fill the unspecified entries")):
        s = command(name, func, what)
        s.add_argument("file")
        mode = s.add_mutually_exclusive_group()
        mode.add_argument("--sos", action="store_true", help="polynomial SOS mode (default)")
        mode.add_argument("--psd", action="store_true", help="constant PSD mode")
        s.add_argument("--out", help="output directory (decompose) or file (complete)")

    s = command("solve", cmd_solve, "solve an SOS program (or an eigenvalue bound)")
    s.add_argument("file")
    s.add_argument("--formulation", choices=FORMULATIONS, default="dense")

    s = command("bench", cmd_bench, "arrow benchmark table", formats=("text", "json", "csv"))
    s.add_argument("--family", default="arrow")
    s.add_argument("--r", default="10,20,30,40,50", help="comma-separated dimensions")
    s.add_argument("--repeats", type=int, default=3, help="solves per timing (median reported)")
    s.add_argument("--csv", help="also write CSV here")

    s = command("export-sdpa", cmd_export_sdpa, "write the SDP in SDPA sparse format")
    s.add_argument("file")
    s.add_argument("--formulation", choices=FORMULATIONS, default="dense")
    s.add_argument("--out", help="output .dat-s path (default: standard output)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # usage errors and --help end here; report the status instead of exiting
        return exc.code if isinstance(exc.code, int) else EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (io.ProblemFileError, CliError, OSError, ValueError) as exc:
        print(f"chordsos {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except RuntimeError as exc:
        print(f"chordsos {args.command}: solver error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
