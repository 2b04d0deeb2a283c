import csv
import io as _io
import json

import pytest

from chordsos import fixtures, io
from chordsos.cli import main
from chordsos.sdpa import parse_sdpa
from chordsos.sosgram import is_sos

from conftest import inconsistent_partial


def fx(name):
    return str(fixtures.path(f"{name}.json"))


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(capsys, *argv):
    code, out, _ = run(capsys, *argv, "--format", "json")
    return code, json.loads(out)


def test_check_chordal(capsys, tmp_path):
    code, rep = run_json(capsys, "check-chordal", fx("eq3"))
    assert code == 0 and rep["chordal"] and rep["cliques"] == [[1, 2], [2, 3]]
    code, rep = run_json(capsys, "check-chordal", fx("arrow_r5"))
    assert rep["cliques"] == [[1, k] for k in range(2, 6)]
    cyc = tmp_path / "c4.json"
    cyc.write_text(json.dumps({"schema_version": 1, "kind": "poly_matrix", "nvars": 0, "r": 4,
                               "pattern": [[1, 2], [2, 3], [3, 4], [1, 4]],
                               "entries": [{"i": i, "j": i, "terms": [[[], 1.0]]} for i in range(1, 5)]}))
    code, rep = run_json(capsys, "check-chordal", str(cyc))
    assert code == 0 and not rep["chordal"] and rep["extension"] == [[2, 4]]
    code, out, _ = run(capsys, "check-chordal", fx("eq3"))
    assert "chordal: yes" in out and "{1,2} {2,3}" in out


def test_decompose_sos(capsys, tmp_path):
    code, rep = run_json(capsys, "decompose", fx("eq3"), "--sos", "--out", str(tmp_path))
    assert code == 0 and rep["ok"] and rep["reassembly_residual"] <= 1e-6
    assert [p["clique"] for p in rep["pieces"]] == [[1, 2], [2, 3]]
    pieces = [io.load(tmp_path / f"piece_{k}.json").payload for k in (1, 2)]
    total = pieces[0].inflate((1, 2), 3) + pieces[1].inflate((2, 3), 3)
    assert total.max_coeff_diff(io.load(fx("eq3")).payload) <= 1e-6


def test_decompose_psd(capsys, tmp_path):
    code, rep = run_json(capsys, "decompose", fx("eq1"), "--psd", "--out", str(tmp_path))
    assert code == 0 and rep["ok"] and rep["reassembly_residual"] == 0.0
    assert rep["pieces"][0]["matrix"] == [[2.0, 1.0], [1.0, 0.5]]
    assert rep["pieces"][1]["matrix"] == [[0.5, 1.0], [1.0, 2.0]]
    assert (tmp_path / "piece_2.json").exists()


def test_decompose_infeasible_exit_2(capsys, tmp_path):
    f = tmp_path / "bad.json"
    f.write_text(json.dumps({"schema_version": 1, "kind": "poly_matrix", "nvars": 1, "r": 3,
                             "pattern": [[1, 2], [2, 3]],
                             "entries": [{"i": 1, "j": 1, "terms": [[[0], 1.0]]},
                                         {"i": 1, "j": 2, "terms": [[[0], 1.0]]},
                                         {"i": 2, "j": 2, "terms": [[[0], 1.0]]},
                                         {"i": 2, "j": 3, "terms": [[[0], 1.0]]},
                                         {"i": 3, "j": 3, "terms": [[[0], 1.0]]}]}))
    code, rep = run_json(capsys, "decompose", str(f), "--sos")
    assert code == 2 and rep["infeasible"] and rep["dense_feasible"] is False
    assert "dense Gram" in rep["message"]


def test_complete_psd(capsys, tmp_path):
    out = tmp_path / "w.json"
    code, rep = run_json(capsys, "complete", fx("eq2"), "--psd", "--out", str(out))
    assert code == 0 and rep["matrix"] == [[2.0, 1.0, 2.0], [1.0, 0.5, 1.0], [2.0, 1.0, 2.0]]
    assert rep["lambda_min"] >= -1e-9
    assert io.load(out).payload.entry(1, 3).coeff(()) == 2.0


def test_complete_sos(capsys, tmp_path):
    out = tmp_path / "f.json"
    code, rep = run_json(capsys, "complete", fx("eq5"), "--out", str(out))
    assert code == 0 and rep["ok"] and rep["is_sos"] and rep["agreement_residual"] <= 1e-6
    assert list(rep["fill"]) == ["1,3"]
    assert is_sos(io.load(out).payload)


def test_complete_clique_failure_exit_2(capsys, tmp_path):
    doc = json.loads(fixtures.path("eq5.json").read_text())
    doc["entries"][2]["terms"] = [[[0], -1.0]]
    f = tmp_path / "neg.json"
    f.write_text(json.dumps(doc))
    code, rep = run_json(capsys, "complete", str(f), "--sos")
    assert code == 2 and rep["clique"] == 1 and rep["nodes"] == [1, 2]


def test_complete_inconsistent_exit_2(capsys, tmp_path):
    f = tmp_path / "inc.json"
    io.dump(inconsistent_partial(), f)
    code, rep = run_json(capsys, "complete", str(f))
    assert code == 2 and rep["pair"] == [1, 2] and rep["margin"] < 0


@pytest.mark.parametrize("formulation,gamma", [("dense", -0.8516), ("decomposed", -0.8516)])
def test_solve_arrow(capsys, formulation, gamma):
    code, rep = run_json(capsys, "solve", fx("arrow_r10"), "--formulation", formulation)
    assert code == 0 and rep["ok"] and rep["status"] == "optimal"
    assert rep["objective"] == pytest.approx(gamma, abs=1e-3)
    assert rep["certificate"]["supported_on_pattern"]
    blocks = rep["certificate"]["blocks"]
    assert blocks == ([30] if formulation == "dense" else [6] * 9)


def test_solve_program_file(capsys, tmp_path):
    from chordsos.sosprog import eig_bound_program
    f = tmp_path / "prog.json"
    io.dump(eig_bound_program(io.load(fx("eq3")).payload), f)
    code, rep = run_json(capsys, "solve", str(f))
    assert code == 0 and len(rep["u"]) == 1


def test_json_output_is_deterministic(capsys):
    runs = []
    for _ in range(2):
        code, rep = run_json(capsys, "solve", fx("conservatism"), "--formulation", "decomposed")
        rep.pop("timing")
        runs.append(json.dumps(rep, sort_keys=True))
    assert runs[0] == runs[1]
    a = run(capsys, "complete", fx("eq5"), "--format", "json")[1]
    b = run(capsys, "complete", fx("eq5"), "--format", "json")[1]
    assert a == b


def test_bench(capsys, tmp_path):
    path = tmp_path / "b.csv"
    code, out, _ = run(capsys, "bench", "--family", "arrow", "--r", "2,4", "--repeats", "1", "--csv", str(path))
    assert code == 0
    text_rows = [line.split() for line in out.strip().splitlines()[1:]]
    csv_rows = list(csv.reader(_io.StringIO(path.read_text())))
    assert csv_rows[0] == ["r", "gamma_dense", "gamma_dec", "t_dense", "t_dec"]
    assert len(text_rows) == len(csv_rows) - 1 == 2
    for t, c in zip(text_rows, csv_rows[1:]):
        assert int(t[0]) == int(c[0])
        # gamma columns agree between the two renderings
        assert float(t[1]) == pytest.approx(float(c[1]), abs=1e-6)
        assert float(t[2]) == pytest.approx(float(c[2]), abs=1e-6)
    code, out, _ = run(capsys, "bench", "--r", "2", "--repeats", "1")
    assert code == 0 and len(out.strip().splitlines()) == 2


def test_export_sdpa(capsys, tmp_path):
    out = tmp_path / "a.dat-s"
    code, rep = run_json(capsys, "export-sdpa", fx("arrow_r10"), "--out", str(out))
    assert code == 0 and rep["blocks"] == [-2, 30]
    s = parse_sdpa(out.read_text())
    assert s.blocks == (-2, 30) and s.m == rep["constraints"]
    code, rep = run_json(capsys, "export-sdpa", fx("arrow_r10"), "--formulation", "decomposed")
    # one PSD block per maximal clique {1, k}
    assert rep["blocks"] == [-2] + [6] * 9
    assert parse_sdpa(rep["sdpa"]).blocks == (-2,) + (6,) * 9


def test_empty_program_exit_1(capsys, tmp_path):
    f = tmp_path / "empty.json"
    f.write_text(json.dumps({"schema_version": 1, "kind": "sos_program", "nvars": 1, "r": 1, "pattern": [],
                             "w": [], "matrices": []}))
    code, _, err = run(capsys, "export-sdpa", str(f))
    assert code == 1 and "nonempty" in err


def test_usage_and_parse_errors_exit_1(capsys, tmp_path):
    assert main(["solve", fx("eq3"), "--formulation", "sparse"]) == 1
    assert main([]) == 1
    f = tmp_path / "broken.json"
    f.write_text('{"schema_version": 1,,}')
    code, _, err = run(capsys, "check-chordal", str(f))
    assert code == 1 and "line 1, column 22" in err
    code, _, err = run(capsys, "check-chordal", str(tmp_path / "missing.json"))
    assert code == 1
