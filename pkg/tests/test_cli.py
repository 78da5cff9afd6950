import json

import pytest

from defectkit import linalg as la
from defectkit.cli import main, parse_shapes
from defectkit.models import jordan_nilpotent, random_block3, random_structured


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, json.loads(out.out), out.err


def write(tmp_path, name, doc):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


# -- analyze ------------------------------------------------------------------

def test_analyze_jordan(tmp_path, capsys):
    path = write(tmp_path, "j3.json", la.matrix_to_json(jordan_nilpotent(3)))
    code, doc, _ = run(capsys, "analyze", path)
    assert code == 0
    r = doc["results"]
    assert r["degree"] == 3
    assert r["defectDims"] == {"D_T": 1, "D_T*": 1}
    assert doc["tolerances"]["accept"] == 1e-9


def test_analyze_unitary_is_vacuous(tmp_path, capsys):
    path = write(tmp_path, "u.json", la.matrix_to_json([[0, 1], [1, 0]]))
    code, doc, _ = run(capsys, "analyze", path)
    r = doc["results"]
    assert code == 0 and r["defectDims"] == {"D_T": 0, "D_T*": 0}
    assert r["degree"] == "vacuous" and r["purelyContractive"] == "vacuous"
    assert r["unitaryPartDim"] == {"value": 2, "heuristic": True}


def test_analyze_scalar_half(tmp_path, capsys):
    path = write(tmp_path, "s.json", la.matrix_to_json([[0.5]]))
    code, doc, _ = run(capsys, "analyze", path)
    r = doc["results"]
    assert r["degree"] == f"not polynomial up to {r['pmax']}"


def test_analyze_rejects_non_contraction(tmp_path, capsys):
    path = write(tmp_path, "big.json", la.matrix_to_json([[1.5]]))
    code, doc, _ = run(capsys, "analyze", path)
    assert code == 3 and doc["kind"] == "input"


def test_analyze_missing_file_and_bad_json(tmp_path, capsys):
    code, doc, _ = run(capsys, "analyze", str(tmp_path / "nope.json"))
    assert code in (2, 3) and "error" in doc
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    code, doc, _ = run(capsys, "analyze", str(bad))
    assert code in (2, 3) and doc["exitCode"] == code


# -- factorize ----------------------------------------------------------------

def test_factorize_three_block3_seed5(tmp_path, capsys):
    path = write(tmp_path, "b.json", {"matrix": la.matrix_to_json(random_block3((2, 2, 2), 5)), "split": [2, 2, 2]})
    code, doc, _ = run(capsys, "factorize", path, "--mode", "three")
    assert code == 0
    assert doc["results"]["factorization3"]["residual"] < 1e-9
    assert all(v["ok"] for v in doc["verdicts"].values())


def test_factorize_both_emits_dims(tmp_path, capsys):
    path = write(tmp_path, "s.json", random_structured(1, 2, 1, 13, jordan=True).to_json())
    code, doc, _ = run(capsys, "factorize", path, "--mode", "both")
    assert code == 0
    rep = doc["results"]["dimReport"]
    assert {"M", "Mtilde", "equal"} == set(rep)


def test_factorize_two_dense(tmp_path, capsys):
    t = random_block3((2, 0, 2), 3)
    path = write(tmp_path, "t.json", la.matrix_to_json(t))
    code, doc, _ = run(capsys, "factorize", path, "--mode", "two", "--split", "2")
    assert code == 0
    assert {"J", "tau", "tauStar"} <= set(doc["results"]["factorization2"])


def test_factorize_two_needs_split(tmp_path, capsys):
    path = write(tmp_path, "t.json", la.matrix_to_json(la.zeros(2, 2)))
    code, doc, _ = run(capsys, "factorize", path, "--mode", "two")
    assert code == 2


def test_factorize_non_triangular_is_input_error(tmp_path, capsys):
    path = write(tmp_path, "t.json", la.matrix_to_json([[0, 0], [0.5, 0]]))
    code, doc, _ = run(capsys, "factorize", path, "--mode", "two", "--split", "1")
    assert code == 3


def test_factorize_corollary_needs_structured(tmp_path, capsys):
    path = write(tmp_path, "t.json", la.matrix_to_json(la.zeros(3, 3)))
    code, _, _ = run(capsys, "factorize", path, "--mode", "corollary")
    assert code == 2


def test_factorize_impossible_tol_exits_4(tmp_path, capsys):
    path = write(tmp_path, "b.json", {"matrix": la.matrix_to_json(random_block3((1, 1, 1), 2)), "split": [1, 1, 1]})
    code, doc, _ = run(capsys, "factorize", path, "--tol", "1e-20")
    assert code == 4
    assert "factorization3" in doc["results"]
    assert doc["tolerances"]["accept"] == 1e-20


def test_env_tolerance_is_echoed(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("DEFECTKIT_TOL", "1e-7")
    path = write(tmp_path, "j.json", la.matrix_to_json(jordan_nilpotent(2)))
    _, doc, _ = run(capsys, "analyze", path)
    assert doc["tolerances"]["accept"] == 1e-7
    _, doc, _ = run(capsys, "analyze", path, "--tol", "1e-6")
    assert doc["tolerances"]["accept"] == 1e-6


def test_unknown_flag_is_json_parse_error(capsys):
    code, doc, _ = run(capsys, "suite", "--bogus")
    assert code == 2 and doc["kind"] == "parse"


# -- gen ----------------------------------------------------------------------

def test_gen_jordan(capsys):
    code, doc, _ = run(capsys, "gen", "jordan", "--m", "4")
    assert code == 0
    assert la.matrix_from_json(doc).shape == (4, 4)


def test_gen_block3_round_trip(tmp_path, capsys):
    out = tmp_path / "b.json"
    code, doc, _ = run(capsys, "gen", "block3", "--dims", "2,2,2", "--seed", "5", "--out", str(out))
    assert code == 0 and doc["split"] == [2, 2, 2]
    back = la.matrix_from_json(json.loads(out.read_text())["matrix"])
    assert back.tobytes() == random_block3((2, 2, 2), 5).tobytes()


def test_gen_structured_then_analyze(tmp_path, capsys):
    out = tmp_path / "s.json"
    run(capsys, "gen", "structured", "--dims", "1,3,1", "--jordan", "--out", str(out))
    code, doc, _ = run(capsys, "analyze", str(out))
    assert code == 0 and doc["results"]["degree"] == 3


def test_gen_counterexample(capsys):
    code, doc, _ = run(capsys, "gen", "counterexample", "--m", "2", "--mdim", "2")
    assert code == 0 and doc["degree"] == 0
    assert {"N", "V1", "V2"} <= set(doc)


def test_gen_counterexample_infeasible(capsys):
    code, _, _ = run(capsys, "gen", "counterexample", "--k", "3", "--mdim", "1")
    assert code == 2


# -- suite --------------------------------------------------------------------

def test_parse_shapes():
    assert parse_shapes("1,1,1;2,2,2") == [(1, 1, 1), (2, 2, 2)]
    assert parse_shapes(None) is None


def test_suite_smoke(capsys):
    code, doc, _ = run(capsys, "suite", "--seeds", "1", "--shapes", "1,1,1")
    assert code == 0 and doc["results"]["passed"]
    assert "wallTime" not in doc


def test_suite_is_byte_deterministic(capsys):
    main(["suite", "--seeds", "3", "--max-dim", "3"])
    first = capsys.readouterr().out
    main(["suite", "--seeds", "3", "--max-dim", "3"])
    assert capsys.readouterr().out == first


def test_suite_fault_gives_replay(capsys):
    code, doc, err = run(capsys, "suite", "--seeds", "2", "--property", "factor2", "--fault")
    assert code == 1
    assert doc["results"]["failures"]
    line = doc["results"]["failures"][0]["replay"]
    assert "--only-seed" in line and "replay" in err
    # the replay line reproduces the failure on its own
    argv = line.split()[1:]
    code, doc, _ = run(capsys, *argv)
    assert code == 1


def test_suite_timing_is_opt_in(capsys):
    _, doc, _ = run(capsys, "suite", "--seeds", "1", "--property", "numeric", "--timing")
    assert isinstance(doc["wallTime"], float)


def test_suite_unknown_property(capsys):
    code, _, _ = run(capsys, "suite", "--seeds", "1", "--property", "nope")
    assert code == 2


@pytest.mark.parametrize("argv", [["gen", "block3", "--dims", "1,1"], ["gen", "structured", "--dims", "a,b,c"]])
def test_bad_dims(capsys, argv):
    code, _, _ = run(capsys, *argv)
    assert code == 2
