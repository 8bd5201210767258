import json

import pytest

from dmfactor.cli import run


def invoke(capsys, *argv):
    code = run(list(argv))
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


def test_check_algebra_fixture(capsys):
    code, doc = invoke(capsys, "check-algebra", "heisenberg")
    assert code == 0 and doc["status"] == "ok" and doc["command"] == "check-algebra"


def test_haar_check_det_one(capsys):
    code, doc = invoke(capsys, "haar-check", "fixtures/axb.toml")
    assert code == 0
    assert '"1"' in json.dumps(doc["report"])


def test_malformed_toml_is_bad_input(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("dim = [\n")
    assert run(["check-algebra", str(bad)]) == 2


def test_unknown_option_is_bad_input(capsys):
    assert run(["entire-q", "--strip", "-1"]) == 2


def test_bad_tau_is_bad_input(capsys):
    assert run(["weights", "--tau", "power:-2"]) == 2


def test_output_is_deterministic(capsys):
    a = invoke(capsys, "coords", "axb", "--point", "0.3,-1.2")
    b = invoke(capsys, "coords", "axb", "--point", "0.3,-1.2")
    assert a == b and a[0] == 0


def test_factor1d_writes_report_and_csv(tmp_path, capsys):
    rep = tmp_path / "rep.toml"
    rep.write_text("generator = [[1.0, 0.0], [0.0, -1.0]]\n")
    out = tmp_path / "out"
    assert run(["--out", str(out), "factor1d", "--rep", str(rep), "--random", "2"]) == 0
    doc = json.loads((out / "report.json").read_text())
    assert doc["status"] == "ok"
    assert (out / "chi.csv").exists() and (out / "orbit_0.csv").exists()


def test_factor1d_tight_tolerance_fails(tmp_path, capsys):
    rep = tmp_path / "rep.toml"
    rep.write_text("generator = [[1.0, 0.0], [0.0, -1.0]]\n")
    code, doc = invoke(capsys, "factor1d", "--rep", str(rep), "--random", "1", "--tol", "1e-12")
    assert code == 1 and doc["status"] == "failed" and "failure" in doc["report"]


@pytest.mark.parametrize(
    "argv",
    [
        ("factor-group", "--algebra", "axb", "--random", "1"),
        ("pushforward-check", "--algebra", "axb", "--lambda-ladder", "0.5,4.5"),
    ],
)
def test_group_commands_pass(tmp_path, argv):
    out = tmp_path / "out"
    assert run(["--out", str(out)] + list(argv)) == 0
    assert json.loads((out / "report.json").read_text())["status"] == "ok"
