import csv
import io
import json

import pytest

from condbound import cli, figures


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_bound_mean_variance(capsys):
    assert cli.run(["bound", "--prop", "mean-variance", "--mu", "0", "--sigma", "1",
                    "--t", "-1"]) == 0
    assert capsys.readouterr().out.strip() == "1.0"


def test_bound_json_envelope(capsys, tmp_path):
    out = tmp_path / "env.json"
    assert cli.run(["bound", "--prop", "symmetric", "--mu", "0", "--sigma", "1", "--t", "0.5",
                    "--json", str(out)]) == 0
    env = json.loads(out.read_text())
    assert env["status"] == "divergent"
    assert env["value"] is None
    assert capsys.readouterr().out.strip() == "inf"


def test_bound_bad_input_exit_code(capsys):
    assert cli.run(["bound", "--prop", "mean-variance", "--mu", "0", "--sigma", "-1",
                    "--t", "0"]) == 2
    assert "sigma" in capsys.readouterr().err


def test_bound_missing_argument(capsys):
    assert cli.run(["bound", "--prop", "mean-variance", "--mu", "0"]) == 2


def test_bound_from_instance(tmp_path, capsys):
    path = tmp_path / "inst.json"
    path.write_text(json.dumps({"moments": [1, 0, 1], "event": {"type": "ge", "threshold": -1},
                                "objective": {"type": "identity"}}))
    assert cli.run(["bound", "--instance", str(path)]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(1.0, abs=1e-6)


def test_verify_closedform(capsys):
    assert cli.run(["verify", "--suite", "closedform", "--seed", "42", "--n", "3",
                    "--points", "2049"]) == 0
    rows = rows_of(capsys.readouterr().out)
    assert rows and all(r["status"] == "pass" for r in rows)


def test_sweep_figure3_divergent_rows(capsys):
    assert cli.run(["sweep", "--figure", "3", "--m", "2", "--structure", "none"]) == 0
    rows = rows_of(capsys.readouterr().out)
    assert "c" not in rows[0]
    for r in rows:
        if float(r["t"]) >= 0:
            assert r["status"] == "divergent"
        else:
            assert r["status"] == "tight"
    assert all(r["wall_ms"] == "" for r in rows)


def test_sweep_output_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    cli.run(["sweep", "--figure", "2", "--m", "2", "--out", str(a)])
    cli.run(["sweep", "--figure", "2", "--m", "2", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_timings_fill_column(capsys):
    cli.run(["sweep", "--figure", "3", "--m", "2", "--structure", "none", "--timings"])
    rows = rows_of(capsys.readouterr().out)
    assert all(float(r["wall_ms"]) >= 0 for r in rows)


def test_oracle_command(capsys):
    assert cli.run(["oracle", "--mu", "0", "--sigma", "1", "--t", "-1", "--points", "4097"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(1.0, abs=1e-3)


def test_pricing(capsys):
    assert cli.run(["pricing", "--mu", "1", "--sigma", "0.5"]) == 0
    p, v = map(float, capsys.readouterr().out.split())
    assert 0 < p < 1 and v > 1


def test_newsvendor(capsys):
    assert cli.run(["newsvendor", "--rho", "0.95", "--threshold", "4", "--q-points", "3"]) == 0
    rows = rows_of(capsys.readouterr().out)
    assert len(rows) == 3
    for r in rows:
        assert float(r["bound"]) >= float(r["ground_truth"]) - 1e-6


def test_fmt():
    assert cli.fmt(1.0) == "1.0"
    assert cli.fmt(float("inf")) == "inf"
    assert cli.fmt(2.0 / 7.0) == "0.285714286"


def test_figure_two_truth_column():
    pts = figures.uniform_tail_curves((2,), events=(0.5,), step=1.5)
    assert [p.x for p in pts] == [0.5, 2.0, 3.5, 5.0]
    for p in pts:
        assert p.result.value >= p.truth - 1e-6


def test_normal_conditional_mean():
    assert figures.normal_conditional_mean(0.0) == pytest.approx(0.7978845608, abs=1e-9)
