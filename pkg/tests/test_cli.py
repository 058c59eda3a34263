import json
import subprocess
import sys

import pytest

from otsbigm.bench import ExperimentSpec, rows_from_csv
from otsbigm.bigm import BigMVector
from otsbigm.cli import main


def test_bigm_then_solve(tmp_path, capsys):
    mfile = tmp_path / "m.json"
    assert main(["bigm", "--case", "fig1", "--method", "ksp", "--out", str(mfile)]) == 0
    M = BigMVector.from_json(mfile.read_text())
    assert M.M == {6: 6.0, 7: 6.0}
    out = tmp_path / "sol.json"
    assert main(["solve", "--case", "fig1", "--bigm", str(mfile), "--L", "2",
                 "--out", str(out)]) == 0
    assert json.loads(out.read_text())["objective"] == pytest.approx(2.5)


def test_bigm_csv_output(tmp_path):
    out = tmp_path / "m.csv"
    assert main(["bigm", "--case", "fig1", "--method", "knn", "--r", "3", "--out", str(out)]) == 0
    assert out.read_text().startswith("branch,from,to,M,method")


def test_validate_prints_table(capsys):
    assert main(["validate", "--case", "fig1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "branch,from,to,M,M_opt,ratio,flagged"
    assert len(lines) == 3 and all(line.endswith(",0") for line in lines[1:])


def test_bench_writes_csv(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(ExperimentSpec(case="fig1", instance_count=2, methods=("lwp", "ksp"),
                                   L=2).to_json())
    out = tmp_path / "rows.csv"
    assert main(["bench", "--spec", str(spec), "--out", str(out)]) == 0
    rows = rows_from_csv(out.read_text())
    assert len(rows) == 4 and all(r.solved for r in rows)


def test_bad_case_exits_with_error(capsys):
    assert main(["solve", "--case", "nowhere"]) == 2
    assert "error" in capsys.readouterr().err


def test_module_entry_point():
    done = subprocess.run([sys.executable, "-m", "otsbigm", "--help"], capture_output=True,
                          text=True, check=True)
    assert "bigm" in done.stdout and "bench" in done.stdout
