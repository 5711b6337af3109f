from __future__ import annotations

import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from fracrelax.cli import REPORT_COLUMNS, RunConfig, default_problem_path, main
from fracrelax.errors import FracRelaxError

ROOT = Path(__file__).resolve().parents[1]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestRunConfig:
    def test_validation(self, tmp_path):
        with pytest.raises(FracRelaxError):
            RunConfig("solve-x")
        with pytest.raises(FracRelaxError):
            RunConfig("solve-p", grid=1)
        with pytest.raises(FracRelaxError):
            RunConfig("solve-p", seed=2**64)
        with pytest.raises(FracRelaxError):
            RunConfig("solve-p", problem=tmp_path / "missing.json")
        assert RunConfig("verify", seed=2**64 - 1).seed == 2**64 - 1


class TestCommands:
    def test_relax_exp(self, tmp_path):
        assert main(["--command", "relax-exp", "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "report.csv")
        assert tuple(rows[0]) == REPORT_COLUMNS
        assert [int(r[0]) for r in rows[1:]] == [4, 16, 64, 256]
        gaps = [float(r[3]) for r in rows[1:]]
        assert all(b < a for a, b in zip(gaps, gaps[1:]))
        assert (tmp_path / "solution.csv").exists() and (tmp_path / "timings.csv").exists()
        assert "experiment passed" in (tmp_path / "summary.txt").read_text()

    def test_with_runtime(self, tmp_path):
        assert main(["--command", "relax-exp", "--n-list", "64,256", "--with-runtime", "--out", str(tmp_path)]) == 0
        assert read_csv(tmp_path / "report.csv")[0][-1] == "runtime_ms"

    def test_deterministic(self, tmp_path):
        for d in ("a", "b"):
            assert main(["--command", "relax-exp", "--seed", "5", "--out", str(tmp_path / d)]) == 0
        assert (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()
        assert (tmp_path / "a" / "solution.csv").read_bytes() == (tmp_path / "b" / "solution.csv").read_bytes()

    @pytest.mark.parametrize("command", ["solve-p", "solve-rp"])
    def test_solve(self, command, tmp_path):
        assert main(["--command", command, "--grid", "4", "--out", str(tmp_path)]) == 0
        sol = read_csv(tmp_path / "solution.csv")
        assert sol[0] == ["t", "x1", "u1_1"] and len(sol) == 6
        assert "aggregate =" in (tmp_path / "summary.txt").read_text()

    def test_experiment_failure(self, tmp_path):
        data = json.loads(default_problem_path().read_text())
        data["solver"]["gap_tol"] = 1e-9
        f = tmp_path / "p.json"
        f.write_text(json.dumps(data))
        assert main(["--problem", str(f), "--command", "relax-exp", "--n-list", "4,16", "--out", str(tmp_path)]) == 2

    def test_errors(self, tmp_path, capsys):
        data = json.loads(default_problem_path().read_text())
        data["beta"] = 0.6
        f = tmp_path / "p.json"
        f.write_text(json.dumps(data))
        assert main(["--problem", str(f), "--command", "solve-p", "--out", str(tmp_path)]) == 1
        assert "(H1.3)" in capsys.readouterr().err
        assert main(["--command", "relax-exp", "--n-list", "16,4", "--out", str(tmp_path)]) == 1

    def test_verify(self, tmp_path, capsys):
        assert main(["--command", "verify", "--out", str(tmp_path)]) == 0
        assert "PASS" in capsys.readouterr().out
        rows = read_csv(tmp_path / "report.csv")
        assert rows[0] == ["check", "error", "tol", "passed"] and all(r[3] == "1" for r in rows[1:])

    def test_bench(self, tmp_path):
        assert main(["--command", "bench", "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "timings.csv")
        assert rows[0] == ["module", "runtime_ms"] and all(float(r[1]) >= 0 for r in rows[1:])

    def test_module_entry_point(self, tmp_path):
        out = subprocess.run([sys.executable, "-m", "fracrelax", "--command", "bench", "--out", str(tmp_path)],
                             capture_output=True, text=True)
        assert out.returncode == 0


def test_bundled_problem_matches_repository_copy():
    assert (ROOT / "problems" / "benchmark.json").read_bytes() == default_problem_path().read_bytes()
