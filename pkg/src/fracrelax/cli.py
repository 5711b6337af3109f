"""Command line entry point.

Commands
--------
``solve-p``    best atom-valued control on ``--grid`` cells
``solve-rp``   relaxed optimum on ``--grid`` cells
``relax-exp``  relaxed optimum plus chattering controls for each ``--n-list`` entry
``verify``     self-checks, printed as a pass/fail matrix
``bench``      per-module timings

Outputs go to ``--out``: ``report.csv``, ``solution.csv`` and ``summary.txt``
for the solve commands, ``timings.csv`` for ``bench`` and ``relax-exp``.
``report.csv`` of ``relax-exp`` has the columns
``N, traj_err_sup, weak_norm_dist, gap, window_sup`` (plus ``runtime_ms``
with ``--with-runtime``; wall times are otherwise kept out of it so that
repeated runs are byte-identical).

Exit status: 0 on success, 2 when an experiment or check fails, 1 on errors.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from fracrelax.config import load_problem
from fracrelax.errors import FracRelaxError
from fracrelax.optimizer import SolveReport, relaxation_experiment, solve_P, solve_RP
from fracrelax.problem import ProblemSpec
from fracrelax.verification import run_checks, run_timings

__all__ = ["COMMANDS", "RunConfig", "build_parser", "parse_args", "run", "main"]

log = logging.getLogger("fracrelax")

COMMANDS = ("solve-p", "solve-rp", "relax-exp", "verify", "bench")
REPORT_COLUMNS = ("N", "traj_err_sup", "weak_norm_dist", "gap", "window_sup")
EXIT_OK, EXIT_ERROR, EXIT_FAILED = 0, 1, 2


@dataclass
class RunConfig:
    command: str
    problem: Path | None = None
    grid: int | None = None
    n_list: list = field(default_factory=list)
    seed: int = 0
    tol: float | None = None
    out: Path = Path("out")
    with_runtime: bool = False

    def __post_init__(self) -> None:
        if self.command not in COMMANDS:
            raise FracRelaxError(f"unknown command {self.command!r}; choose from {', '.join(COMMANDS)}")
        if self.grid is not None and self.grid < 2:
            raise FracRelaxError(f"--grid must be at least 2, got {self.grid}")
        if not -(2**63) <= self.seed < 2**64:
            raise FracRelaxError("--seed must fit in 64 bits")
        if self.problem is not None and not Path(self.problem).is_file():
            raise FracRelaxError(f"problem file {self.problem} is not readable")
        self.out = Path(self.out)


def default_problem_path() -> Path:
    return Path(str(resources.files("fracrelax") / "problems" / "benchmark.json"))


def _n_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracrelax", description="Relaxation experiments for fractional Sobolev control problems.")
    p.add_argument("--problem", type=Path, help="problem JSON (default: bundled benchmark)")
    p.add_argument("--command", required=True, choices=COMMANDS)
    p.add_argument("--grid", type=int, help="number of cells for solve-p / solve-rp and the relaxed grid of relax-exp")
    p.add_argument("--n-list", type=_n_list, default=None, help="ascending block counts, e.g. 4,16,64,256")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=None, help="fixed-point tolerance of the state solver")
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--with-runtime", action="store_true", help="append runtime_ms to report.csv")
    p.add_argument("--log-level", default="WARNING")
    return p


def parse_args(argv=None) -> tuple[RunConfig, str]:
    ns = build_parser().parse_args(argv)
    cfg = RunConfig(
        command=ns.command,
        problem=ns.problem,
        grid=ns.grid,
        n_list=ns.n_list or [],
        seed=ns.seed,
        tol=ns.tol,
        out=ns.out,
        with_runtime=ns.with_runtime,
    )
    return cfg, ns.log_level


# {{{ writers


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_solution(path: Path, problem: ProblemSpec, rep: SolveReport) -> None:
    """Trajectory at the nodes and the control of the cell starting at each node."""
    grid = rep.trajectory.grid
    x = rep.trajectory.values
    u = rep.controls.values
    header = ["t"] + [f"x{c + 1}" for c in range(problem.n)]
    header += [f"u{i + 1}_{c + 1}" for i in range(problem.r) for c in range(problem.m)]
    rows = []
    for j, t in enumerate(grid.nodes):
        cell = min(j, grid.N - 1)
        rows.append([t, *x[j], *u[:, cell, :].ravel()])
    _write_csv(path, header, rows)


def _summary(lines: list[str], rep: SolveReport) -> None:
    if rep.J is not None:
        lines.append("J = " + ", ".join(_fmt(v) for v in rep.J))
    if rep.J_star is not None:
        lines.append("J** = " + ", ".join(_fmt(v) for v in rep.J_star))
    lines.append(f"aggregate = {_fmt(rep.aggregate)}")
    if rep.gap is not None:
        lines.append(f"gap = {_fmt(rep.gap)}")
    lines.append(f"iterations = {rep.iterations}")
    if rep.stalled:
        lines.append("line search stalled; incumbent reported")


# }}}


def _solver_tol(cfg: RunConfig, problem: ProblemSpec) -> float:
    return float(cfg.tol if cfg.tol is not None else problem.solver.get("tol", 1e-12))


def _run_solve(cfg: RunConfig, problem: ProblemSpec, relaxed: bool) -> int:
    N = cfg.grid or int(problem.solver.get("grid", 64))
    tol = _solver_tol(cfg, problem)
    if relaxed:
        rep = solve_RP(problem, N, seed=cfg.seed, tol=tol)
    else:
        rep = solve_P(problem, N, seed=cfg.seed, tol=tol)
    _write_csv(cfg.out / "report.csv", ["step", "aggregate"], list(enumerate(rep.history)))
    _write_solution(cfg.out / "solution.csv", problem, rep)
    lines = [f"command = {cfg.command}", f"N = {N}"]
    _summary(lines, rep)
    (cfg.out / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


def _run_experiment(cfg: RunConfig, problem: ProblemSpec) -> int:
    n_list = cfg.n_list or list(problem.solver.get("n_list", [4, 16, 64, 256]))
    rp_grid = cfg.grid or int(problem.solver.get("grid", n_list[0]))
    exp = relaxation_experiment(
        problem,
        n_list,
        rp_grid=rp_grid,
        sub=int(problem.solver.get("sub", 2)),
        gap_tol=float(problem.solver.get("gap_tol", 1e-2)),
        seed=cfg.seed,
        tol=_solver_tol(cfg, problem),
    )
    header = list(REPORT_COLUMNS) + (["runtime_ms"] if cfg.with_runtime else [])
    rows = []
    for r in exp.rows:
        row = [r.N, r.traj_err_sup, r.weak_norm_dist, r.gap, r.window_sup]
        rows.append(row + ([r.runtime_ms] if cfg.with_runtime else []))
    _write_csv(cfg.out / "report.csv", header, rows)
    _write_csv(cfg.out / "timings.csv", ["N", "runtime_ms"], [(r.N, r.runtime_ms) for r in exp.rows])
    _write_solution(cfg.out / "solution.csv", problem, exp.rp)
    Ns = np.array([r.N for r in exp.rows], dtype=float)
    gaps = np.array([r.gap for r in exp.rows])
    C = float(np.sum(gaps / Ns) / np.sum(1.0 / Ns**2))
    lines = [f"command = {cfg.command}", f"relaxed grid = {rp_grid}", f"N_list = {n_list}"]
    _summary(lines, exp.rp)
    lines.append(f"fitted C in gap ~ C/N = {C:.6g}")
    for name, ok in exp.monotone.items():
        lines.append(f"{name} nonincreasing: {'yes' if ok else 'NO'}")
    lines.append(f"final gap <= {exp.gap_tol:g}: {'yes' if exp.final_gap_ok else 'NO'}")
    lines.append("experiment " + ("passed" if exp.ok else "FAILED"))
    (cfg.out / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK if exp.ok else EXIT_FAILED


def _run_verify(cfg: RunConfig) -> int:
    results = run_checks(cfg.seed)
    width = max(len(r.name) for r in results)
    lines = [f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  err={r.error:.3e}  tol={r.tol:.1e}" for r in results]
    print("\n".join(lines))
    _write_csv(cfg.out / "report.csv", ["check", "error", "tol", "passed"],
               [(r.name, r.error, r.tol, r.passed) for r in results])
    (cfg.out / "summary.txt").write_text("\n".join(lines) + "\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


def _run_bench(cfg: RunConfig) -> int:
    timings = run_timings(cfg.seed)
    _write_csv(cfg.out / "timings.csv", ["module", "runtime_ms"], timings)
    for name, ms in timings:
        print(f"{name},{ms:.3f}")
    return EXIT_OK


def run(cfg: RunConfig) -> int:
    """Execute one command and write its artifacts; returns the exit status."""
    cfg.out.mkdir(parents=True, exist_ok=True)
    if cfg.command == "verify":
        return _run_verify(cfg)
    if cfg.command == "bench":
        return _run_bench(cfg)
    problem = load_problem(cfg.problem or default_problem_path())
    if cfg.command == "relax-exp":
        return _run_experiment(cfg, problem)
    return _run_solve(cfg, problem, relaxed=cfg.command == "solve-rp")


def main(argv=None) -> int:
    try:
        cfg, level = parse_args(argv)
        logging.basicConfig(level=getattr(logging, str(level).upper(), logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
        return run(cfg)
    except FracRelaxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
