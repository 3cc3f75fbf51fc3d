"""Command-line entry point: run a configured pipeline and write its artifacts.

Exit codes: 0 every enabled check passed, 1 a check failed, 2 the
configuration was rejected, 3 a solver failed (partial artifacts are kept).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .cell import (CellSolution, CellSolveError, continuation_nu, preset_theta_problem, solve_dsdt,
                   solve_theta_periodic, write_estimates_csv)
from .coefficients import validate_hypotheses
from .config import U64_MAX, ConfigError, RunConfig, load_config, serialize_config
from .evolve import EvolutionProblem, default_initial, run_full
from .fields import Grid, ScalarField, integral_mean, write_dsf1
from .homogenized import EllipticSolveError
from .verify import build_profile, convergence_study, psi_dictionary, snapshot_times

EXIT_PASS, EXIT_CHECK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3
REPORT_NAME = "report.json"

# acceptance thresholds applied by the pipelines
MASS_DRIFT_TOL = 1e-10
PROFILE_TOL = 1e-10
UNIFORM_BOUND_TOL = 1.1
MEAN_RATE_MIN = 0.4
CORRECTOR_RATIO_MAX = 2.0
REFINEMENT_MAX = 0.05


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    relation: str = "<="


@dataclass
class RunReport:
    config: RunConfig
    checks: list[Check] = field(default_factory=list)
    constants: dict[str, float] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    manifest: list[dict] = field(default_factory=list)
    solver_failure: str | None = None
    notes: list[str] = field(default_factory=list)

    def check(self, name: str, value: float, threshold: float, relation: str = "<=") -> bool:
        value = float(value)
        ok = bool(np.isfinite(value) and (value <= threshold if relation == "<=" else value >= threshold))
        self.checks.append(Check(name, value, float(threshold), ok, relation))
        return ok

    def flag(self, name: str, ok: bool) -> bool:
        self.checks.append(Check(name, 1.0 if ok else 0.0, 1.0, bool(ok), "=="))
        return ok

    @property
    def passed(self) -> bool:
        return self.solver_failure is None and all(c.passed for c in self.checks)

    @property
    def exit_code(self) -> int:
        if self.solver_failure is not None:
            return EXIT_SOLVER
        return EXIT_PASS if self.passed else EXIT_CHECK

    def to_json(self) -> dict:
        return {
            "config": self.config.as_dict(),
            "backend": kernels.BACKEND,
            "constants": self.constants,
            "checks": [c.__dict__ for c in self.checks],
            "passed": self.passed,
            "exit_code": self.exit_code,
            "solver_failure": self.solver_failure,
            "notes": self.notes,
            "timings_s": self.timings,
            "manifest": self.manifest,
        }


# -- helpers ----------------------------------------------------------------------

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def build_manifest(out: Path) -> list[dict]:
    """Every file under ``out`` except the report itself, with size and SHA-256."""
    entries = []
    for path in sorted(p for p in out.rglob("*") if p.is_file()):
        rel = path.relative_to(out).as_posix()
        if rel == REPORT_NAME:
            continue
        entries.append({"file": rel, "bytes": path.stat().st_size, "sha256": _sha256(path)})
    return entries


def _initial(cfg: RunConfig, grid: Grid) -> ScalarField:
    if cfg.initial == "constant":
        return ScalarField(grid, np.ones((grid.n, grid.n)))
    return default_initial(grid)


def _hypotheses(cfg: RunConfig, report: RunReport, preset, eps: float):
    hyp = validate_hypotheses(preset, eps)
    report.constants.update(gamma=hyp.gamma, Gtilde_thr=hyp.Gtilde_thr)
    return hyp


# -- pipelines ------------------------------------------------------------------------

def _simulate(cfg: RunConfig, out: Path, report: RunReport) -> None:
    preset = cfg.build_preset()
    grid = Grid(cfg.n)
    _hypotheses(cfg, report, preset, cfg.eps)
    prob = EvolutionProblem(preset, cfg.eps, grid, cfg.T_final, z0=_initial(cfg, grid), safety=cfg.safety,
                            operator=cfg.operator, snapshot_times=snapshot_times(cfg.T_final, cfg.eps,
                                                                                 cfg.per_period))
    traj = run_full(prob)
    traj.write_csv(out / "trajectory.csv")
    traj.write_snapshots(out / "snapshots.dsf1")
    report.constants.update(mass_drift=traj.mass_drift(), sup_l2=traj.sup_l2(), steps=len(traj.dt_series))
    if traj.failed:
        report.solver_failure = traj.message
        return
    report.check("mass_drift", traj.mass_drift(), MASS_DRIFT_TOL)


def _cell(cfg: RunConfig, out: Path, report: RunReport) -> None:
    preset = cfg.build_preset()
    grid = Grid(cfg.n)
    eps, t = cfg.eps, cfg.t_cell
    hyp = _hypotheses(cfg, report, preset, eps)
    p = preset_theta_problem(preset, t, eps, grid, m_theta=cfg.m_theta, substeps=cfg.substeps or None)
    sol, reps = continuation_nu(p, cfg.nu_schedule, cfg.tol_cell, hyp=hyp,
                                dsdt=lambda q, s: solve_dsdt(preset, t, eps, q, s, cfg.tol_cell))
    write_estimates_csv(out / "estimates.csv", reps)
    write_dsf1(out / "cell_solution.dsf1", sol.S)
    for rep in reps:
        report.flag(f"estimates_nu={rep.nu!r}", rep.passed)
    gaps = [r.gap_from_previous for r in reps if r.gap_from_previous is not None]
    if len(gaps) >= 2:
        report.flag("continuation_gap_decreasing", all(b < a for a, b in zip(gaps, gaps[1:])))
    # uniqueness: two seeded random warm starts reach the same periodic state
    rng = np.random.default_rng(cfg.seed)
    q = preset_theta_problem(preset, t, eps, grid, nu=cfg.nu_schedule[-1], m_theta=cfg.m_theta,
                             substeps=cfg.substeps or None)
    finals = []
    for _ in range(2):
        start = rng.standard_normal((grid.n, grid.n))
        warm = CellSolution(S=[ScalarField(grid, start - start.mean())], mu=0.0, nu=q.nu, lam=q.lam,
                            periodicity_residual=np.inf, iterations=0, converged=False)
        finals.append(solve_theta_periodic(q, cfg.tol_cell, warm_start=warm).values())
    spread = float(np.max(np.sqrt(np.mean((finals[0] - finals[1]) ** 2, axis=(1, 2)))))
    report.constants["warm_start_spread"] = spread
    report.check("warm_start_uniqueness", spread, 10 * cfg.tol_cell)


def _homogenize(cfg: RunConfig, out: Path, report: RunReport) -> None:
    preset = cfg.build_preset()
    grid = Grid(cfg.n)
    z0 = _initial(cfg, grid)
    tol = cfg.tol_elliptic if preset.regime == "long" else cfg.tol_cell
    profile = build_profile(preset, grid, z0, cfg.T_final, m_theta=cfg.m_theta, m_tau=cfg.m_tau,
                            n_t=cfg.n_t, tol=tol)
    profile.write_dumps(out / "profile")
    spread = profile.theta_mean_spread()
    mass_err = abs(float(np.mean(profile.total_mass())) - integral_mean(z0))
    res = float(np.max(profile.residuals)) if profile.residuals is not None else 0.0
    report.constants.update(theta_mean_spread=spread, mass_error=mass_err, max_residual=res)
    report.check("theta_constancy_of_mass", spread, PROFILE_TOL)
    report.check("mass_identity", mass_err, PROFILE_TOL)
    report.check("slice_residuals", res, tol)


def _study(cfg: RunConfig, out: Path, report: RunReport, corrector: bool):
    preset = cfg.build_preset()
    grid = Grid(cfg.n)
    _hypotheses(cfg, report, preset, min(cfg.eps_ladder))
    rep = convergence_study(preset, cfg.eps_ladder, psi_dictionary(cfg.T_final, preset.regime), grid,
                            cfg.T_final, z0=_initial(cfg, grid),
                            prepared=cfg.prepared and preset.regime == "mean", m_theta=cfg.m_theta,
                            m_tau=cfg.m_tau, n_t=cfg.n_t, per_period=cfg.per_period, corrector=corrector,
                            safety=cfg.safety)
    rep.write_csv(out / "convergence.csv")
    rep.write_summary_csv(out / "convergence_summary.csv")
    report.constants.update(uniform_bound=rep.uniform_bound, fitted_rate=rep.fitted_rate)
    report.notes.extend(rep.notes)
    if rep.partial:
        report.solver_failure = "; ".join(rep.notes) or "ladder member failed"
    return preset, rep


def _verify(cfg: RunConfig, out: Path, report: RunReport) -> None:
    preset, rep = _study(cfg, out, report, corrector=False)
    if report.solver_failure:
        return
    for pid, mono in rep.monotone.items():
        report.flag(f"monotone_{pid}", mono)
    if preset.regime == "mean":
        report.check("fitted_rate", rep.fitted_rate, MEAN_RATE_MIN, ">=")
    report.check("uniform_bound", rep.uniform_bound, UNIFORM_BOUND_TOL)
    report.check("mass_drift", max(rep.mass_drifts), MASS_DRIFT_TOL)


def _corrector(cfg: RunConfig, out: Path, report: RunReport) -> None:
    _, rep = _study(cfg, out, report, corrector=True)
    with open(out / "corrector.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eps", "ratio", "ratio_coarse"])
        for eps, r, rc in zip(rep.eps_ladder, rep.corrector_ratios, rep.corrector_ratios_coarse):
            w.writerow([repr(float(eps)), repr(float(r)), repr(float(rc))])
    if report.solver_failure:
        return
    report.constants.update(alpha_max_ratio=rep.corrector_max_ratio,
                            alpha_refinement_change=rep.corrector_refinement_change)
    report.check("corrector_max_ratio", rep.corrector_max_ratio, CORRECTOR_RATIO_MAX)
    report.check("corrector_refinement_change", rep.corrector_refinement_change, REFINEMENT_MAX)


def _hypotheses_cmd(cfg: RunConfig, out: Path, report: RunReport) -> None:
    preset = cfg.build_preset()
    hyp = _hypotheses(cfg, report, preset, cfg.eps)
    hyp.write_csv(out / "hypotheses.csv")
    report.constants["violations"] = len(hyp.violations)
    report.notes.extend(hyp.notes)
    report.flag("no_violations", hyp.passed)


PIPELINES = {
    "simulate": _simulate,
    "cell": _cell,
    "homogenize": _homogenize,
    "verify": _verify,
    "corrector": _corrector,
    "hypotheses": _hypotheses_cmd,
}
SOLVER_ERRORS = (CellSolveError, EllipticSolveError, FloatingPointError, ValueError, ArithmeticError)


def run_config(cfg: RunConfig, out: str | Path | None = None) -> RunReport:
    """Run the configured pipeline, writing artifacts and ``report.json`` under ``out``."""
    out = Path(out if out is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(serialize_config(cfg), encoding="utf-8")
    report = RunReport(cfg)
    t0 = time.perf_counter()
    try:
        PIPELINES[cfg.command](cfg, out, report)
    except SOLVER_ERRORS as exc:
        report.solver_failure = f"{type(exc).__name__}: {exc}"
    report.timings["total"] = time.perf_counter() - t0
    report.manifest = build_manifest(out)
    with open(out / REPORT_NAME, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


def _summary(report: RunReport) -> str:
    lines = [f"{report.config.command} on {report.config.preset}: "
             f"{'PASS' if report.passed else 'FAIL'} (exit {report.exit_code})"]
    for c in report.checks:
        lines.append(f"  [{'pass' if c.passed else 'FAIL'}] {c.name}: {c.value:.6g} {c.relation} {c.threshold:.6g}")
    if report.solver_failure:
        lines.append(f"  solver failure: {report.solver_failure}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dunehom", description="Run a dunehom pipeline from a config file.")
    ap.add_argument("--config", required=True, help="run configuration (INI-style key = value)")
    ap.add_argument("--out", help="output directory (overrides [run] out)")
    ap.add_argument("--seed", type=int, help="seed for randomized checks (unsigned 64-bit)")
    ap.add_argument("--quiet", action="store_true", help="suppress the summary on stdout")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed <= U64_MAX:
        print("--seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error in {args.config}:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, UnicodeDecodeError) as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    report = run_config(cfg, args.out)
    if not args.quiet:
        print(_summary(report))
    return report.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
