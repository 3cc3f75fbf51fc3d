import csv

import numpy as np
import pytest

from dunehom.cell import (CellSolution, CellSolveError, ESTIMATE_HEADER, ThetaProblem, continuation_nu,
                          limit_theta_problem, preset_theta_problem, solve_dsdt, solve_theta_periodic,
                          write_estimates_csv)
from dunehom.coefficients import get_preset, validate_hypotheses
from dunehom.fields import Grid, ScalarField

# constant-coefficient problem with forcing c(theta) * sin(2 pi x1): each Fourier
# coefficient of c in theta solves a scalar linear ODE exactly.
A0, LAM, NU = 0.3, 2.0, 0.05
C_MODES = [(1, 0.35), (-1, 0.35), (2, 0.15 * np.exp(1j * 0.2) / 1j), (-2, np.conj(0.15 * np.exp(1j * 0.2) / 1j))]


def c_theta(th):
    return 0.7 * np.cos(2 * np.pi * th) + 0.3 * np.sin(4 * np.pi * th + 0.2)


def alpha_exact(th):
    kappa = LAM * (A0 + NU) * 4 * np.pi**2
    return sum(LAM * 2 * np.pi * cm / (kappa + 2j * np.pi * m) * np.exp(2j * np.pi * m * th)
               for m, cm in C_MODES).real


def _oracle_problem(grid, m_theta=128, substeps=256):
    x1, _ = grid.coords
    return ThetaProblem(grid, lambda th: np.full(grid.shape, A0),
                        lambda th: (c_theta(th) * np.sin(2 * np.pi * x1), 0 * x1),
                        lam=LAM, nu=NU, m_theta=m_theta, substeps=substeps)


def _rms(a):
    return float(np.max(np.sqrt(np.mean(a**2, axis=(-2, -1)))))


def test_closed_form_per_mode():
    g = Grid(8)
    x1, _ = g.coords
    sol = solve_theta_periodic(_oracle_problem(g), 1e-12)
    assert sol.converged
    exact = np.stack([alpha_exact(th) * np.cos(2 * np.pi * x1) for th in sol.thetas])
    assert _rms(sol.values() - exact) <= 1e-8


def test_random_warm_starts_reach_same_state(rng):
    g = Grid(8)
    p = _oracle_problem(g, m_theta=32, substeps=32)
    finals = []
    for _ in range(2):
        start = rng.standard_normal(g.shape)
        warm = CellSolution(S=[ScalarField(g, start - start.mean())], mu=0.0, nu=NU, lam=LAM,
                            periodicity_residual=np.inf, iterations=0, converged=False)
        finals.append(solve_theta_periodic(p, 1e-11, warm_start=warm).values())
    assert _rms(finals[0] - finals[1]) <= 1e-10


def test_solution_has_zero_mean_at_every_node():
    g = Grid(8)
    p = preset_theta_problem(get_preset("tidal-long"), 0.3, 0.1, g, nu=0.05, m_theta=32)
    sol = solve_theta_periodic(p, 1e-10)
    assert np.max(np.abs(sol.values().mean(axis=(1, 2)))) < 1e-14
    assert sol.periodicity_residual <= 1e-10


def test_zero_forcing_gives_zero_solution():
    g = Grid(8)
    p = ThetaProblem(g, lambda th: np.full(g.shape, 0.5), lambda th: (np.zeros(g.shape), np.zeros(g.shape)),
                     m_theta=8)
    assert np.all(solve_theta_periodic(p).values() == 0.0)


def test_stall_raises():
    # no diffusion or damping and a theta-constant source: S grows linearly
    g = Grid(8)
    x1, _ = g.coords
    p = ThetaProblem(g, lambda th: np.zeros(g.shape), lambda th: (0 * x1, 0 * x1),
                     f=lambda th: np.sin(2 * np.pi * x1), m_theta=8, substeps=1)
    with pytest.raises(CellSolveError, match="stalled"):
        solve_theta_periodic(p, 1e-12)


@pytest.mark.parametrize("kw", [dict(lam=0.0), dict(mu=-1.0), dict(nu=-0.1), dict(m_theta=1)])
def test_problem_validation(kw):
    g = Grid(8)
    with pytest.raises(ValueError):
        ThetaProblem(g, lambda th: np.zeros(g.shape), lambda th: (np.zeros(g.shape),) * 2, **kw)


def test_nonzero_mean_source_rejected():
    g = Grid(8)
    p = ThetaProblem(g, lambda th: np.ones(g.shape), lambda th: (np.zeros(g.shape),) * 2,
                     f=lambda th: np.ones(g.shape), m_theta=4)
    with pytest.raises(ValueError, match="nonzero mean"):
        solve_theta_periodic(p)


@pytest.mark.parametrize("sched", [[], [0.1, 0.2], [0.1, 1e-8]])
def test_continuation_schedule_validation(sched):
    p = _oracle_problem(Grid(8), 8, 8)
    with pytest.raises(ValueError):
        continuation_nu(p, sched)


def test_from_nodes_interpolates_linearly():
    g = Grid(4)
    A_nodes = [np.full(g.shape, v) for v in (0.0, 1.0)]
    C_nodes = [(np.zeros(g.shape), np.zeros(g.shape))] * 2
    p = ThetaProblem.from_nodes(g, A_nodes, C_nodes)
    assert p.m_theta == 2
    assert np.allclose(p.A(0.25), 0.5) and np.allclose(p.A(0.75), 0.5) and np.allclose(p.A(1.0), 0.0)


def test_limit_problem_matches_full_problem_at_small_eps():
    g = Grid(8)
    preset = get_preset("tidal-long")
    lim = limit_theta_problem(preset, 0.3, 0.0, g, nu=0.05, m_theta=16)
    full = preset_theta_problem(preset, 0.3, 1e-6, g, nu=0.05, m_theta=16)
    assert lim.lam == 1.0 and full.lam == pytest.approx(1e6)
    assert np.max(np.abs(lim.A(0.2) - full.A(0.2))) < 1e-4


@pytest.mark.parametrize("name", ["tidal-long", "gapped-long"])
def test_estimate_suite_on_long_presets(name, tmp_path):
    g = Grid(16)
    preset, eps, t = get_preset(name), 0.1, 0.3
    hyp = validate_hypotheses(preset, eps)
    p = preset_theta_problem(preset, t, eps, g, m_theta=64)
    sol, reps = continuation_nu(p, [0.1, 0.03, 0.01], 1e-10, hyp=hyp,
                                dsdt=lambda q, s: solve_dsdt(preset, t, eps, q, s, 1e-10))
    assert [r.nu for r in reps] == [0.1, 0.03, 0.01]
    for rep in reps:
        assert rep.passed, [r for r in rep.rows if not r.passed]
    write_estimates_csv(tmp_path / "e.csv", reps)
    rows = list(csv.reader(open(tmp_path / "e.csv")))
    assert rows[0] == ESTIMATE_HEADER
    assert len(rows) == 1 + sum(len(r.rows) for r in reps)
