import csv

import numpy as np
import pytest

from dunehom.coefficients import PRESETS, get_preset
from dunehom.evolve import (EvolutionProblem, SplitOperator, default_initial, etd_update, reference_solve_dense,
                            run_full, step_imex)
from dunehom.fields import Grid, ScalarField, fft, ifft, read_dsf1


def _rel(a, b):
    return np.sqrt(np.mean((a - b) ** 2)) / np.sqrt(np.mean(b**2))


def test_etd_update_limits():
    z = np.array([1.0 + 0j, 2.0])
    rate = np.array([0.0, 3.0])
    f = np.array([0.5, 0.0])
    out = etd_update(z, rate, f, 0.1)
    assert out[0] == pytest.approx(1.05)
    assert out[1] == pytest.approx(2.0 * np.exp(-0.3))


@pytest.mark.parametrize("operator", ["spectral", "fd"])
def test_constant_diffusion_matches_heat_kernel(operator):
    """With A constant and C = 0 every Fourier mode decays at its exact rate."""
    g = Grid(16)
    preset = get_preset("tidal-long", b=0.0, g0=0.1, g1=0.0, c=0.0)
    eps, T = 0.2, 0.05
    prob = EvolutionProblem(preset, eps, g, T, operator=operator)
    traj = run_full(prob)
    symbol = g.k2_norm if operator == "spectral" else g.fd_k2_norm
    A = preset.a * 0.1
    exact = ifft(fft(prob.z0.values) * np.exp(-A * symbol * T / eps**2), g.n)
    assert np.max(np.abs(traj.final.values - exact)) < 1e-12


def test_zero_transport_keeps_constant_seabed():
    g = Grid(8)
    z0 = ScalarField(g, np.full(g.shape, 1.25))
    traj = run_full(EvolutionProblem(get_preset("tidal-mean", c=0.0), 0.1, g, 0.1, z0=z0))
    assert traj.mass_drift() == 0.0
    assert np.max(np.abs(traj.final.values - 1.25)) < 1e-14


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_mass_conserved_short_runs(name):
    g = Grid(16)
    for operator in ("spectral", "fd"):
        traj = run_full(EvolutionProblem(get_preset(name), 0.2, g, 0.05, operator=operator))
        assert not traj.failed
        assert traj.mass_drift() <= 1e-12


def test_steps_land_on_snapshot_times():
    g = Grid(8)
    ts = [0.013, 0.05, 0.071]
    traj = run_full(EvolutionProblem(get_preset("tidal-short"), 0.1, g, 0.1, snapshot_times=ts))
    assert traj.times == [0.0, 0.013, 0.05, 0.071, 0.1]
    assert traj.step_times[-1] == 0.1
    assert max(traj.dt_series) <= 0.1 / 32 + 1e-15


def test_fd_scheme_converges_to_dense_oracle():
    g = Grid(8)
    preset = get_preset("tidal-long")
    ref = reference_solve_dense(EvolutionProblem(preset, 0.2, g, 0.02, operator="fd"), 1 / 64).final.values
    errs = [_rel(run_full(EvolutionProblem(preset, 0.2, g, 0.02, operator="fd", max_dt=dt)).final.values, ref)
            for dt in (2e-4, 5e-5)]
    assert max(errs) < 1e-6


def test_dense_oracle_conserves_mass_and_is_size_limited():
    g = Grid(8)
    traj = reference_solve_dense(EvolutionProblem(get_preset("gapped-long"), 0.2, g, 0.01))
    assert traj.mass_drift() < 1e-13
    with pytest.raises(ValueError, match="n <= 16"):
        reference_solve_dense(EvolutionProblem(get_preset("gapped-long"), 0.2, Grid(32), 0.01))


def test_step_imex_preserves_mean_and_rejects_non_finite():
    g = Grid(8)
    prob = EvolutionProblem(get_preset("tidal-mean"), 0.1, g, 0.1)
    z = step_imex(prob, prob.z0, 0.0, 1e-3)
    assert np.mean(z.values) == pytest.approx(np.mean(prob.z0.values), abs=1e-15)
    bad = prob.z0.values.copy()
    bad[0, 0] = np.inf
    with pytest.raises(FloatingPointError), np.errstate(invalid="ignore"):
        step_imex(prob, ScalarField(g, bad), 0.0, 1e-3)
    with pytest.raises(ValueError):
        step_imex(prob, prob.z0, 0.0, 0.0)


def test_step_budget_gives_partial_trajectory():
    traj = run_full(EvolutionProblem(get_preset("tidal-long"), 0.1, Grid(8), 0.5, max_steps=5))
    assert traj.failed and "budget" in traj.message
    assert len(traj.dt_series) == 5


@pytest.mark.parametrize("kw", [dict(eps=0.0), dict(T_final=-1.0), dict(operator="bogus"),
                                dict(z0=ScalarField(Grid(4), np.zeros((4, 4))))])
def test_problem_validation(kw):
    args = dict(preset=get_preset("tidal-long"), eps=0.1, grid=Grid(8), T_final=0.1)
    args.update(kw)
    with pytest.raises(ValueError):
        EvolutionProblem(**args)


def test_split_stability_scale_positive():
    g = Grid(8)
    op = SplitOperator(g)
    A = np.full(g.shape, 0.5)
    assert op.stability_scale(A, A * 0, A * 0) > 0


def test_trajectory_outputs(tmp_path):
    g = Grid(8)
    traj = run_full(EvolutionProblem(get_preset("tidal-short"), 0.2, g, 0.02, snapshot_times=[0.01]))
    traj.write_csv(tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["step", "t", "mass", "l2", "dt"]
    assert len(rows) == len(traj.step_times) + 1
    assert float(rows[-1][1]) == 0.02
    traj.write_snapshots(tmp_path / "s.dsf1")
    back = read_dsf1(tmp_path / "s.dsf1")
    assert back.shape == (3, 8, 8) and np.array_equal(back[-1], traj.final.values)


def test_default_initial_is_smooth_and_positive():
    z = default_initial(Grid(16))
    assert z.values.min() > 0.6 and np.mean(z.values) == pytest.approx(1.0)
