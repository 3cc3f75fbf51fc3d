"""Time integration of the full eps-scaled models in divergence form.

All three regimes are integrated as

    dz/dt = eps**-p * (div(A grad z) + div C)

with the coefficients sampled at ``(t, t/sqrt(eps), t/eps)``.  The stepper is an
exponential (integrating-factor) Euler scheme: the constant part ``Abar * Lap``
is propagated exactly in mode space and the variable remainder
``div((A - Abar) grad z) + div C`` is treated explicitly.  The spectral state is
the master copy and its zero mode is never touched, so mass is conserved to
round-off.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import exprel

from . import kernels
from .coefficients import CoefficientPreset, assemble_arrays
from .fields import (Grid, ScalarField, check_finite, fft, flux_divergence_hat, ifft,
                     write_dsf1)

OPERATORS = ("spectral", "fd")


def default_initial(grid: Grid) -> ScalarField:
    """Smooth seabed used when no initial condition is supplied."""
    return ScalarField.from_function(
        grid, lambda x1, x2: 1.0 + 0.2 * np.cos(2 * np.pi * x1) + 0.1 * np.sin(2 * np.pi * (x1 + x2)))


# -- shared stepping core ------------------------------------------------------

class SplitOperator:
    """``div(A grad z) + div C`` split as ``Abar*Lap z + remainder`` on one grid."""

    def __init__(self, grid: Grid, mode: str = "spectral"):
        if mode not in OPERATORS:
            raise ValueError(f"operator must be one of {OPERATORS}, got {mode!r}")
        self.grid, self.mode = grid, mode
        self.symbol = grid.k2_norm if mode == "spectral" else grid.fd_k2_norm

    def split(self, A: np.ndarray, C1: np.ndarray, C2: np.ndarray, zhat: np.ndarray,
              z: np.ndarray | None = None):
        """Return ``(Abar, Nhat)`` with ``Nhat`` the explicit remainder's spectrum."""
        Abar = 0.5 * (float(A.max()) + float(A.min()))
        if self.mode == "spectral":
            Nhat = flux_divergence_hat(self.grid, A - Abar, zhat, source=(C1, C2))
        else:
            if z is None:
                z = ifft(zhat, self.grid.n)
            h = self.grid.h
            N = kernels.fd_div_flux(A - Abar, z, h) + kernels.fd_centered_div(C1, C2, h)
            Nhat = fft(N)
        Nhat[0, 0] = 0.0
        return Abar, Nhat

    def stability_scale(self, A: np.ndarray, C1: np.ndarray, C2: np.ndarray) -> float:
        """``max|A-Abar| 4 pi^2 (n/2)^2 + max|div C| 2 pi (n/2) + 1``."""
        n = self.grid.n
        Abar = 0.5 * (float(A.max()) + float(A.min()))
        divc = kernels.fd_centered_div(C1, C2, self.grid.h)
        return (float(np.max(np.abs(A - Abar))) * (2 * np.pi) ** 2 * (n / 2) ** 2
                + float(np.max(np.abs(divc))) * 2 * np.pi * (n / 2) + 1.0)


def etd_update(zhat: np.ndarray, rate: np.ndarray, forcing_hat: np.ndarray, dt: float) -> np.ndarray:
    """Exponential Euler: ``exp(-rate dt) zhat + dt phi1(-rate dt) forcing``."""
    x = rate * dt
    return np.exp(-x) * zhat + dt * exprel(-x) * forcing_hat


# -- problem and trajectory ------------------------------------------------------

@dataclass
class EvolutionProblem:
    preset: CoefficientPreset
    eps: float
    grid: Grid
    T_final: float
    z0: ScalarField | None = None
    safety: float = 0.5
    max_steps: int = 5_000_000
    snapshot_times: Sequence[float] | None = None
    operator: str = "spectral"
    max_dt: float | None = None

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.T_final > 0:
            raise ValueError("T_final must be positive")
        if self.z0 is None:
            self.z0 = default_initial(self.grid)
        if self.z0.grid != self.grid:
            raise ValueError("z0 must live on the problem grid")
        if self.operator not in OPERATORS:
            raise ValueError(f"operator must be one of {OPERATORS}")

    @property
    def p(self) -> int:
        return self.preset.p

    def coefficients(self, t: float):
        eps = self.eps
        x1, x2 = self.grid.coords
        return assemble_arrays(self.preset, t, t / math.sqrt(eps), t / eps, eps, x1, x2)

    def snapshot_grid(self) -> np.ndarray:
        if self.snapshot_times is None:
            return np.array([0.0, self.T_final])
        ts = np.unique(np.concatenate([[0.0], np.asarray(self.snapshot_times, float), [self.T_final]]))
        if ts[0] < 0 or ts[-1] > self.T_final:
            raise ValueError("snapshot times must lie in [0, T_final]")
        return ts


@dataclass
class Trajectory:
    times: list[float]
    snapshots: list[ScalarField]
    mass_series: list[float]
    l2_series: list[float]
    step_times: list[float] = field(default_factory=list)
    dt_series: list[float] = field(default_factory=list)
    failed: bool = False
    message: str = ""
    metadata: dict = field(default_factory=dict)

    @property
    def final(self) -> ScalarField:
        return self.snapshots[-1]

    def mass_drift(self) -> float:
        m = np.asarray(self.mass_series)
        return float(np.max(np.abs(m - m[0])) / max(abs(m[0]), 1e-300))

    def sup_l2(self) -> float:
        return float(np.max(self.l2_series))

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "t", "mass", "l2", "dt"])
            dts = [0.0] + list(self.dt_series)
            for i, (t, m, l) in enumerate(zip(self.step_times, self.mass_series, self.l2_series)):
                w.writerow([i, repr(float(t)), repr(float(m)), repr(float(l)), repr(float(dts[i]))])

    def write_snapshots(self, path: str | Path) -> None:
        write_dsf1(path, self.snapshots)


# -- stepping ------------------------------------------------------------------------

def _advance(problem: EvolutionProblem, op: SplitOperator, zhat: np.ndarray, t: float, dt: float):
    A, C1, C2 = problem.coefficients(t + 0.5 * dt)
    scale = problem.eps ** (-problem.p)
    Abar, Nhat = op.split(A, C1, C2, zhat)
    new = etd_update(zhat, scale * Abar * op.symbol, scale * Nhat, dt)
    new[0, 0] = zhat[0, 0]
    return new, (A, C1, C2)


def step_imex(problem: EvolutionProblem, z: ScalarField, t: float, dt: float) -> ScalarField:
    """One exponential-Euler step from ``t`` to ``t + dt``; the zero mode is preserved."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    op = SplitOperator(problem.grid, problem.operator)
    new, _ = _advance(problem, op, fft(z.values), t, dt)
    values = ifft(new, problem.grid.n)
    if not np.all(np.isfinite(values)):
        raise FloatingPointError("non-finite update; halve dt")
    return ScalarField(problem.grid, values)


def stable_dt(problem: EvolutionProblem, op: SplitOperator, coeffs) -> float:
    dt = problem.safety * problem.eps ** problem.p / op.stability_scale(*coeffs)
    dt = min(dt, problem.eps / 32.0)
    if problem.max_dt is not None:
        dt = min(dt, problem.max_dt)
    return dt


def run_full(problem: EvolutionProblem) -> Trajectory:
    """Integrate to ``T_final``; steps are adjusted to land on every snapshot time."""
    grid = problem.grid
    op = SplitOperator(grid, problem.operator)
    z = problem.z0.values.copy()
    zhat = fft(z)
    targets = problem.snapshot_grid()
    traj = Trajectory(times=[0.0], snapshots=[ScalarField(grid, z)],
                      mass_series=[float(np.mean(z))], l2_series=[float(np.sqrt(np.mean(z * z)))],
                      step_times=[0.0])
    coeffs = problem.coefficients(0.0)
    t, steps = 0.0, 0
    for target in targets[1:]:
        while t < target:
            remaining = target - t
            dt_max = stable_dt(problem, op, coeffs)
            dt = remaining / math.ceil(remaining / dt_max * (1 - 1e-12))
            while True:
                new, coeffs_new = _advance(problem, op, zhat, t, dt)
                z_new = ifft(new, grid.n)
                if np.all(np.isfinite(z_new)):
                    break
                dt *= 0.5
                if dt < 1e-14:
                    traj.failed, traj.message = True, f"non-finite state at t={t}"
                    return traj
            zhat, z, coeffs = new, z_new, coeffs_new
            t = target if dt >= remaining * (1 - 1e-12) else t + dt
            steps += 1
            traj.step_times.append(t)
            traj.dt_series.append(dt)
            traj.mass_series.append(float(np.mean(z)))
            traj.l2_series.append(float(np.sqrt(np.mean(z * z))))
            if steps >= problem.max_steps and t < targets[-1]:
                traj.failed = True
                traj.message = f"step budget {problem.max_steps} exhausted at t={t}"
                traj.times.append(t)
                traj.snapshots.append(ScalarField(grid, z))
                return traj
        traj.times.append(float(target))
        traj.snapshots.append(ScalarField(grid, z))
    traj.metadata.update(steps=steps, operator=problem.operator, safety=problem.safety,
                         dt_cap=problem.eps / 32.0, p=problem.p)
    return traj


# -- dense finite-difference oracle ----------------------------------------------------------

def _fd_matrices(n: int, A: np.ndarray):
    """Dense ``div(A grad .)`` (face-averaged) and centered-difference operators."""
    N = n * n
    h = 1.0 / n
    idx = np.arange(N).reshape(n, n)
    L = np.zeros((N, N))
    a = A.ravel()
    for shift, axis in ((1, 0), (-1, 0), (1, 1), (-1, 1)):
        nb = np.roll(idx, -shift, axis=axis).ravel()
        face = 0.5 * (a + a[nb]) / h**2
        rows = idx.ravel()
        np.add.at(L, (rows, nb), face)
        np.add.at(L, (rows, rows), -face)
    D1 = np.zeros((N, N))
    D2 = np.zeros((N, N))
    rows = idx.ravel()
    for D, axis in ((D1, 0), (D2, 1)):
        np.add.at(D, (rows, np.roll(idx, -1, axis=axis).ravel()), 0.5 / h)
        np.add.at(D, (rows, np.roll(idx, 1, axis=axis).ravel()), -0.5 / h)
    return L, D1, D2


def reference_solve_dense(problem: EvolutionProblem, dt_fraction: float = 1.0 / 8.0) -> Trajectory:
    """Explicit Euler on the assembled dense finite-difference system (small grids only).

    ``dt = eps^p h^2 dt_fraction / max A``, default fraction 1/8, capped at ``eps/32``
    like :func:`run_full` so near-vanishing ``A`` cannot produce a step that
    skips the fast oscillation.
    """
    grid = problem.grid
    n = grid.n
    if n > 16:
        raise ValueError(f"dense oracle limited to n <= 16, got n={n}")
    h = grid.h
    scale = problem.eps ** (-problem.p)
    z = problem.z0.values.ravel().copy()
    targets = problem.snapshot_grid()
    traj = Trajectory(times=[0.0], snapshots=[ScalarField(grid, z.reshape(n, n).copy())],
                      mass_series=[float(z.mean())], l2_series=[float(np.sqrt(np.mean(z * z)))],
                      step_times=[0.0])
    _, D1, D2 = _fd_matrices(n, np.zeros((n, n)))
    t = 0.0
    for target in targets[1:]:
        while t < target:
            A, C1, C2 = problem.coefficients(t)
            L, _, _ = _fd_matrices(n, A)
            amax = max(float(A.max()), 1e-12)
            dt_max = min(problem.eps ** problem.p * h * h * dt_fraction / amax, problem.eps / 32.0)
            remaining = target - t
            dt = remaining / math.ceil(remaining / dt_max * (1 - 1e-12))
            z = z + dt * scale * (L @ z + D1 @ C1.ravel() + D2 @ C2.ravel())
            t = target if dt >= remaining * (1 - 1e-12) else t + dt
            traj.step_times.append(t)
            traj.dt_series.append(dt)
            traj.mass_series.append(float(z.mean()))
            traj.l2_series.append(float(np.sqrt(np.mean(z * z))))
        check_finite(z, "reference state")
        traj.times.append(float(target))
        traj.snapshots.append(ScalarField(grid, z.reshape(n, n).copy()))
    traj.metadata.update(operator="fd-dense", dt_fraction=dt_fraction)
    return traj
