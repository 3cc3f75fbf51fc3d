"""Limit profiles: long-term elliptic slices, mean-term theta-periodic profile, corrector."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .cell import ThetaProblem, continuation_nu, solve_theta_periodic
from .coefficients import (DEGENERATE, CoefficientPreset, classify_theta, limit_arrays)
from .fields import (Grid, ScalarField, VectorField, check_finite, fft, flux_divergence_hat,
                     ifft, integral_mean, write_dsf1)

CONSTANT_TOL = 1e-13


class EllipticSolveError(RuntimeError):
    pass


# -- elliptic slices ------------------------------------------------------------

def apply_elliptic(grid: Grid, A: np.ndarray, V: np.ndarray) -> np.ndarray:
    """``-div P(A P grad V)`` in physical space."""
    return -ifft(flux_divergence_hat(grid, A, fft(V)), grid.n)


def elliptic_source(grid: Grid, C1: np.ndarray, C2: np.ndarray) -> np.ndarray:
    """``div P C`` in physical space."""
    return ifft(flux_divergence_hat(grid, np.zeros_like(C1), fft(np.zeros_like(C1)),
                                    source=(C1, C2)), grid.n)


@dataclass
class EllipticResult:
    V: ScalarField
    residual: float
    iterations: int


def _as_arrays(Atilde, Ctilde):
    A = np.asarray(getattr(Atilde, "values", Atilde), float)
    if isinstance(Ctilde, VectorField):
        C1, C2 = Ctilde.c1.values, Ctilde.c2.values
    else:
        C1, C2 = (np.asarray(c, float) for c in Ctilde)
    check_finite(A, "Atilde")
    check_finite(C1, "Ctilde[0]")
    check_finite(C2, "Ctilde[1]")
    return A, C1, C2


def solve_elliptic(grid: Grid, A: np.ndarray, C1: np.ndarray, C2: np.ndarray, tol: float = 1e-10,
                   max_iter: int = 2000) -> EllipticResult:
    """Mean-zero ``V`` with ``-div P(A P grad V) = div P C`` by preconditioned CG."""
    b = elliptic_source(grid, C1, C2)
    amin, amax = float(A.min()), float(A.max())
    if amin < -1e-12:
        raise ValueError(f"Atilde must be nonnegative (min {amin:.3g})")
    scale = max(abs(amax), 1.0)
    mask = grid.dealias.copy()
    mask[0, 0] = 0.0
    if amax - amin <= CONSTANT_TOL * scale:
        abar = 0.5 * (amax + amin)
        if abar <= CONSTANT_TOL * scale:
            if np.sqrt(np.mean(b * b)) > 1e-10:
                raise ValueError("Atilde vanishes identically but div Ctilde does not: "
                                 "the slice equation has no solution (degenerate theta)")
            return EllipticResult(ScalarField(grid, np.zeros_like(A)), 0.0, 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = np.where(mask > 0, 1.0 / (abar * grid.k2_norm), 0.0)
        V = ifft(inv * fft(b), grid.n)
        r = b - apply_elliptic(grid, A, V)
        return EllipticResult(ScalarField(grid, V), float(np.sqrt(np.mean(r * r))), 0)
    if amin <= CONSTANT_TOL * scale:
        raise ValueError("Atilde vanishes somewhere but is not x-constant; this slice is outside "
                         "the structural cases (classify the theta node first)")
    amean = float(A.mean())
    with np.errstate(divide="ignore", invalid="ignore"):
        pinv = np.where(mask > 0, 1.0 / (amean * grid.k2_norm), 0.0)

    def precond(r):
        return ifft(pinv * fft(r), grid.n)

    n = grid.n
    V = np.zeros((n, n))
    r = b.copy()
    res = float(np.sqrt(np.mean(r * r)))
    it = 0
    if res <= tol:
        return EllipticResult(ScalarField(grid, V), res, 0)
    z = precond(r)
    p = z.copy()
    rz = float(np.sum(r * z))
    for it in range(1, max_iter + 1):
        Ap = apply_elliptic(grid, A, p)
        alpha = rz / float(np.sum(p * Ap))
        V += alpha * p
        r -= alpha * Ap
        res = float(np.sqrt(np.mean(r * r)))
        if res <= tol:
            break
        z = precond(r)
        rz_new = float(np.sum(r * z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    else:
        raise EllipticSolveError(f"PCG did not reach tol={tol:g} in {max_iter} iterations (res {res:.3e})")
    # recompute the true residual (the recursive one drifts)
    r_true = b - apply_elliptic(grid, A, V)
    return EllipticResult(ScalarField(grid, V - V.mean()), float(np.sqrt(np.mean(r_true**2))), it)


def solve_elliptic_slice(Atilde, Ctilde, tol: float = 1e-10) -> ScalarField:
    A, C1, C2 = _as_arrays(Atilde, Ctilde)
    grid = Atilde.grid if isinstance(Atilde, ScalarField) else Grid(A.shape[0])
    return solve_elliptic(grid, A, C1, C2, tol).V


def _dft_matrices(n: int):
    """Dense 2-D spectral derivative and 2/3-projection matrices on n x n samples."""
    F = np.exp(-2j * np.pi * np.outer(np.arange(n), np.arange(n)) / n)
    Finv = np.conj(F) / n
    k = np.fft.fftfreq(n, 1.0 / n)
    keep = (3 * np.abs(k) < n).astype(float)
    dk = 2j * np.pi * np.where(np.abs(k) == n // 2, 0.0, k)
    I = np.eye(n)
    P1 = (Finv @ np.diag(keep) @ F).real
    D1 = (Finv @ np.diag(dk) @ F).real
    return np.kron(D1, I), np.kron(I, D1), np.kron(P1, P1)


def solve_elliptic_dense(Atilde, Ctilde) -> ScalarField:
    """Independent dense solve of the same dealiased operator (n <= 16)."""
    A, C1, C2 = _as_arrays(Atilde, Ctilde)
    n = A.shape[0]
    if n > 16:
        raise ValueError("dense elliptic oracle limited to n <= 16")
    Dx, Dy, P = _dft_matrices(n)
    a = np.diag(A.ravel())
    L = -(Dx @ P @ a @ P @ Dx + Dy @ P @ a @ P @ Dy)
    b = Dx @ P @ C1.ravel() + Dy @ P @ C2.ravel()
    V = np.linalg.lstsq(L, b, rcond=1e-10)[0]
    V = P @ V
    return ScalarField(Grid(n), (V - V.mean()).reshape(n, n))


# -- profiles ------------------------------------------------------------------------

@dataclass
class HomogenizedProfile:
    regime: str
    grid: Grid
    t_nodes: np.ndarray
    tau_nodes: np.ndarray
    theta_nodes: np.ndarray
    U: np.ndarray  # (n_t, n_tau, n_theta, n, n)
    mass: float
    theta_labels: list[list[str]] = field(default_factory=list)
    residuals: np.ndarray | None = None
    notes: list[str] = field(default_factory=list)

    def field(self, it: int, itau: int, ith: int) -> ScalarField:
        return ScalarField(self.grid, self.U[it, itau, ith])

    def at(self, t: float, tau: float, theta: float) -> np.ndarray:
        """Linear in t (clamped), bilinear periodic in (tau, theta)."""
        ts = self.t_nodes
        if len(ts) == 1 or t <= ts[0]:
            i0 = i1 = 0
            wt = 0.0
        elif t >= ts[-1]:
            i0 = i1 = len(ts) - 1
            wt = 0.0
        else:
            i1 = int(np.searchsorted(ts, t))
            i0 = i1 - 1
            wt = (t - ts[i0]) / (ts[i1] - ts[i0])

        def periodic(x, m):
            s = (x % 1.0) * m
            j = int(math.floor(s)) % m
            return j, (j + 1) % m, s - math.floor(s)

        a0, a1, wa = periodic(tau, len(self.tau_nodes))
        b0, b1, wb = periodic(theta, len(self.theta_nodes))

        def slab(i):
            U = self.U[i]
            return ((1 - wa) * ((1 - wb) * U[a0, b0] + wb * U[a0, b1])
                    + wa * ((1 - wb) * U[a1, b0] + wb * U[a1, b1]))

        return slab(i0) if wt == 0.0 else (1 - wt) * slab(i0) + wt * slab(i1)

    def theta_mean_spread(self) -> float:
        """Largest deviation of ``integral_mean(U)`` across theta at fixed (t, tau)."""
        means = self.U.mean(axis=(3, 4))
        return float(np.max(np.abs(means - means[:, :, :1])))

    def total_mass(self) -> np.ndarray:
        """``int_0^1 int U dx dtheta`` per (t, tau) node."""
        return self.U.mean(axis=(2, 3, 4))

    def write_dumps(self, directory: str | Path, prefix: str = "profile") -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        files = []
        rows = []
        for i, t in enumerate(self.t_nodes):
            for j, tau in enumerate(self.tau_nodes):
                name = f"{prefix}_t{i:03d}_tau{j:03d}.dsf1"
                write_dsf1(directory / name, self.U[i, j])
                files.append(directory / name)
                rows.append([i, j, repr(float(t)), repr(float(tau)), len(self.theta_nodes), name])
        manifest = directory / f"{prefix}_manifest.csv"
        with open(manifest, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_index", "tau_index", "t", "tau", "n_theta", "file"])
            w.writerows(rows)
        return files + [manifest]


@dataclass
class CorrectorProfile:
    grid: Grid
    t_nodes: np.ndarray
    tau_nodes: np.ndarray
    theta_nodes: np.ndarray
    U_half: np.ndarray  # (n_t, n_tau, n_theta, n, n)
    projection_residue: float = 0.0
    residuals: np.ndarray | None = None
    flagged: bool = False

    def as_profile(self) -> HomogenizedProfile:
        return HomogenizedProfile("mean", self.grid, self.t_nodes, self.tau_nodes, self.theta_nodes,
                                  self.U_half, 0.0)


def build_longterm_profile(preset: CoefficientPreset, t_nodes: Sequence[float],
                           theta_nodes: Sequence[float], z0: ScalarField, tol: float = 1e-10) -> HomogenizedProfile:
    """``U = mean(z0) + V`` with ``V`` the mean-zero elliptic slice at each (t, theta) node."""
    if preset.regime != "long":
        raise ValueError("build_longterm_profile needs a long-regime preset")
    grid = z0.grid
    x1, x2 = grid.coords
    ts = np.asarray(t_nodes, float)
    ths = np.asarray(theta_nodes, float)
    mass = integral_mean(z0)
    U = np.empty((len(ts), 1, len(ths), grid.n, grid.n))
    residuals = np.zeros((len(ts), len(ths)))
    labels = []
    for i, t in enumerate(ts):
        row = []
        for k, th in enumerate(ths):
            label = classify_theta(preset, t, th, 0.0)
            row.append(label)
            if label == DEGENERATE:
                V = np.zeros((grid.n, grid.n))
            else:
                At, C1, C2 = limit_arrays(preset, t, 0.0, th, x1, x2)[:3]
                res = solve_elliptic(grid, At, C1, C2, tol)
                V, residuals[i, k] = res.V.values, res.residual
            U[i, 0, k] = mass + V
        labels.append(row)
    return HomogenizedProfile("long", grid, ts, np.array([0.0]), ths, U, mass, labels, residuals)


_NU_SCHEDULE = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 1e-4, 1e-5, 1e-6)


def solve_meanterm_profile(preset: CoefficientPreset, t: float, tau: float, tol: float = 1e-10, *,
                           grid: Grid, m_theta: int = 128, nu_schedule: Sequence[float] = _NU_SCHEDULE,
                           substeps: int | None = None) -> list[ScalarField]:
    """Mean-zero theta-periodic profile for the limit coefficients at ``(t, tau)``.

    Solved directly (``nu = 0``) when ``Atilde`` is bounded below; otherwise by
    viscosity continuation down to the ``1e-6`` floor.
    """
    return _meanterm_solution(preset, t, tau, tol, grid, m_theta, nu_schedule, substeps).S


def _meanterm_solution(preset, t, tau, tol, grid, m_theta, nu_schedule=_NU_SCHEDULE, substeps=None):
    if preset.regime != "mean":
        raise ValueError("solve_meanterm_profile needs a mean-regime preset")
    x1, x2 = grid.coords
    cache = {}

    def coeffs(th):
        if th not in cache:
            if len(cache) > 4096:
                cache.clear()
            cache[th] = limit_arrays(preset, t, tau, th, x1, x2)[:3]
        return cache[th]

    p = ThetaProblem(grid, lambda th: coeffs(th)[0], lambda th: coeffs(th)[1:], lam=1.0,
                     m_theta=m_theta, substeps=substeps)
    amin = min(float(coeffs(th)[0].min()) for th in p.thetas)
    if amin > 1e-8:
        return solve_theta_periodic(p, tol)
    sol, _ = continuation_nu(p, nu_schedule, tol)
    return sol


def build_meanterm_profile(preset: CoefficientPreset, t_nodes: Sequence[float], tau_nodes: Sequence[float],
                           z0: ScalarField, tol: float = 1e-10, *, m_theta: int = 128,
                           substeps: int | None = None) -> HomogenizedProfile:
    """``U = mean(z0) + S`` on (t, tau, theta) nodes; tau-free coefficients are solved once per t."""
    grid = z0.grid
    ts = np.asarray(t_nodes, float)
    taus = np.asarray(tau_nodes, float)
    mass = integral_mean(z0)
    U = np.empty((len(ts), len(taus), m_theta, grid.n, grid.n))
    residuals = np.zeros((len(ts), len(taus)))
    for i, t in enumerate(ts):
        if preset.limit_depends_on_tau:
            for j, tau in enumerate(taus):
                sol = _meanterm_solution(preset, t, tau, tol, grid, m_theta, substeps=substeps)
                U[i, j] = mass + np.stack([s.values for s in sol.S])
                residuals[i, j] = sol.periodicity_residual
        else:
            sol = _meanterm_solution(preset, t, 0.0, tol, grid, m_theta, substeps=substeps)
            U[i, :] = mass + np.stack([s.values for s in sol.S])[None]
            residuals[i, :] = sol.periodicity_residual
    ths = np.arange(m_theta) / m_theta
    return HomogenizedProfile("mean", grid, ts, taus, ths, U, mass, residuals=residuals)


def dtau_spectral(U_on_tau_grid: np.ndarray, axis: int = 0, endpoint: bool = False) -> np.ndarray:
    """Spectral ``d/dtau`` of samples on a uniform grid over one period.

    With ``endpoint=True`` the last sample is ``tau = 1`` and is checked against
    ``tau = 0`` (a warning is issued when they differ by more than 1e-8), then
    dropped; the result then has one fewer sample along ``axis``.
    """
    U = np.moveaxis(np.asarray(U_on_tau_grid, float), axis, 0)
    if endpoint:
        drift = float(np.max(np.abs(U[-1] - U[0])))
        if drift > 1e-8:
            warnings.warn(f"tau samples are not periodic (endpoint drift {drift:.3e})", RuntimeWarning)
        U = U[:-1]
    m = U.shape[0]
    k = np.fft.rfftfreq(m, 1.0 / m)
    sym = 2j * np.pi * k
    if m % 2 == 0:
        sym[-1] = 0.0
    shape = (-1,) + (1,) * (U.ndim - 1)
    D = np.fft.irfft(sym.reshape(shape) * np.fft.rfft(U, axis=0), n=m, axis=0)
    return np.moveaxis(D, 0, axis)


def solve_corrector_profile(preset: CoefficientPreset, U: HomogenizedProfile, tol: float = 1e-10, *,
                            substeps: int | None = None) -> CorrectorProfile:
    """Theta-periodic corrector with source ``div C1 + div(A1 grad U) - dU/dtau`` (mean-free)."""
    if preset.regime != "mean" or U.regime != "mean":
        raise ValueError("the corrector is defined for the mean regime")
    if preset.transport.U_thr != 0:
        raise ValueError("the corrector equation requires U_thr = 0")
    grid = U.grid
    n = grid.n
    x1, x2 = grid.coords
    m = len(U.theta_nodes)
    d1, d2 = grid.ik
    dU_tau = dtau_spectral(U.U, axis=1)
    out = np.empty_like(U.U)
    residue = 0.0
    residuals = np.zeros((len(U.t_nodes), len(U.tau_nodes)))
    for i, t in enumerate(U.t_nodes):
        for j, tau in enumerate(U.tau_nodes):
            hats = np.stack([fft(u) for u in U.U[i, j]])
            grads = np.stack([np.stack([ifft(d1 * h, n), ifft(d2 * h, n)]) for h in hats])
            drift = dU_tau[i, j]
            means = drift.mean(axis=(1, 2))
            residue = max(residue, float(np.max(np.abs(means))))
            ftau = -(drift - means[:, None, None])

            def interp(arr, th):
                s = (th % 1.0) * m
                k = int(math.floor(s)) % m
                w = s - math.floor(s)
                return (1 - w) * arr[k] + w * arr[(k + 1) % m]

            def coeffs(th, t=t, tau=tau):
                return limit_arrays(preset, t, tau, th, x1, x2)

            def A_of(th):
                return coeffs(th)[0]

            def C_of(th, grads=grads):
                _, _, _, A1, C11, C12 = coeffs(th)
                g = interp(grads, th)
                return C11 + A1 * g[0], C12 + A1 * g[1]

            f_of = None if not np.any(ftau) else (lambda th, ftau=ftau: interp(ftau, th))
            p = ThetaProblem(grid, A_of, C_of, f_of, lam=1.0, m_theta=m, substeps=substeps)
            sol = solve_theta_periodic(p, tol)
            out[i, j] = sol.values()
            residuals[i, j] = sol.periodicity_residual
    return CorrectorProfile(grid, U.t_nodes, U.tau_nodes, U.theta_nodes, out, residue, residuals,
                            flagged=residue > 1e-6)
