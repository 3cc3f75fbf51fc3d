"""Theta-periodic parabolic cell problems.

Solves

    mu S + dS/dtheta - lam div((A + nu) grad S) = lam div C + f,   S(theta + 1) = S(theta),

with zero spatial mean at every theta, by marching in theta with the same
exponential stepper as :mod:`dunehom.evolve` until successive periods agree.
The mean-zero projection is applied after every step.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.special import exprel

from .coefficients import (CoefficientPreset, HypothesisReport, assemble_arrays,
                           assemble_dt_arrays, limit_arrays)
from .evolve import SplitOperator
from .fields import Grid, ScalarField, fft, flux_divergence_hat, grad_hat, ifft, l2_norm_hat

CACHE_BYTES = 256 * 2**20


class CellSolveError(RuntimeError):
    """The period-to-period contraction stalled."""


@dataclass
class ThetaProblem:
    """Coefficients as functions of theta; ``A(theta)`` and ``f(theta)`` return arrays,
    ``C(theta)`` returns a pair of arrays."""

    grid: Grid
    A: Callable[[float], np.ndarray]
    C: Callable[[float], tuple[np.ndarray, np.ndarray]]
    f: Callable[[float], np.ndarray] | None = None
    lam: float = 1.0
    mu: float = 0.0
    nu: float = 0.0
    m_theta: int = 128
    substeps: int | None = None
    safety: float = 0.5
    max_periods: int = 400

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.mu < 0 or self.nu < 0:
            raise ValueError("mu and nu must be nonnegative")
        if self.m_theta < 2:
            raise ValueError("m_theta must be at least 2")

    @classmethod
    def from_nodes(cls, grid: Grid, A_nodes: Sequence, C_nodes: Sequence, f_nodes: Sequence | None = None,
                   **kw) -> "ThetaProblem":
        """Build from fields on a uniform theta grid (periodic linear interpolation)."""
        A_arr = np.stack([np.asarray(getattr(a, "values", a), float) for a in A_nodes])
        C_arr = np.stack([np.stack([np.asarray(getattr(c, "values", c), float) for c in
                                    ((v.c1, v.c2) if hasattr(v, "c1") else v)]) for v in C_nodes])
        F_arr = None if f_nodes is None else np.stack([np.asarray(getattr(f, "values", f), float)
                                                       for f in f_nodes])
        m = len(A_arr)
        kw.setdefault("m_theta", m)

        def interp(arr):
            def at(theta):
                s = (theta % 1.0) * m
                j = int(math.floor(s)) % m
                w = s - math.floor(s)
                return (1 - w) * arr[j] + w * arr[(j + 1) % m]
            return at

        Ci = interp(C_arr)
        return cls(grid, interp(A_arr), lambda th: tuple(Ci(th)),
                   None if F_arr is None else interp(F_arr), **kw)

    @property
    def thetas(self) -> np.ndarray:
        return np.arange(self.m_theta) / self.m_theta

    def check(self) -> None:
        for th in self.thetas:
            a = self.A(th)
            if np.min(a) < -1e-12:
                raise ValueError(f"A < 0 at theta={th} (min {np.min(a):.3g})")
            if self.f is not None and abs(float(np.mean(self.f(th)))) > 1e-10:
                raise ValueError(f"source f has nonzero mean at theta={th}; periodic problem unsolvable")

    def auto_substeps(self) -> int:
        op = SplitOperator(self.grid)
        scale = max(op.stability_scale(self.A(th), *self.C(th)) for th in self.thetas)
        dt = self.safety / (self.lam * scale)
        return max(1, math.ceil(1.0 / (self.m_theta * dt)))


@dataclass
class CellSolution:
    S: list[ScalarField]
    mu: float
    nu: float
    lam: float
    periodicity_residual: float
    iterations: int
    converged: bool = True
    residual_history: list[float] = field(default_factory=list)
    substeps: int = 1

    @property
    def thetas(self) -> np.ndarray:
        return np.arange(len(self.S)) / len(self.S)

    def values(self) -> np.ndarray:
        return np.stack([s.values for s in self.S])


class _Marcher:
    def __init__(self, p: ThetaProblem):
        self.p = p
        self.grid = p.grid
        self.op = SplitOperator(p.grid)
        self.sub = p.substeps or p.auto_substeps()
        self.dt = 1.0 / (p.m_theta * self.sub)
        n = p.grid.n
        per_step = 8 * (3 * n * n + 4 * n * (n // 2 + 1))
        total = p.m_theta * self.sub
        self.cache = [None] * total if per_step * total <= CACHE_BYTES else None

    def _data(self, k: int):
        if self.cache is not None and self.cache[k] is not None:
            return self.cache[k]
        p = self.p
        theta = (k + 0.5) * self.dt
        A = p.A(theta)
        C1, C2 = p.C(theta)
        Abar = 0.5 * (float(A.max()) + float(A.min()))
        rate = p.mu + p.lam * (Abar + p.nu) * self.op.symbol
        x = rate * self.dt
        fhat = None if p.f is None else fft(p.f(theta))
        item = (A - Abar, C1, C2, np.exp(-x), self.dt * exprel(-x), fhat)
        if self.cache is not None:
            self.cache[k] = item
        return item

    def step(self, shat: np.ndarray, k: int) -> np.ndarray:
        Aminus, C1, C2, E, Phi, fhat = self._data(k)
        N = self.p.lam * flux_divergence_hat(self.grid, Aminus, shat, source=(C1, C2))
        if fhat is not None:
            N = N + fhat
        new = E * shat + Phi * N
        new[0, 0] = 0.0
        return new

    def period(self, shat: np.ndarray):
        nodes = []
        k = 0
        for _ in range(self.p.m_theta):
            nodes.append(shat)
            for _ in range(self.sub):
                shat = self.step(shat, k)
                k += 1
        return shat, nodes


def solve_theta_periodic(p: ThetaProblem, tol: float = 1e-10,
                         warm_start: CellSolution | None = None) -> CellSolution:
    """March periods until every theta node repeats within ``tol`` (L2)."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    p.check()
    n = p.grid.n
    mar = _Marcher(p)
    if warm_start is not None:
        shat = fft(warm_start.S[0].values)
    else:
        shat = np.zeros(p.grid.spectral_shape, dtype=complex)
    shat[0, 0] = 0.0
    prev = None
    history: list[float] = []
    converged = False
    for it in range(1, p.max_periods + 1):
        shat, nodes = mar.period(shat)
        if prev is not None:
            res = max(l2_norm_hat(a - b, n) for a, b in zip(nodes, prev))
            res = max(res, l2_norm_hat(shat - nodes[0], n))
            history.append(res)
            if res <= tol:
                converged = True
                break
            if len(history) > 5 and res > 0.99**5 * history[-6]:
                raise CellSolveError(
                    f"periodic march stalled: residual {res:.3e} after {it} periods "
                    f"(5-period reduction {res / history[-6]:.4f}); increase nu or the period budget")
        prev = nodes
    S = [ScalarField(p.grid, ifft(h, n)) for h in nodes]
    return CellSolution(S=S, mu=p.mu, nu=p.nu, lam=p.lam,
                        periodicity_residual=history[-1] if history else float("inf"),
                        iterations=it, converged=converged, residual_history=history, substeps=mar.sub)


# -- problems built from presets -------------------------------------------------

def preset_theta_problem(preset: CoefficientPreset, t: float, eps: float, grid: Grid, *,
                         tau: float = 0.0, nu: float = 0.0, m_theta: int = 128,
                         lam: float | None = None, **kw) -> ThetaProblem:
    """Cell problem with the full-model coefficients at parameter time ``t``; ``lam = 1/eps``."""
    x1, x2 = grid.coords

    def coeffs(theta):
        return assemble_arrays(preset, t, tau, theta, eps, x1, x2)

    return ThetaProblem(grid, lambda th: coeffs(th)[0], lambda th: coeffs(th)[1:],
                        lam=1.0 / eps if lam is None else lam, nu=nu, m_theta=m_theta, **kw)


def limit_theta_problem(preset: CoefficientPreset, t: float, tau: float, grid: Grid, *,
                        nu: float = 0.0, m_theta: int = 128, **kw) -> ThetaProblem:
    """Cell problem with the limit coefficients (``lam = 1``)."""
    x1, x2 = grid.coords

    def coeffs(theta):
        return limit_arrays(preset, t, tau, theta, x1, x2)[:3]

    return ThetaProblem(grid, lambda th: coeffs(th)[0], lambda th: coeffs(th)[1:],
                        lam=1.0, nu=nu, m_theta=m_theta, **kw)


def solve_dsdt(preset: CoefficientPreset, t: float, eps: float, p: ThetaProblem, sol: CellSolution,
               tol: float = 1e-10, tau: float = 0.0) -> list[ScalarField]:
    """``dS/dt`` from the t-differentiated cell equation.

    Source: ``lam div(dA/dt grad S) + lam div(dC/dt)``, with ``grad S``
    interpolated linearly in theta between the solved nodes.
    """
    grid = p.grid
    x1, x2 = grid.coords
    n = grid.n
    m = len(sol.S)
    grads = np.stack([np.stack([ifft(g, n) for g in grad_hat(grid, fft(s.values))]) for s in sol.S])

    def source(theta):
        dA, dC1, dC2 = assemble_dt_arrays(preset, t, tau, theta, eps, x1, x2)
        s = (theta % 1.0) * m
        j = int(math.floor(s)) % m
        w = s - math.floor(s)
        g = (1 - w) * grads[j] + w * grads[(j + 1) % m]
        return dC1 + dA * g[0], dC2 + dA * g[1]

    q = ThetaProblem(grid, p.A, source, lam=p.lam, mu=p.mu, nu=p.nu, m_theta=m,
                     substeps=sol.substeps, safety=p.safety, max_periods=p.max_periods)
    return solve_theta_periodic(q, tol).S


# -- estimates --------------------------------------------------------------------------

@dataclass
class EstimateRow:
    estimate_id: str
    lhs: float
    rhs: float

    @property
    def passed(self) -> bool:
        return bool(self.lhs <= self.rhs)


@dataclass
class EstimateReport:
    rows: list[EstimateRow]
    nu: float
    mu: float
    lam: float
    gap_from_previous: float | None = None

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def get(self, estimate_id: str) -> EstimateRow:
        for r in self.rows:
            if r.estimate_id == estimate_id:
                return r
        raise KeyError(estimate_id)

    def csv_rows(self):
        return [[r.estimate_id, repr(float(r.lhs)), repr(float(r.rhs)), str(r.passed).lower(),
                 repr(float(self.nu)), repr(float(self.mu)), repr(float(self.lam))] for r in self.rows]


ESTIMATE_HEADER = ["estimate_id", "lhs", "rhs", "pass", "nu", "mu", "lambda"]


def write_estimates_csv(path: str | Path, reports: Sequence[EstimateReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ESTIMATE_HEADER)
        for rep in reports:
            w.writerows(rep.csv_rows())


def _theta_derivative(p: ThetaProblem, sol: CellSolution) -> np.ndarray:
    """``dS/dtheta`` at the nodes, read off the equation."""
    n = p.grid.n
    out = []
    for th, s in zip(sol.thetas, sol.S):
        A = p.A(th) + p.nu
        C1, C2 = p.C(th)
        shat = fft(s.values)
        rhs = p.lam * flux_divergence_hat(p.grid, A, shat, source=(C1, C2)) - p.mu * shat
        if p.f is not None:
            rhs = rhs + fft(p.f(th))
        rhs[0, 0] = 0.0
        out.append(ifft(rhs, n))
    return np.stack(out)


def cell_estimates(sol: CellSolution, p: ThetaProblem, hyp: HypothesisReport,
                   dSdt: Sequence[ScalarField] | None = None) -> EstimateReport:
    """Measured left-hand sides against the bounds instantiated with ``hyp``'s constants."""
    grid = p.grid
    n = grid.n
    eps = 1.0 / p.lam
    g, nu, G = hyp.gamma, p.nu, hyp.Gtilde_thr
    S = sol.values()
    Shat = np.stack([fft(s) for s in S])
    d1, d2 = grid.ik
    gx = np.stack([ifft(d1 * h, n) for h in Shat])
    gy = np.stack([ifft(d2 * h, n) for h in Shat])
    lap = np.stack([ifft(-grid.k2_norm * h, n) for h in Shat])
    grad2 = gx**2 + gy**2
    A = np.stack([p.A(th) for th in sol.thetas])

    def L2L2(v2):  # v2: pointwise squares
        return float(np.sqrt(np.mean(v2)))

    def LinfL2(v2):
        return float(np.sqrt(np.max(np.mean(v2, axis=(1, 2)))))

    dth = _theta_derivative(p, sol)
    rows = [EstimateRow("3.280", float(np.max(np.abs(S.mean(axis=(1, 2))))), 1e-12)]
    if nu > 0:
        big = g * g / nu**2 + 2 * eps * g * g / nu * (g * g / nu**2 + 1)
        rows += [
            EstimateRow("+01", L2L2(grad2), g / nu),
            EstimateRow("+02", L2L2(lap**2), math.sqrt(2) * eps * g / nu * math.sqrt(g * g / nu**2 + 1)),
            EstimateRow("3.281", L2L2(dth**2), g / math.sqrt(eps * nu) * math.sqrt(g / (2 * nu) + 1)),
            EstimateRow("3.282", LinfL2(grad2), math.sqrt(big)),
            EstimateRow("3.283", LinfL2(S**2), math.sqrt(big)),
        ]
    rows.append(EstimateRow("gr2", L2L2(np.clip(A, 0, None) * grad2), g))
    if hyp.theta_window is not None and G > 0:
        lo, hi = hyp.theta_window
        th = sol.thetas
        inw = (th >= lo) & (th <= hi) if hi >= lo else (th >= lo) | (th <= hi)
        width = (hi - lo) % 1.0 or 1.0
        val = math.sqrt(float(np.mean(grad2[inw], axis=(1, 2)).sum()) / len(th)) if inw.any() else 0.0
        rows.append(EstimateRow("gr3", val, g / math.sqrt(G)))
        xxc = g / math.sqrt(G) + 2 * eps * g**3
        rows.append(EstimateRow("XXC", LinfL2(S**2) ** 2, xxc))
        rows.append(EstimateRow("3.105", LinfL2(S**2) ** 2, xxc))
    if dSdt is not None:
        D = np.stack([d.values for d in dSdt])
        dt_norm = LinfL2(D**2)
        if nu > 0:
            rows.append(EstimateRow("3.29", dt_norm, eps**3 * g / nu * (1 + g / nu)))
        if G > 0:
            b1013 = eps * ((g + eps * g**3) / math.sqrt(G) + (g * g + eps * eps * g**4))
            rows.append(EstimateRow("3.1013", dt_norm**2, b1013))
            rows.append(EstimateRow("3.106", dt_norm**2, b1013))
    return EstimateReport(rows=rows, nu=nu, mu=p.mu, lam=p.lam)


def continuation_nu(p: ThetaProblem, nu_schedule: Sequence[float], tol: float = 1e-10, *,
                    hyp: HypothesisReport | None = None,
                    dsdt: Callable[[ThetaProblem, CellSolution], list[ScalarField]] | None = None):
    """Solve along a decreasing viscosity schedule, warm-starting each solve.

    ``mu`` is forced to 0 (the mean-zero projection pins the mean).  With
    ``hyp`` given, an :class:`EstimateReport` is produced at every ``nu``;
    ``dsdt(problem, solution)`` supplies ``dS/dt`` for the t-derivative bounds.
    """
    sched = [float(v) for v in nu_schedule]
    if not sched:
        raise ValueError("empty nu schedule")
    if any(b >= a for a, b in zip(sched, sched[1:])):
        raise ValueError("nu schedule must be strictly decreasing")
    if sched[-1] < 1e-6 or sched[-1] <= 0:
        raise ValueError("final nu must be >= 1e-6")
    reports: list[EstimateReport] = []
    sol = None
    for nu in sched:
        q = ThetaProblem(p.grid, p.A, p.C, p.f, lam=p.lam, mu=0.0, nu=nu, m_theta=p.m_theta,
                         substeps=p.substeps, safety=p.safety, max_periods=p.max_periods)
        new = solve_theta_periodic(q, tol, warm_start=sol)
        gap = None if sol is None else float(np.max(np.sqrt(np.mean((new.values() - sol.values()) ** 2,
                                                                     axis=(1, 2)))))
        if hyp is not None:
            rep = cell_estimates(new, q, hyp, dsdt(q, new) if dsdt is not None else None)
            rep.gap_from_previous = gap
            reports.append(rep)
        sol = new
    return sol, reports
