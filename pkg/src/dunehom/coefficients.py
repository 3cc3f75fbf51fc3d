"""Water-flow coefficient presets and the diffusion/transport fields they induce.

Three regimes share one divergence-form equation

    dz/dt = eps**-p * div(A grad z + C),    p = 1 (short, mean) or 2 (long),

with ``A = a (1 - b s m) g_a(|u|)`` and ``C = c (1 - b s m) g_c(|u|) u/|u|``,
where ``s = eps`` (short, long) or ``sqrt(eps)`` (mean).  The presets build
``u`` and ``m`` from closed-form trigonometric pieces multiplied by a smooth
theta-mask that switches the spatial/temporal variation off wherever the
carrier speed drops to the threshold, which makes the structural hypotheses
hold by construction instead of by assumption.
"""
from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .fields import Grid, ScalarField, VectorField

TWO_PI = 2.0 * np.pi
REGIMES = ("short", "mean", "long")
EQ_TOL = 1e-10

DEGENERATE = "degenerate_Theta"
THRESHOLD = "threshold_Theta_thr"
ACTIVE = "active"


# -- transport law -------------------------------------------------------------

@dataclass(frozen=True)
class TransportLaw:
    """``g_a(u) = g0 + g1 u^2/(1+u^2)`` and ``g_c(u) = g2 u^2/(1+u^2)``."""

    g0: float = 0.05
    g1: float = 1.0
    g2: float = 0.6
    U_thr: float = 0.2

    def ga(self, u):
        u2 = np.square(u)
        return self.g0 + self.g1 * u2 / (1.0 + u2)

    def gc(self, u):
        u2 = np.square(u)
        return self.g2 * u2 / (1.0 + u2)

    @property
    def G_thr(self) -> float:
        """Lower bound of ``g_a`` above the threshold speed (``g_a`` is nondecreasing)."""
        return float(self.ga(self.U_thr))

    @property
    def d(self) -> float:
        """Bound on ``sup|g| + sup|g'|`` for both laws; ``max u/(1+u^2)^2 = 9/(16 sqrt 3)``."""
        slope = 2.0 * 9.0 / (16.0 * math.sqrt(3.0))
        return max(abs(self.g0) + abs(self.g1) + slope * abs(self.g1),
                   abs(self.g2) + slope * abs(self.g2))


def eval_transport(law: TransportLaw, u):
    """``(g_a(u), g_c(u))``; floats for scalar ``u``, arrays otherwise."""
    arr = np.asarray(u, dtype=float)
    if not np.all(arr >= 0):
        raise ValueError(f"transport laws are defined for u >= 0, got {u!r}")
    if arr.ndim == 0:
        return float(law.ga(arr)), float(law.gc(arr))
    return law.ga(arr), law.gc(arr)


# -- smooth building blocks ----------------------------------------------------

def smooth_step(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        left = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        right = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
        out = left / (left + right)
    return np.where(s <= 0, 0.0, np.where(s >= 1, 1.0, out))


def periodic_bump(theta, lo, hi):
    """Smooth bump equal to 1 at the middle of ``(lo, hi)`` (mod 1), zero outside."""
    width = (hi - lo) % 1.0 or 1.0
    s = ((np.asarray(theta, dtype=float) - lo) % 1.0) / width
    inside = (s > 0) & (s < 1)
    y = 2.0 * np.where(inside, s, 0.5) - 1.0
    return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - y * y)), 0.0)


def _ga_directional(law, u1, u2, d1, d2):
    """Derivative of ``g_a(|u|)`` along ``(d1, d2)``."""
    S = u1 * u1 + u2 * u2
    return law.g1 * 2.0 * (u1 * d1 + u2 * d2) / (1.0 + S) ** 2


def _gcu_directional(law, u1, u2, d1, d2):
    """Derivative of ``g_c(|u|) u/|u| = g2 |u| u/(1+|u|^2)`` along ``(d1, d2)``."""
    S = u1 * u1 + u2 * u2
    r = np.sqrt(S)
    G = law.g2 * r / (1.0 + S)
    dot = u1 * d1 + u2 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        dG = np.where(r > 0, law.g2 * (1.0 - S) * dot / (np.where(r > 0, r, 1.0) * (1.0 + S) ** 2), 0.0)
    return dG * u1 + G * d1, dG * u2 + G * d2


# -- presets -----------------------------------------------------------------------

@dataclass(frozen=True)
class CoefficientPreset:
    """Closed-form water velocity/height family for one regime.

    Carrier speed ``w(theta)`` runs along ``e1``: ``W0 + W1 cos(2 pi theta)`` for
    the ``tidal`` carrier, ``W0 * bump`` vanishing on ``[gap_lo, gap_hi]`` for the
    ``gapped`` carrier.  Everything that varies in ``x``, ``t`` or ``tau`` is
    multiplied by ``chi(theta) = smooth_step((|w| - U_thr - margin)/width)``.
    """

    name: str
    regime: str
    a: float = 1.0
    b: float = 0.5
    c: float = 0.8
    transport: TransportLaw = field(default_factory=TransportLaw)
    carrier: str = "tidal"
    W0: float = 0.3
    W1: float = 1.0
    gap_lo: float = 0.6
    gap_hi: float = 0.9
    margin: float = 0.05
    width: float = 0.15
    u1: float = 0.15      # spatial velocity perturbation (U1 for long, U for short/mean)
    u2: float = 0.1       # long: U2 amplitude
    u_tau: float = 0.0    # mean: U1(t, tau, theta, x) amplitude
    t_mod: float = 0.0    # short/mean: slow modulation of the perturbation
    omega: float = TWO_PI
    h0: float = 0.5
    m1: float = 0.3
    m2: float = 0.3       # long: M2 amplitude
    m_tau: float = 0.0    # mean: tau-dependent height amplitude

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.carrier not in ("tidal", "gapped"):
            raise ValueError(f"unknown carrier {self.carrier!r}")
        if not self.a > 0:
            raise ValueError("a must be positive")

    def with_overrides(self, **overrides) -> "CoefficientPreset":
        law_keys = {"g0", "g1", "g2", "U_thr"}
        law_kw = {k: float(v) for k, v in overrides.items() if k in law_keys}
        rest = {k: v for k, v in overrides.items() if k not in law_keys}
        names = {f.name for f in dataclasses.fields(self)}
        unknown = set(rest) - names
        if unknown:
            raise KeyError(f"unknown preset parameter(s): {sorted(unknown)}")
        law = dataclasses.replace(self.transport, **law_kw)
        return dataclasses.replace(self, transport=law, **rest)

    # scalars --------------------------------------------------------------
    @property
    def p(self) -> int:
        return 2 if self.regime == "long" else 1

    def small_parameter(self, eps: float) -> float:
        """``s`` in the factor ``1 - b s m``."""
        return math.sqrt(eps) if self.regime == "mean" else eps

    @property
    def W_ref(self) -> float:
        return abs(self.W0) + abs(self.W1) if self.carrier == "tidal" else abs(self.W0)

    # theta pieces -------------------------------------------------------------
    def carrier_speed(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.carrier == "tidal":
            return self.W0 + self.W1 * np.cos(TWO_PI * theta)
        return self.W0 * periodic_bump(theta, self.gap_hi, self.gap_lo)

    def mask(self, theta):
        w = np.abs(self.carrier_speed(theta))
        return smooth_step((w - self.transport.U_thr - self.margin) / self.width)

    # spatial shapes ---------------------------------------------------------
    @staticmethod
    def _shape_v1(x1, x2):
        return (np.sin(TWO_PI * x2 + 0.3) + 0.5 * np.cos(TWO_PI * (x1 + x2)),
                0.8 * np.sin(TWO_PI * x1 + 0.7))

    @staticmethod
    def _shape_v2(x1, x2):
        return np.cos(TWO_PI * x2), np.sin(TWO_PI * (x1 - x2))

    @staticmethod
    def _shape_m(x1, x2):
        return 0.6 * np.cos(TWO_PI * x1 + 0.4) + 0.4 * np.sin(TWO_PI * (x1 + 2 * x2))

    # full velocity and height ---------------------------------------------------
    def _pieces(self, t, tau, theta, x1, x2):
        t, tau, theta = (np.asarray(v, dtype=float) for v in (t, tau, theta))
        w = self.carrier_speed(theta)
        chi = self.mask(theta)
        zero = np.zeros(np.broadcast_shapes(np.shape(t), np.shape(tau), np.shape(theta),
                                            np.shape(x1), np.shape(x2)))
        return t, tau, theta, w, chi, zero

    def velocity(self, t, tau, theta, x1, x2, eps):
        """Velocity entering the full model at small parameter ``eps`` (eps=0: the limit)."""
        v0, v1 = self._velocity_expansion(t, tau, theta, x1, x2)
        if self.regime == "long":
            u1 = v0[0] + eps * v1[0] + eps**2 * v1[2]
            u2 = v0[1] + eps * v1[1] + eps**2 * v1[3]
        elif self.regime == "mean":
            s = math.sqrt(eps)
            u1, u2 = v0[0] + s * v1[0], v0[1] + s * v1[1]
        else:
            u1, u2 = v0
        return u1, u2

    def _velocity_expansion(self, t, tau, theta, x1, x2):
        """Zeroth-order velocity and the first (and for long, second) order terms."""
        t, tau, theta, w, chi, zero = self._pieces(t, tau, theta, x1, x2)
        s1, s2 = self._shape_v1(x1, x2)
        if self.regime == "long":
            q1, q2 = self._shape_v2(x1, x2)
            ct = np.cos(self.omega * t)
            u0 = (w + zero, zero)
            first = (chi * self.u1 * s1 + zero, chi * self.u1 * s2 + zero,
                     chi * self.u2 * q1 * ct + zero, chi * self.u2 * q2 * ct + zero)
            return u0, first
        tfac = 1.0 + self.t_mod * np.sin(self.omega * t)
        u0 = (w + chi * self.u1 * tfac * s1 + zero, chi * self.u1 * tfac * s2 + zero)
        if self.regime == "mean":
            q1, q2 = self._shape_v2(x1, x2)
            ctau = np.cos(TWO_PI * tau)
            first = (chi * self.u_tau * ctau * q1 + zero, chi * self.u_tau * ctau * q2 + zero)
        else:
            first = (zero, zero)
        return u0, first

    def height(self, t, tau, theta, x1, x2, eps):
        """Height ``m`` in ``1 - b s m``; for long this is ``M + eps^2 M2``."""
        t, tau, theta, w, chi, zero = self._pieces(t, tau, theta, x1, x2)
        phi = self._shape_m(x1, x2)
        if self.regime == "long":
            base = self.h0 * (w / self.W_ref) ** 2
            m2 = chi * self.m2 * np.sin(TWO_PI * x2) * np.sin(self.omega * t)
            return base * (1.0 + chi * self.m1 * phi + eps**2 * m2) + zero
        tfac = 1.0 + self.t_mod * np.cos(self.omega * t)
        m = self.h0 * (1.0 + chi * self.m1 * phi * tfac)
        if self.regime == "mean":
            m = m + self.h0 * chi * self.m_tau * np.cos(TWO_PI * tau + 0.5) * (1.0 + 0.5 * np.cos(TWO_PI * x2))
        return m + zero

    def velocity_dt(self, t, tau, theta, x1, x2, eps):
        """Closed-form ``d/dt`` of :meth:`velocity` at fixed fast variables."""
        t, tau, theta, w, chi, zero = self._pieces(t, tau, theta, x1, x2)
        if self.regime == "long":
            q1, q2 = self._shape_v2(x1, x2)
            st = -self.omega * np.sin(self.omega * t)
            return (eps**2 * chi * self.u2 * q1 * st + zero, eps**2 * chi * self.u2 * q2 * st + zero)
        s1, s2 = self._shape_v1(x1, x2)
        dtfac = self.t_mod * self.omega * np.cos(self.omega * t)
        return chi * self.u1 * dtfac * s1 + zero, chi * self.u1 * dtfac * s2 + zero

    def height_dt(self, t, tau, theta, x1, x2, eps):
        t, tau, theta, w, chi, zero = self._pieces(t, tau, theta, x1, x2)
        if self.regime == "long":
            base = self.h0 * (w / self.W_ref) ** 2
            dm2 = chi * self.m2 * np.sin(TWO_PI * x2) * self.omega * np.cos(self.omega * t)
            return base * eps**2 * dm2 + zero
        phi = self._shape_m(x1, x2)
        dtfac = -self.t_mod * self.omega * np.sin(self.omega * t)
        return self.h0 * chi * self.m1 * phi * dtfac + zero

    @property
    def limit_depends_on_tau(self) -> bool:
        return False

    @property
    def limit_depends_on_t(self) -> bool:
        return self.regime != "long" and self.t_mod != 0.0 and self.u1 != 0.0


def _tidal(name, regime, **kw):
    return CoefficientPreset(name=name, regime=regime, **kw)


PRESETS = {
    "tidal-short": lambda: _tidal("tidal-short", "short", margin=0.3, u1=0.1, t_mod=0.2),
    "tidal-mean": lambda: _tidal("tidal-mean", "mean", margin=0.3, u1=0.1, u_tau=0.1, m_tau=0.4),
    "steady-mean": lambda: CoefficientPreset(
        name="steady-mean", regime="mean", a=1.0, b=0.6, c=1.0,
        transport=TransportLaw(g0=0.2, g1=1.0, g2=0.6, U_thr=0.0),
        W0=1.0, W1=0.5, margin=0.05, width=0.1, u1=0.3, u_tau=0.0, m1=0.3, m_tau=0.5),
    "tidal-long": lambda: _tidal("tidal-long", "long", margin=0.1, transport=TransportLaw(g0=0.0, g1=1.0, g2=0.6, U_thr=0.2)),
    "gapped-long": lambda: CoefficientPreset(
        name="gapped-long", regime="long", carrier="gapped", W0=1.0, margin=0.1,
        transport=TransportLaw(g0=0.0, g1=1.0, g2=0.6, U_thr=0.2)),
}


def get_preset(name: str, **overrides) -> CoefficientPreset:
    try:
        preset = PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; bundled: {sorted(PRESETS)}") from None
    return preset.with_overrides(**overrides) if overrides else preset


# -- assembly ------------------------------------------------------------------------

def assemble_arrays(preset: CoefficientPreset, t, tau, theta, eps, x1, x2):
    """``(A, C1, C2)`` sampled at the given points for the full model at ``eps``."""
    u1, u2 = preset.velocity(t, tau, theta, x1, x2, eps)
    m = preset.height(t, tau, theta, x1, x2, eps)
    factor = 1.0 - preset.b * preset.small_parameter(eps) * m
    if np.any(factor <= 0):
        raise ValueError(f"1 - b*s*m <= 0 (min {float(np.min(factor)):.3g}); "
                         f"preset {preset.name!r} is invalid at eps={eps}")
    law = preset.transport
    return kernels.transport_coefficients(u1, u2, preset.a * factor, preset.c * factor,
                                          law.g0, law.g1, law.g2)


def assemble_AC(preset: CoefficientPreset, t: float, tau: float, theta: float, eps: float,
                grid: Grid) -> tuple[ScalarField, VectorField]:
    if not eps > 0:
        raise ValueError("eps must be positive")
    x1, x2 = grid.coords
    A, C1, C2 = assemble_arrays(preset, t, tau, theta, eps, x1, x2)
    return ScalarField(grid, A), VectorField(ScalarField(grid, C1), ScalarField(grid, C2))


def assemble_dt_arrays(preset: CoefficientPreset, t, tau, theta, eps, x1, x2):
    """Closed-form ``(dA/dt, dC1/dt, dC2/dt)`` at fixed fast variables."""
    law = preset.transport
    s = preset.small_parameter(eps)
    u1, u2 = preset.velocity(t, tau, theta, x1, x2, eps)
    d1, d2 = preset.velocity_dt(t, tau, theta, x1, x2, eps)
    m = preset.height(t, tau, theta, x1, x2, eps)
    dm = preset.height_dt(t, tau, theta, x1, x2, eps)
    factor = 1.0 - preset.b * s * m
    dfactor = -preset.b * s * dm
    ga = law.ga(np.sqrt(u1 * u1 + u2 * u2))
    S = u1 * u1 + u2 * u2
    G = law.g2 * np.sqrt(S) / (1.0 + S)
    dga = _ga_directional(law, u1, u2, d1, d2)
    dg1, dg2 = _gcu_directional(law, u1, u2, d1, d2)
    dA = preset.a * (dfactor * ga + factor * dga)
    dC1 = preset.c * (dfactor * G * u1 + factor * dg1)
    dC2 = preset.c * (dfactor * G * u2 + factor * dg2)
    return dA, dC1, dC2


def limit_arrays(preset: CoefficientPreset, t, tau, theta, x1, x2):
    """Limit coefficients and their first-order corrections in the small parameter."""
    law = preset.transport
    (v1, v2), first = preset._velocity_expansion(t, tau, theta, x1, x2)
    w1, w2 = first[0], first[1]
    m0 = preset.height(t, tau, theta, x1, x2, 0.0)
    S = v1 * v1 + v2 * v2
    ga = law.ga(np.sqrt(S))
    G = law.g2 * np.sqrt(S) / (1.0 + S)
    At = preset.a * ga
    Ct1, Ct2 = preset.c * G * v1, preset.c * G * v2
    dga = _ga_directional(law, v1, v2, w1, w2)
    dg1, dg2 = _gcu_directional(law, v1, v2, w1, w2)
    A1 = preset.a * (-preset.b * m0 * ga + dga)
    C11 = preset.c * (-preset.b * m0 * G * v1 + dg1)
    C12 = preset.c * (-preset.b * m0 * G * v2 + dg2)
    return At, Ct1, Ct2, A1, C11, C12


def limit_AC(preset: CoefficientPreset, t: float, tau: float, theta: float, grid: Grid):
    """``(Atilde, Ctilde, A1, C1)``: eps -> 0 coefficients and first-order terms.

    The first-order terms are the derivative of the assembled coefficients in
    ``s`` (``eps`` for long, ``sqrt(eps)`` for mean) at ``s = 0``.  They reduce to
    ``-a b M g_a`` and ``-c b M g_c u/|u|`` when the velocity has no
    first-order part.
    """
    x1, x2 = grid.coords
    At, Ct1, Ct2, A1, C11, C12 = limit_arrays(preset, t, tau, theta, x1, x2)
    sf = lambda v: ScalarField(grid, v)  # noqa: E731
    return sf(At), VectorField(sf(Ct1), sf(Ct2)), sf(A1), VectorField(sf(C11), sf(C12))


# -- theta classification ----------------------------------------------------------------

def classify_theta(preset: CoefficientPreset, t: float, theta: float, eps: float,
                   n_sample: int = 16) -> str:
    """Classify a fast-time value as degenerate, threshold or active.

    ``eps = 0`` classifies the limit velocity ``U0(theta)``.
    """
    if preset.regime != "long":
        raise ValueError("classify_theta applies to the long regime")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    s = np.arange(n_sample) / n_sample
    x1, x2 = np.meshgrid(s, s, indexing="ij")
    u1, u2 = preset.velocity(t, 0.0, theta, x1, x2, eps)
    speed = np.sqrt(u1 * u1 + u2 * u2)
    m = preset.height(t, 0.0, theta, x1, x2, eps)
    if speed.max() <= 1e-12 and np.abs(m).max() <= 1e-12:
        return DEGENERATE
    if speed.max() < preset.transport.U_thr:
        return THRESHOLD
    return ACTIVE


# -- hypothesis checking --------------------------------------------------------------------

@dataclass(frozen=True)
class SamplingSpec:
    n_x: int = 16
    n_theta: int = 16
    n_t: int = 16
    n_tau: int = 4
    t_max: float = 1.0
    h: float = 1e-5
    h_mixed: float = 1e-4


@dataclass
class HypothesisReport:
    gamma: float
    Gtilde_thr: float
    theta_window: tuple[float, float] | None
    violations: list[tuple[str, tuple, float]]
    raw_maxima: dict[str, float] = field(default_factory=dict)
    scaled_maxima: dict[str, float] = field(default_factory=dict)
    d: float = 0.0
    G_thr: float = 0.0
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def write_csv(self, path) -> None:
        """Rows ``record, key, sample_point, value``: constants, maxima, then violations."""
        win = self.theta_window or (float("nan"), float("nan"))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["record", "key", "sample_point", "value"])
            for key, val in [("gamma", self.gamma), ("Gtilde_thr", self.Gtilde_thr), ("theta_alpha", win[0]),
                             ("theta_omega", win[1]), ("d", self.d), ("G_thr", self.G_thr)]:
                w.writerow(["constant", key, "", repr(float(val))])
            for key in sorted(self.raw_maxima):
                w.writerow(["raw_max", key, "", repr(float(self.raw_maxima[key]))])
            for key in sorted(self.scaled_maxima):
                w.writerow(["scaled_max", key, "", repr(float(self.scaled_maxima[key]))])
            for hid, point, mag in self.violations:
                pt = " ".join(repr(float(v)) for v in point)
                w.writerow(["violation", hid, pt, repr(float(mag))])


class _Sampler:
    """Coefficient evaluations on a (t, tau, theta, x1, x2) tensor grid."""

    def __init__(self, preset, eps, spec: SamplingSpec):
        self.preset, self.eps, self.spec = preset, eps, spec
        self.t = (np.arange(spec.n_t) + 0.5) / spec.n_t * spec.t_max
        n_tau = spec.n_tau if preset.regime == "mean" else 1
        self.tau = np.arange(n_tau) / n_tau
        self.theta = np.arange(spec.n_theta) / spec.n_theta
        s = np.arange(spec.n_x) / spec.n_x
        self.x1 = s[None, None, None, :, None]
        self.x2 = s[None, None, None, None, :]
        self.T = self.t[:, None, None, None, None]
        self.TAU = self.tau[None, :, None, None, None]
        self.TH = self.theta[None, None, :, None, None]

    def coeffs(self, dt=0.0, dtau=0.0, dth=0.0, dx1=0.0, dx2=0.0):
        return assemble_arrays(self.preset, self.T + dt, self.TAU + dtau, self.TH + dth,
                               self.eps, self.x1 + dx1, self.x2 + dx2)

    def velocity_height(self, dt=0.0, dtau=0.0, dx1=0.0, dx2=0.0):
        p = self.preset
        u = p.velocity(self.T + dt, self.TAU + dtau, self.TH, self.x1 + dx1, self.x2 + dx2, self.eps)
        m = p.height(self.T + dt, self.TAU + dtau, self.TH, self.x1 + dx1, self.x2 + dx2, self.eps)
        return np.stack(np.broadcast_arrays(u[0], u[1], m))

    def grad(self, h, **shift):
        Ap1, Cp1, _ = self.coeffs(dx1=h, **shift)
        Am1, Cm1, _ = self.coeffs(dx1=-h, **shift)
        Ap2, _, Dp2 = self.coeffs(dx2=h, **shift)
        Am2, _, Dm2 = self.coeffs(dx2=-h, **shift)
        gA = np.stack([(Ap1 - Am1), (Ap2 - Am2)]) / (2 * h)
        divC = ((Cp1 - Cm1) + (Dp2 - Dm2)) / (2 * h)
        return gA, divC

    def point(self, idx):
        it, itau, ith, i1, i2 = idx
        n = self.spec.n_x
        return (float(self.t[it]), float(self.tau[itau]), float(self.theta[ith]), i1 / n, i2 / n)


def _norm(v, axis=0):
    return np.sqrt(np.sum(np.square(v), axis=axis))


def validate_hypotheses(preset: CoefficientPreset, eps: float,
                        samples: SamplingSpec | None = None) -> HypothesisReport:
    """Sample the structural hypotheses of the regime and measure their constants."""
    spec = samples or SamplingSpec()
    sm = _Sampler(preset, eps, spec)
    law = preset.transport
    h, hm = spec.h, spec.h_mixed
    violations: list[tuple[str, tuple, float]] = []
    notes: list[str] = []

    def flag(name, mask, magnitude):
        if np.any(mask):
            idx = np.unravel_index(np.argmax(np.where(mask, magnitude, -np.inf)), mask.shape)
            violations.append((name, sm.point(idx), float(np.asarray(magnitude)[idx])))

    # transport law
    u = np.linspace(0.0, 10.0, 2001)
    gap = law.gc(u) - law.ga(u)
    if np.any(gap > EQ_TOL):
        i = int(np.argmax(gap))
        violations.append(("transport:g_a>=g_c", (float(u[i]),), float(gap[i])))
    if np.any(law.gc(u) < -EQ_TOL) or min(law.g0, law.g1, law.g2) < 0:
        violations.append(("transport:g>=0", (), float(min(law.g0, law.g1, law.g2))))
    dgc0 = max(abs(law.gc(hh) - law.gc(-hh)) / (2 * hh) for hh in (1e-4, 1e-5))
    if abs(law.gc(0.0)) > EQ_TOL or dgc0 > 1e-7:
        violations.append(("transport:g_c(0)=g_c'(0)=0", (0.0,), float(dgc0)))
    if law.G_thr <= 0:
        violations.append(("transport:G_thr>0", (law.U_thr,), law.G_thr))

    A, C1, C2 = sm.coeffs()
    Cn = _norm(np.stack([C1, C2]))
    dA_t = (sm.coeffs(dt=h)[0] - sm.coeffs(dt=-h)[0]) / (2 * h)
    Cp, Cm = sm.coeffs(dt=h), sm.coeffs(dt=-h)
    dC_t = _norm(np.stack([Cp[1] - Cm[1], Cp[2] - Cm[2]])) / (2 * h)
    Tp, Tm = sm.coeffs(dth=h), sm.coeffs(dth=-h)
    dA_th = np.abs(Tp[0] - Tm[0]) / (2 * h)
    dC_th = _norm(np.stack([Tp[1] - Tm[1], Tp[2] - Tm[2]])) / (2 * h)
    gA, divC = sm.grad(h)
    gAn = _norm(gA)
    gAp, divCp = sm.grad(hm, dt=hm)
    gAm, divCm = sm.grad(hm, dt=-hm)
    dgA_t = _norm(gAp - gAm) / (2 * hm)
    ddivC_t = np.abs(divCp - divCm) / (2 * hm)

    if preset.regime == "mean":
        Sp, Sm_ = sm.coeffs(dtau=h), sm.coeffs(dtau=-h)
        dA_tau = np.abs(Sp[0] - Sm_[0]) / (2 * h)
        dC_tau = _norm(np.stack([Sp[1] - Sm_[1], Sp[2] - Sm_[2]])) / (2 * h)
        gAtp, _ = sm.grad(hm, dtau=hm)
        gAtm, _ = sm.grad(hm, dtau=-hm)
        dgA_tau = _norm(gAtp - gAtm) / (2 * hm)
    else:
        dA_tau = dC_tau = dgA_tau = np.zeros_like(A)

    # periodicity in theta (and tau)
    P = sm.coeffs(dth=1.0)
    per = np.abs(P[0] - A) + _norm(np.stack([P[1] - C1, P[2] - C2]))
    flag("periodicity:theta", per > EQ_TOL, per)
    if preset.regime == "mean":
        P = sm.coeffs(dtau=1.0)
        per = np.abs(P[0] - A) + _norm(np.stack([P[1] - C1, P[2] - C2]))
        flag("periodicity:tau", per > EQ_TOL, per)
    flag("A>=0", A < -EQ_TOL, -A)

    raw = {
        "|A|": np.abs(A), "|C|": Cn, "|dA/dt|": np.abs(dA_t), "|dC/dt|": dC_t,
        "|d grad A/dt|": dgA_t, "|dA/dtheta|": dA_th, "|dC/dtheta|": dC_th,
        "|grad A|": gAn, "|div C|": np.abs(divC), "|d div C/dt|": ddivC_t,
    }
    if preset.regime == "long":
        e = eps
        scale = {"|dA/dt|": e**2, "|dC/dt|": e**2, "|d grad A/dt|": e**2, "|grad A|": e,
                 "|div C|": e, "|d div C/dt|": e**2}
        table = "eps-scaled (long regime)"
    else:
        e = 1.0
        scale = {}
        table = "unscaled"
    notes.append(f"bound table: {table}")

    # weighted bounds; at A = 0 the numerators must vanish
    pos = A > EQ_TOL
    safeA = np.where(pos, A, 1.0)
    weighted = {
        "|C|/A": (Cn, 1.0, 1),
        "|C|^2/A": (Cn**2, 1.0, 1),
        "|grad A|/A": (gAn, e, 1),
        "|dA/dt|/A": (np.abs(dA_t), e**2, 1),
        "|d grad A/dt|^2/A": (dgA_t**2, e**2, 1),
        "|div C|/A": (np.abs(divC), e, 1),
        "|dC/dt|/A": (dC_t, e**2, 1),
        "|dC/dt|^2/A": (dC_t**2, e**2, 2),
    }
    if preset.regime == "mean":
        weighted["|dA/dtau|^2/A"] = (dA_tau**2, eps, 1)
        weighted["|d grad A/dtau|^2/A"] = (dgA_tau**2, eps, 1)

    scaled: dict[str, float] = {}
    gammas = []
    for key, val in raw.items():
        g = float(np.max(val)) / scale.get(key, 1.0)
        scaled[key] = g
        gammas.append(g)
    for key, (num, sc, power) in weighted.items():
        ratio = np.where(pos, num / (sc * safeA), 0.0)
        g = float(np.max(ratio)) ** (1.0 / power)
        scaled[key] = g
        gammas.append(g)
        flag(f"weighted:{key} at A=0", (~pos) & (num > EQ_TOL), num)
    gamma = max(gammas)

    # threshold constant and window
    moving = ((np.abs(dA_t) > EQ_TOL) | (gAn > EQ_TOL) | (dC_t > EQ_TOL) | (np.abs(divC) > EQ_TOL)
              | (dA_tau > EQ_TOL) | (dC_tau > EQ_TOL))
    per_theta_min = A.min(axis=(0, 1, 3, 4))
    if np.any(moving):
        Gt = (1.0 - 1e-9) * float(A[moving].min())
    else:
        Gt = (1.0 - 1e-9) * float(per_theta_min.max())
    if not Gt > 0:
        violations.append(("threshold:Gtilde_thr>0", (), Gt))
    flag("threshold:A<=Gtilde implies frozen", moving & (A <= Gt), A)
    window = _longest_window(per_theta_min >= Gt, sm.theta)
    if window is None:
        violations.append(("threshold:window", (), 0.0))

    # threshold implication on the raw velocity/height
    vh = sm.velocity_height()
    speed = _norm(vh[:2])
    slow = speed <= law.U_thr
    if np.any(slow):
        dv_t = np.abs(sm.velocity_height(dt=h) - sm.velocity_height(dt=-h)).max(axis=0) / (2 * h)
        dv_x = (np.abs(sm.velocity_height(dx1=h) - sm.velocity_height(dx1=-h)).max(axis=0)
                + np.abs(sm.velocity_height(dx2=h) - sm.velocity_height(dx2=-h)).max(axis=0)) / (2 * h)
        mag = dv_t + dv_x
        if preset.regime == "mean":
            mag = mag + np.abs(sm.velocity_height(dtau=h) - sm.velocity_height(dtau=-h)).max(axis=0) / (2 * h)
        flag("threshold implication", slow & (mag > 1e-8), mag)

    if preset.regime == "long":
        zero_u = speed.max(axis=(0, 1, 3, 4)) <= 1e-12
        m = np.abs(vh[2])
        any_zero = (speed.min(axis=(0, 1, 3, 4)) <= 1e-12) | (m.min(axis=(0, 1, 3, 4)) <= 1e-12)
        all_zero = zero_u & (m.max(axis=(0, 1, 3, 4)) <= 1e-12)
        bad = any_zero & ~all_zero
        if np.any(bad):
            i = int(np.argmax(bad))
            violations.append(("degenerate:partial zero", (float(sm.theta[i]),), 1.0))
        notes.append("window clause evaluated with eps*U1 (expansion-consistent)")
        if window is not None:
            inw = _in_window(sm.theta, window)
            if np.any(inw) and speed[:, :, inw].min() < law.U_thr:
                notes.append("velocity drops below U_thr inside the detected window")

    raw_max = {k: float(np.max(v)) for k, v in raw.items()}
    return HypothesisReport(gamma=gamma, Gtilde_thr=Gt, theta_window=window, violations=violations,
                            raw_maxima=raw_max, scaled_maxima=scaled, d=law.d, G_thr=law.G_thr,
                            notes=notes)


def _longest_window(ok: np.ndarray, theta: np.ndarray):
    """Longest periodic run of True samples, as ``(theta_alpha, theta_omega)``."""
    m = len(ok)
    if ok.all():
        return (0.0, 1.0)
    if not ok.any():
        return None
    start = int(np.argmin(ok))  # a False entry; runs never wrap across it
    best, best_len, run_start, run_len = None, 0, None, 0
    for k in range(1, m + 1):
        i = (start + k) % m
        if ok[i]:
            if run_len == 0:
                run_start = i
            run_len += 1
            if run_len > best_len:
                best, best_len = (run_start, i), run_len
        else:
            run_len = 0
    if best_len < 2:
        return None
    return (float(theta[best[0]]), float(theta[best[1]]))


def _in_window(theta, window):
    lo, hi = window
    if hi >= lo:
        return (theta >= lo) & (theta <= hi)
    return (theta >= lo) | (theta <= hi)
