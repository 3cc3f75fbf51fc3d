"""NumPy implementations of the pointwise and stencil kernels.

These mirror the Cython module ``dunehom._kernels`` one-to-one and are used
when the extension is unavailable or ``DUNEHOM_PURE_PYTHON`` is set.
"""
import numpy as np


def transport_coefficients(u1, u2, fa, fc, g0, g1, g2):
    """Pointwise ``A = fa*g_a(|u|)`` and ``C = fc*g_c(|u|)*u/|u|``.

    ``g_c(|u|)/|u| = g2*|u|/(1+|u|^2)`` is smooth, so ``C`` vanishes at ``u = 0``
    without a special case.
    """
    s = u1 * u1 + u2 * u2
    inv = 1.0 / (1.0 + s)
    A = fa * (g0 + g1 * s * inv)
    w = fc * g2 * np.sqrt(s) * inv
    return A, w * u1, w * u2


def fd_div_flux(coef, z, h):
    """5-point ``div(coef grad z)`` with arithmetic face averages, periodic."""
    inv_h2 = 1.0 / (h * h)
    out = np.zeros_like(z)
    for axis in (0, 1):
        zp = np.roll(z, -1, axis=axis)
        cp = 0.5 * (coef + np.roll(coef, -1, axis=axis))
        flux = cp * (zp - z)
        out += flux - np.roll(flux, 1, axis=axis)
    return out * inv_h2


def fd_centered_div(c1, c2, h):
    """Centered-difference divergence of ``(c1, c2)``, periodic."""
    return (np.roll(c1, -1, axis=0) - np.roll(c1, 1, axis=0)
            + np.roll(c2, -1, axis=1) - np.roll(c2, 1, axis=1)) / (2.0 * h)
