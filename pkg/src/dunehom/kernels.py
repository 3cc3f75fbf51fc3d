"""Kernel backend selection.

The Cython extension is used when it imports; otherwise the NumPy versions in
``_kernels_py`` take over.  Set ``DUNEHOM_PURE_PYTHON=1`` to force the
fallback (the benchmark and the backend-agreement tests do this).
"""
import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("DUNEHOM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def _c(a):
    return np.ascontiguousarray(a, dtype=float)


def transport_coefficients(u1, u2, fa, fc, g0, g1, g2):
    shape = np.broadcast_shapes(np.shape(u1), np.shape(u2), np.shape(fa), np.shape(fc))
    if _impl is _kernels_py or len(shape) != 2:
        return _kernels_py.transport_coefficients(u1, u2, fa, fc, g0, g1, g2)
    b = [_c(np.broadcast_to(v, shape)) for v in (u1, u2, fa, fc)]
    return _impl.transport_coefficients(*b, float(g0), float(g1), float(g2))


def fd_div_flux(coef, z, h):
    return _impl.fd_div_flux(_c(coef), _c(z), float(h))


def fd_centered_div(c1, c2, h):
    return _impl.fd_centered_div(_c(c1), _c(c2), float(h))
