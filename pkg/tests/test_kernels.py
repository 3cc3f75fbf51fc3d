import numpy as np
import pytest
from hypothesis import given, strategies as st

from dunehom import _kernels_py, kernels
from dunehom.coefficients import TransportLaw, eval_transport

try:
    from dunehom import _kernels as compiled
except ImportError:  # pragma: no cover - extension not built
    compiled = None

needs_ext = pytest.mark.skipif(compiled is None, reason="compiled extension not built")
seeds = st.integers(0, 2**32 - 1)
sizes = st.sampled_from([4, 6, 8, 16, 32])


def _fields(seed, n, k=2):
    r = np.random.default_rng(seed)
    return [np.ascontiguousarray(r.standard_normal((n, n))) for _ in range(k)]


def test_backend_flag():
    assert kernels.BACKEND in ("cython", "python")


@needs_ext
@given(seeds, sizes)
def test_transport_backends_agree(seed, n):
    u1, u2 = _fields(seed, n)
    fa = np.abs(u1) + 0.5
    fc = np.abs(u2) + 0.1
    a = _kernels_py.transport_coefficients(u1, u2, fa, fc, 0.05, 1.0, 0.6)
    b = compiled.transport_coefficients(u1, u2, fa, fc, 0.05, 1.0, 0.6)
    for x, y in zip(a, b):
        assert np.allclose(x, y, rtol=1e-13, atol=1e-15)


@needs_ext
@given(seeds, sizes)
def test_fd_kernels_backends_agree(seed, n):
    coef, z = _fields(seed, n)
    coef = np.abs(coef) + 0.1
    h = 1.0 / n
    assert np.allclose(_kernels_py.fd_div_flux(coef, z, h), compiled.fd_div_flux(coef, z, h),
                       rtol=1e-12, atol=1e-12 / h**2)
    assert np.allclose(_kernels_py.fd_centered_div(coef, z, h), compiled.fd_centered_div(coef, z, h),
                       rtol=1e-12, atol=1e-12 / h)


@needs_ext
def test_compiled_accepts_read_only_inputs():
    u = np.broadcast_to(np.ones((1, 8)), (8, 8))
    A, C1, C2 = kernels.transport_coefficients(u, u * 0, 1.0, 1.0, 0.0, 1.0, 0.5)
    assert A.shape == (8, 8) and np.allclose(C2, 0)


@given(seeds, sizes)
def test_fd_divergences_conserve_mass(seed, n):
    coef, z = _fields(seed, n)
    coef = np.abs(coef) + 0.1
    assert abs(kernels.fd_div_flux(coef, z, 1.0 / n).sum()) < 1e-9 * n**2
    assert abs(kernels.fd_centered_div(coef, z, 1.0 / n).sum()) < 1e-10 * n


def test_fd_div_flux_constant_coefficient_matches_five_point_laplacian():
    n = 16
    h = 1.0 / n
    x = np.arange(n) * h
    z = np.sin(2 * np.pi * x)[:, None] * np.ones(n)[None, :]
    out = kernels.fd_div_flux(np.full((n, n), 2.0), z, h)
    # 5-point symbol for the sin(2 pi x1) mode
    lam = -4.0 / h**2 * np.sin(np.pi * h) ** 2
    assert np.allclose(out, 2.0 * lam * z, atol=1e-9)


def test_transport_kernel_matches_scalar_law():
    law = TransportLaw(g0=0.05, g1=1.0, g2=0.6)
    u = np.linspace(0.0, 3.0, 16)
    u1 = np.ascontiguousarray(np.tile(u, (16, 1)))
    A, C1, C2 = kernels.transport_coefficients(u1, np.zeros_like(u1), 1.0, 1.0, law.g0, law.g1, law.g2)
    ga, gc = eval_transport(law, u)
    assert np.allclose(A[0], ga) and np.allclose(C1[0], gc) and np.allclose(C2, 0.0)
