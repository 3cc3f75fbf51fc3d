import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dunehom.fields import (DSF1_MAGIC, Grid, ScalarField, VectorField, fft, flux_divergence_hat, ifft,
                            integral_mean, l2_norm, l2_norm_hat, project_mean_zero, read_dsf1,
                            spectral_divergence, spectral_gradient, spectral_laplacian, write_dsf1)

TWO_PI = 2 * np.pi


@pytest.mark.parametrize("n", [3, 5, 2, 7.5])
def test_grid_rejects_bad_sizes(n):
    with pytest.raises(ValueError):
        Grid(n)


def test_fft_roundtrip(rng):
    g = Grid(16)
    v = rng.standard_normal(g.shape)
    assert np.allclose(ifft(fft(v), 16), v, atol=1e-14)


def test_spectral_derivatives_on_trig_modes():
    g = Grid(16)
    f = ScalarField.from_function(g, lambda x1, x2: np.sin(TWO_PI * x1) * np.cos(2 * TWO_PI * x2))
    grad = spectral_gradient(f)
    x1, x2 = g.coords
    assert np.allclose(grad.c1.values, TWO_PI * np.cos(TWO_PI * x1) * np.cos(2 * TWO_PI * x2), atol=1e-12)
    assert np.allclose(grad.c2.values, -2 * TWO_PI * np.sin(TWO_PI * x1) * np.sin(2 * TWO_PI * x2), atol=1e-12)
    lap = spectral_laplacian(f)
    assert np.allclose(lap.values, -5 * TWO_PI**2 * f.values, atol=1e-10)
    div = spectral_divergence(grad)
    assert np.allclose(div.values, lap.values, atol=1e-10)


def test_dealias_mask_two_thirds():
    g = Grid(12)
    k1, k2 = g.wavenumbers
    kept = g.dealias.astype(bool)
    assert kept[0, 0] and kept[3, 3]
    assert not kept[4, 0] and not kept[0, 4]
    assert np.all(kept == ((3 * np.abs(k1) < 12) & (3 * np.abs(k2) < 12)))


def test_nyquist_zeroed_in_first_derivative():
    g = Grid(8)
    f = ScalarField.from_function(g, lambda x1, x2: np.cos(4 * TWO_PI * x1))
    assert np.allclose(spectral_gradient(f).c1.values, 0.0)


def test_mean_and_norms(rng):
    g = Grid(8)
    v = rng.standard_normal(g.shape)
    f = ScalarField(g, v)
    assert integral_mean(f) == pytest.approx(v.mean())
    assert integral_mean(project_mean_zero(f)) == pytest.approx(0.0, abs=1e-15)
    assert l2_norm(f) == pytest.approx(np.sqrt(np.mean(v**2)))


@given(st.integers(min_value=2, max_value=12).map(lambda k: 2 * k), st.integers(0, 2**32 - 1))
def test_parseval_norm_matches_physical(n, seed):
    v = np.random.default_rng(seed).standard_normal((n, n))
    assert l2_norm_hat(fft(v), n) == pytest.approx(l2_norm(v), rel=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_flux_divergence_has_zero_mean(seed):
    g = Grid(16)
    r = np.random.default_rng(seed)
    coef = 0.5 + r.random(g.shape)
    z = r.standard_normal(g.shape)
    src = r.standard_normal((2,) + g.shape)
    out = flux_divergence_hat(g, coef, fft(z), src)
    assert abs(out[0, 0]) < 1e-10


def test_vector_field_grids_must_match():
    with pytest.raises(ValueError):
        VectorField(ScalarField(Grid(4), np.zeros((4, 4))), ScalarField(Grid(8), np.zeros((8, 8))))


def test_scalar_field_shape_checked():
    with pytest.raises(ValueError):
        ScalarField(Grid(4), np.zeros((4, 5)))


def test_dsf1_header_is_bit_exact(tmp_path, rng):
    g = Grid(4)
    a, b = rng.standard_normal(g.shape), rng.standard_normal(g.shape)
    path = tmp_path / "f.dsf1"
    write_dsf1(path, [ScalarField(g, a), ScalarField(g, b)])
    raw = path.read_bytes()
    assert raw[:4] == DSF1_MAGIC
    assert struct.unpack("<III", raw[4:16]) == (4, 2, 0)
    assert len(raw) == 16 + 2 * 16 * 8
    payload = np.frombuffer(raw[16:], dtype="<f8")
    assert np.array_equal(payload[:16], a.ravel()) and np.array_equal(payload[16:], b.ravel())
    back = read_dsf1(path)
    assert back.shape == (2, 4, 4) and np.array_equal(back[1], b)


@pytest.mark.parametrize("mutate, msg", [
    (lambda raw: b"XSF1" + raw[4:], "magic"),
    (lambda raw: raw[:12] + b"\x01\x00\x00\x00" + raw[16:], "reserved"),
    (lambda raw: raw[:-8], "payload"),
    (lambda raw: raw[:10], "truncated"),
])
def test_dsf1_rejects_corrupt_files(tmp_path, mutate, msg):
    path = tmp_path / "f.dsf1"
    write_dsf1(path, np.zeros((4, 4)))
    path.write_bytes(mutate(path.read_bytes()))
    with pytest.raises(ValueError, match=msg):
        read_dsf1(path)


def test_non_finite_input_rejected():
    g = Grid(4)
    v = np.zeros(g.shape)
    v[1, 1] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        spectral_gradient(ScalarField(g, v))
