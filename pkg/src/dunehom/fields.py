"""Periodic grids and Fourier calculus on the unit torus.

Fields are sampled at ``x_ij = (i/n, j/n)``; axis 0 of every array is the
``x1`` direction and axis 1 is ``x2``.  Spectral arrays use the real-FFT
layout of :func:`scipy.fft.rfft2` (shape ``(n, n//2 + 1)``).

The module also holds the DSF1 binary dump format used for snapshots and
profiles.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.fft as sfft

TWO_PI = 2.0 * np.pi

DSF1_MAGIC = b"DSF1"
_DSF1_HEADER = struct.Struct("<4sIII")


def check_finite(values: np.ndarray, name: str = "field") -> None:
    """Raise ``ValueError`` naming the first non-finite entry of `values`."""
    finite = np.isfinite(values)
    if not finite.all():
        idx = tuple(int(i) for i in np.argwhere(~finite)[0])
        raise ValueError(f"{name} has non-finite value {values[idx]!r} at index {idx}")


@dataclass(frozen=True)
class Grid:
    """Uniform ``n x n`` grid on the torus ``[0, 1)^2``."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 4 or self.n % 2:
            raise ValueError(f"grid size must be an even integer >= 4, got {self.n!r}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def spectral_shape(self) -> tuple[int, int]:
        return (self.n, self.n // 2 + 1)

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        s = np.arange(self.n) / self.n
        return np.meshgrid(s, s, indexing="ij")

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer wavenumbers broadcast to the spectral shape."""
        n = self.n
        k1 = np.fft.fftfreq(n, d=1.0 / n)[:, None]
        k2 = np.fft.rfftfreq(n, d=1.0 / n)[None, :]
        return (np.broadcast_to(k1, self.spectral_shape).copy(),
                np.broadcast_to(k2, self.spectral_shape).copy())

    @cached_property
    def ik(self) -> tuple[np.ndarray, np.ndarray]:
        """First-derivative symbols ``2 pi i k`` with the Nyquist modes zeroed."""
        k1, k2 = self.wavenumbers
        nyq = self.n // 2
        d1 = np.where(np.abs(k1) == nyq, 0.0, TWO_PI * k1) * 1j
        d2 = np.where(np.abs(k2) == nyq, 0.0, TWO_PI * k2) * 1j
        return d1, d2

    @cached_property
    def k2_norm(self) -> np.ndarray:
        """``4 pi^2 |k|^2``; minus the Laplacian symbol."""
        k1, k2 = self.wavenumbers
        return TWO_PI**2 * (k1**2 + k2**2)

    @cached_property
    def fd_k2_norm(self) -> np.ndarray:
        """Symbol of minus the 5-point finite-difference Laplacian."""
        k1, k2 = self.wavenumbers
        h = self.h
        return 4.0 / h**2 * (np.sin(np.pi * k1 * h) ** 2 + np.sin(np.pi * k2 * h) ** 2)

    @cached_property
    def dealias(self) -> np.ndarray:
        """2/3-rule mask: keeps modes with ``3|k_i| < n`` on both axes."""
        k1, k2 = self.wavenumbers
        return ((3 * np.abs(k1) < self.n) & (3 * np.abs(k2) < self.n)).astype(float)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)


@dataclass(frozen=True)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(f"values shape {values.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: Grid, func) -> "ScalarField":
        x1, x2 = grid.coords
        return cls(grid, np.broadcast_to(func(x1, x2), grid.shape).astype(float))

    def __add__(self, other):
        other = other.values if isinstance(other, ScalarField) else other
        return ScalarField(self.grid, self.values + other)

    def __sub__(self, other):
        other = other.values if isinstance(other, ScalarField) else other
        return ScalarField(self.grid, self.values - other)

    def __mul__(self, scalar):
        return ScalarField(self.grid, self.values * scalar)

    __rmul__ = __mul__


@dataclass(frozen=True)
class VectorField:
    c1: ScalarField
    c2: ScalarField

    def __post_init__(self):
        if self.c1.grid != self.c2.grid:
            raise ValueError("vector components live on different grids")

    @property
    def grid(self) -> Grid:
        return self.c1.grid

    @classmethod
    def from_array(cls, grid: Grid, values: np.ndarray) -> "VectorField":
        return cls(ScalarField(grid, values[0]), ScalarField(grid, values[1]))

    def as_array(self) -> np.ndarray:
        return np.stack([self.c1.values, self.c2.values])


# -- array-level transforms used by the solvers ------------------------------

def fft(values: np.ndarray) -> np.ndarray:
    return sfft.rfft2(values)


def ifft(hat: np.ndarray, n: int) -> np.ndarray:
    return sfft.irfft2(hat, s=(n, n))


def grad_hat(grid: Grid, zhat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d1, d2 = grid.ik
    return d1 * zhat, d2 * zhat


def div_hat(grid: Grid, f1hat: np.ndarray, f2hat: np.ndarray) -> np.ndarray:
    d1, d2 = grid.ik
    return d1 * f1hat + d2 * f2hat


def flux_divergence_hat(grid: Grid, coef: np.ndarray, zhat: np.ndarray,
                        source: np.ndarray | None = None) -> np.ndarray:
    """Spectrum of ``div(P(coef * P grad z) + P source)`` with ``P`` the 2/3 mask.

    The same dealiased operator is used by the time steppers and the elliptic
    solver, so stationary points of one are solutions of the other.
    """
    n = grid.n
    mask = grid.dealias
    g1, g2 = grad_hat(grid, zhat * mask)
    f1 = coef * ifft(g1, n)
    f2 = coef * ifft(g2, n)
    if source is not None:
        f1 = f1 + source[0]
        f2 = f2 + source[1]
    return div_hat(grid, mask * fft(f1), mask * fft(f2))


# -- public field operations -------------------------------------------------

def spectral_gradient(f: ScalarField) -> VectorField:
    check_finite(f.values, "spectral_gradient input")
    grid = f.grid
    g1, g2 = grad_hat(grid, fft(f.values))
    return VectorField(ScalarField(grid, ifft(g1, grid.n)), ScalarField(grid, ifft(g2, grid.n)))


def spectral_divergence(v: VectorField) -> ScalarField:
    check_finite(v.c1.values, "spectral_divergence input (component 1)")
    check_finite(v.c2.values, "spectral_divergence input (component 2)")
    grid = v.grid
    dhat = div_hat(grid, fft(v.c1.values), fft(v.c2.values))
    dhat[0, 0] = 0.0
    return ScalarField(grid, ifft(dhat, grid.n))


def spectral_laplacian(f: ScalarField) -> ScalarField:
    check_finite(f.values, "spectral_laplacian input")
    grid = f.grid
    return ScalarField(grid, ifft(-grid.k2_norm * fft(f.values), grid.n))


def integral_mean(f: ScalarField | np.ndarray) -> float:
    values = f.values if isinstance(f, ScalarField) else f
    return float(np.mean(values))


def project_mean_zero(f: ScalarField) -> ScalarField:
    return ScalarField(f.grid, f.values - np.mean(f.values))


def l2_norm(f: ScalarField | np.ndarray) -> float:
    values = f.values if isinstance(f, ScalarField) else f
    return float(np.sqrt(np.mean(np.square(values))))


def l2_norm_hat(hat: np.ndarray, n: int) -> float:
    """``l2_norm`` of the field whose ``rfft2`` is ``hat`` (Parseval)."""
    w = np.full(hat.shape[1], 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    return float(np.sqrt(np.sum(w * (hat.real**2 + hat.imag**2)) / float(n) ** 4))


# -- DSF1 dumps ----------------------------------------------------------------

def write_dsf1(path: str | Path, fields: Sequence[ScalarField] | np.ndarray) -> None:
    """Write fields as a DSF1 dump: 16-byte header then little-endian float64."""
    if isinstance(fields, np.ndarray):
        data = np.asarray(fields, dtype=float)
        if data.ndim == 2:
            data = data[None]
    else:
        data = np.stack([f.values for f in fields]) if len(fields) else np.zeros((0, 4, 4))
    if data.ndim != 3 or data.shape[1] != data.shape[2]:
        raise ValueError(f"expected (count, n, n) data, got shape {data.shape}")
    count, n, _ = data.shape
    with open(path, "wb") as fh:
        fh.write(_DSF1_HEADER.pack(DSF1_MAGIC, n, count, 0))
        fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def read_dsf1(path: str | Path) -> np.ndarray:
    """Read a DSF1 dump into an array of shape ``(count, n, n)``."""
    raw = Path(path).read_bytes()
    if len(raw) < _DSF1_HEADER.size:
        raise ValueError("truncated DSF1 header")
    magic, n, count, reserved = _DSF1_HEADER.unpack_from(raw)
    if magic != DSF1_MAGIC:
        raise ValueError(f"bad DSF1 magic {magic!r}")
    if reserved != 0:
        raise ValueError("DSF1 reserved header bytes must be zero")
    expected = _DSF1_HEADER.size + 8 * count * n * n
    if len(raw) != expected:
        raise ValueError(f"DSF1 payload size {len(raw)} != expected {expected}")
    data = np.frombuffer(raw, dtype="<f8", offset=_DSF1_HEADER.size)
    return data.reshape(count, n, n).astype(float)


def stack_values(fields: Iterable[ScalarField]) -> np.ndarray:
    return np.stack([f.values for f in fields])
