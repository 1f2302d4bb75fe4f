"""Flat-torus fiber geometry and spectral calculus.

The fiber is the torus ``R^{2n} / Z^{2n}`` with constant Kahler form
``omega0`` and constant background form ``alpha0`` (n x n Hermitian
coefficient matrices in the complex coordinates ``z_a = x_a + i y_a``).
Real axes are ordered ``(x_1, y_1[, x_2, y_2])``, each of unit period.

Integrals of top wedge products of (1,1)-forms are normalized as grid means
of mixed determinants of the coefficient matrices, so a constant form
``beta`` has ``integral(beta^n) = det(coefficients)``.  The convention is
recorded in run manifests; it rescales absolute values only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NonPositiveMetric
from .phase import _symmetrize

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class FiberGeometry:
    """Periodic fiber: complex dimension 1 or 2, grid sizes per real axis."""

    n: int
    grid: tuple
    omega0: np.ndarray
    alpha0: np.ndarray

    def __init__(self, n, grid, omega0, alpha0):
        if n not in (1, 2):
            raise DimensionMismatch("supported complex fiber dimensions are 1 and 2")
        grid = tuple(int(g) for g in grid)
        if len(grid) != 2 * n:
            raise DimensionMismatch(f"grid must have {2 * n} axes for n={n}")
        if any(g < 8 or g % 2 for g in grid):
            raise ValueError("grid sizes must be even and at least 8")
        omega0 = _symmetrize(np.atleast_2d(omega0), HERMITIAN_TOL, "omega0")
        alpha0 = _symmetrize(np.atleast_2d(alpha0), HERMITIAN_TOL, "alpha0")
        if omega0.shape != (n, n) or alpha0.shape != (n, n):
            raise DimensionMismatch("omega0/alpha0 must be n x n")
        if np.linalg.eigvalsh(omega0)[0] <= 0:
            raise NonPositiveMetric("omega0 is not positive definite")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "omega0", omega0)
        object.__setattr__(self, "alpha0", alpha0)

    def axes(self):
        """Coordinate arrays broadcastable to the grid shape."""
        out = []
        for ax, size in enumerate(self.grid):
            shape = [1] * len(self.grid)
            shape[ax] = size
            out.append((np.arange(size) / size).reshape(shape))
        return out

    def _freq(self, ax, keep_nyquist=False):
        size = self.grid[ax]
        k = 2 * np.pi * np.fft.fftfreq(size, d=1.0 / size)
        if not keep_nyquist:
            k[size // 2] = 0.0  # drop the Nyquist mode in odd-order derivatives
        shape = [1] * len(self.grid)
        shape[ax] = size
        return k.reshape(shape)

    def dz_symbols(self):
        """Fourier symbols of d/dz_a = (d/dx_a - i d/dy_a)/2."""
        return [
            0.5 * (1j * self._freq(2 * a) + self._freq(2 * a + 1))
            for a in range(self.n)
        ]

    def dzbar_symbols(self):
        """Fourier symbols of d/dzbar_a = (d/dx_a + i d/dy_a)/2."""
        return [
            0.5 * (1j * self._freq(2 * a) - self._freq(2 * a + 1))
            for a in range(self.n)
        ]

    def hessian_symbols(self):
        """Fourier symbols of d/dz_a d/dzbar_b, as an n x n nested list.

        Diagonal entries are exactly -(kx_a^2 + ky_a^2)/4 with the Nyquist
        frequency kept (the second derivative of the Nyquist cosine is well
        defined); cross terms compose the odd-order symbols, which zero it.
        """
        dz = self.dz_symbols()
        dzb = self.dzbar_symbols()
        out = []
        for a in range(self.n):
            row = []
            for b in range(self.n):
                if a == b:
                    kx = self._freq(2 * a, keep_nyquist=True)
                    ky = self._freq(2 * a + 1, keep_nyquist=True)
                    row.append((-0.25 * (kx**2 + ky**2)).astype(complex))
                else:
                    row.append(dz[a] * dzb[b])
            out.append(row)
        return out

    @property
    def cholesky(self):
        return scipy.linalg.cholesky(self.omega0, lower=True)

    @property
    def volume(self) -> float:
        """det-convention volume: integral of omega0^n."""
        return float(np.linalg.det(self.omega0).real)


@dataclass
class PotentialField:
    """A real potential sampled on the fiber grid."""

    geometry: FiberGeometry
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.geometry.grid:
            raise DimensionMismatch(
                f"values shape {self.values.shape} != grid {self.geometry.grid}"
            )

    def zero_mean(self) -> "PotentialField":
        return PotentialField(self.geometry, self.values - self.values.mean())

    def __add__(self, other):
        if isinstance(other, PotentialField):
            return PotentialField(self.geometry, self.values + other.values)
        return PotentialField(self.geometry, self.values + other)

    def __sub__(self, other):
        if isinstance(other, PotentialField):
            return PotentialField(self.geometry, self.values - other.values)
        return PotentialField(self.geometry, self.values - other)

    def __mul__(self, scalar):
        return PotentialField(self.geometry, self.values * scalar)

    __rmul__ = __mul__


def dz_gradient(geom: FiberGeometry, values) -> np.ndarray:
    """Field of complex derivatives (d phi / dz_a), shape grid + (n,)."""
    hat = np.fft.fftn(values)
    out = np.empty(geom.grid + (geom.n,), dtype=complex)
    for a, w in enumerate(geom.dz_symbols()):
        out[..., a] = np.fft.ifftn(w * hat)
    return out


def complex_hessian(geom: FiberGeometry, values) -> np.ndarray:
    """Field of complex Hessians H[a, b] = d^2 phi / dz_a dzbar_b.

    Hermitian at every node for real input; computed spectrally.
    """
    hat = np.fft.fftn(values)
    sym = geom.hessian_symbols()
    out = np.empty(geom.grid + (geom.n, geom.n), dtype=complex)
    for a in range(geom.n):
        for b in range(a, geom.n):
            block = np.fft.ifftn(sym[a][b] * hat)
            out[..., a, b] = block
            if b != a:
                out[..., b, a] = np.conj(block)
            else:
                out[..., a, a] = block.real
    return out


def curvature_form(phi: PotentialField) -> np.ndarray:
    """alpha_phi = alpha0 + complex Hessian of phi, shape grid + (n, n)."""
    geom = phi.geometry
    return geom.alpha0 + complex_hessian(geom, phi.values)


def mu_field(geom: FiberGeometry, alpha_field) -> np.ndarray:
    """Relative eigenvalues of (omega0, alpha_field) at every node, descending."""
    if geom.n == 1:
        lam = alpha_field[..., 0, 0].real / geom.omega0[0, 0].real
        return lam[..., None]
    low = geom.cholesky
    inv = scipy.linalg.solve_triangular(low, np.eye(geom.n), lower=True)
    reduced = np.einsum("ij,...jk,lk->...il", inv, alpha_field, inv.conj())
    reduced = 0.5 * (reduced + np.conj(np.swapaxes(reduced, -1, -2)))
    mu = np.linalg.eigvalsh(reduced)
    return mu[..., ::-1]


def theta_field(geom: FiberGeometry, alpha_field) -> np.ndarray:
    """Pointwise Lagrangian phase of the fiber pencil."""
    return np.sum(np.arctan(mu_field(geom, alpha_field)), axis=-1)


def radius_field(geom: FiberGeometry, alpha_field) -> np.ndarray:
    """Pointwise radius of the fiber pencil."""
    return np.exp(0.5 * np.sum(np.log1p(mu_field(geom, alpha_field) ** 2), axis=-1))


def det_field(b_field) -> np.ndarray:
    """Pointwise determinant of an (..., n, n) field, n <= 2."""
    n = b_field.shape[-1]
    if n == 1:
        return b_field[..., 0, 0]
    return (
        b_field[..., 0, 0] * b_field[..., 1, 1]
        - b_field[..., 0, 1] * b_field[..., 1, 0]
    )


def mixed_det_field(b1, b2) -> np.ndarray:
    """Pointwise mixed determinant D(b1, b2), normalized so D(b, b) = det b."""
    n = b1.shape[-1]
    if n == 1:
        return 0.5 * (b1[..., 0, 0] + b2[..., 0, 0])
    return 0.5 * (
        b1[..., 0, 0] * b2[..., 1, 1]
        + b2[..., 0, 0] * b1[..., 1, 1]
        - b1[..., 0, 1] * b2[..., 1, 0]
        - b2[..., 0, 1] * b1[..., 1, 0]
    )


def integrate(values) -> complex | float:
    """Torus integral in the det convention: the grid mean (trapezoid)."""
    return values.mean()


def complexified_form(geom: FiberGeometry, alpha_field) -> np.ndarray:
    """Coefficients of omega0 + i alpha at every node."""
    return geom.omega0 + 1j * alpha_field
