"""Toric SYZ transform: Legendre duals, Lagrangian sections, and the
special-Lagrangian residual.

Sections of the dual torus fibration are stored on the universal cover
(real-valued angles); lattice reduction happens only at plot time.  All
evaluations stop a configurable margin short of the polytope boundary,
where sections blow up.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DimensionUnsupported, NotConvex, SingularHessian

BOUNDARY_MARGIN = 0.05


@dataclass(frozen=True)
class MomentPolytope:
    """Intersection of half-spaces ell_i(y) = a_i . y + b_i >= 0."""

    dimension: int
    functionals: tuple  # ((a, b), ...) with a a coefficient tuple

    def __init__(self, dimension, functionals):
        object.__setattr__(self, "dimension", int(dimension))
        object.__setattr__(
            self,
            "functionals",
            tuple(
                (tuple(Fraction(c) for c in a), Fraction(b)) for a, b in functionals
            ),
        )

    def evaluate(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        vals = []
        for a, b in self.functionals:
            vals.append(y @ np.array([float(c) for c in a]) + float(b))
        return np.stack(vals, axis=-1)

    def contains(self, y, margin=0.0):
        return bool(np.all(self.evaluate(y) >= margin))

    @classmethod
    def interval(cls, lo, hi):
        return cls(1, [((1,), -Fraction(lo)), ((-1,), Fraction(hi))])


P1_POLYTOPE = MomentPolytope.interval(0, 2)


@dataclass
class SymplecticPotentialFn:
    """Legendre dual with value, gradient (= x(y)), and Hessian evaluators."""

    dimension: int
    value: callable
    gradient: callable
    hessian: callable
    provenance: str = "numeric-legendre"

    def __call__(self, y):
        return self.value(y)

    def inverse_hessian(self, y):
        h = np.atleast_2d(self.hessian(y))
        det = np.linalg.det(h)
        if abs(det) < 1e-14:
            raise SingularHessian(f"u_ij singular at y={y}")
        return np.linalg.inv(h)


def _fd_gradient(f, x, h=1e-6):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (f(x + e) - f(x - e)) / (2 * h)
    return out


def _fd_hessian(f, x, h=1e-4):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    m = x.size
    out = np.zeros((m, m))
    for i in range(m):
        for j in range(i, m):
            ei = np.zeros(m)
            ej = np.zeros(m)
            ei[i] = h
            ej[j] = h
            out[i, j] = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4 * h * h)
            out[j, i] = out[i, j]
    return out


def legendre(phi, grad=None, hess=None, dimension=1, sample_box=2.5, samples=9,
             sample_points=None):
    """Legendre transform of a smooth convex function on R^m.

    ``phi`` is a callable (or an object exposing gradient/hessian, e.g. a
    previous transform).  The dual's gradient is the Newton inverse
    ``x(y)`` of ``grad phi``; its Hessian is the inverse of ``phi``'s by
    Legendre duality.  Convexity is validated on a sample grid, or on
    ``sample_points`` when the natural domain is not a box.
    """
    if grad is None and hasattr(phi, "gradient"):
        grad = phi.gradient
    if hess is None and hasattr(phi, "hessian"):
        hess = phi.hessian
    if grad is None:
        grad = lambda x: _fd_gradient(phi, x)
    if hess is None:
        hess = lambda x: _fd_hessian(phi, x)

    if sample_points is not None:
        sample = np.atleast_2d(np.asarray(sample_points, dtype=float))
        if sample.shape[-1] != dimension:
            sample = sample.reshape(-1, dimension)
    else:
        ticks = np.linspace(-sample_box, sample_box, samples)
        if dimension == 1:
            sample = ticks.reshape(-1, 1)
        else:
            sample = np.stack(
                np.meshgrid(*([ticks] * dimension), indexing="ij"), axis=-1
            ).reshape(-1, dimension)
    for x in sample:
        h = np.atleast_2d(hess(x))
        if np.linalg.eigvalsh(0.5 * (h + h.T))[0] <= 0:
            raise NotConvex(f"Hessian not positive definite at x={x}")

    def x_of_y(y, tol=1e-13, max_iter=80):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        x = np.zeros_like(y)
        for _ in range(max_iter):
            g = np.atleast_1d(grad(x)) - y
            base = np.max(np.abs(g))
            if base < tol:
                return x
            h = np.atleast_2d(hess(x))
            step = np.linalg.solve(h, g)
            lam = 1.0
            for _ in range(50):
                cand = x - lam * step
                if np.max(np.abs(np.atleast_1d(grad(cand)) - y)) < base:
                    x = cand
                    break
                lam *= 0.5
            else:
                # stagnation at the gradient-evaluation noise floor is
                # convergence; anything larger means the target is outside
                # the gradient image
                if base < 5e-9 * (1.0 + np.max(np.abs(y))):
                    return x
                raise NotConvex("gradient inversion stalled; is phi convex?")
        return x

    def value(y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        x = x_of_y(y)
        return float(x @ y - phi(x))

    def gradient(y):
        return x_of_y(y)

    def hessian(y):
        x = x_of_y(y)
        return np.linalg.inv(np.atleast_2d(hess(x)))

    out = SymplecticPotentialFn(
        dimension=dimension, value=value, gradient=gradient, hessian=hessian
    )
    out.x_of_y = x_of_y
    return out


# ---------------------------------------------------------------------------
# sections
# ---------------------------------------------------------------------------


@dataclass
class LagrangianSectionField:
    """Section angles on the universal cover, sampled on an interior y-grid.

    For m=1 ``points`` has shape (N, 1) and ``theta`` (N, 1); for m=2 the
    leading axes form the tensor grid.  ``periodic_lengths`` marks circle
    directions for derivative stencils (None = clamped interior grid).
    """

    points: np.ndarray
    theta: np.ndarray
    hessians: np.ndarray
    periodic_lengths: tuple | None = None

    @property
    def dimension(self):
        return self.points.shape[-1]


def lyz_section(u: SymplecticPotentialFn, f, y_points, f_grad=None):
    """Pointwise solve of u_ij theta^j = d_i f over the sample grid."""
    pts = np.asarray(y_points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    flat = pts.reshape(-1, pts.shape[-1])
    if f_grad is None:
        f_grad = lambda y: _fd_gradient(f, y)
    thetas = np.zeros_like(flat)
    hessians = np.zeros(flat.shape + (flat.shape[-1],))
    for k, y in enumerate(flat):
        h = np.atleast_2d(u.hessian(y))
        det = np.linalg.det(h)
        if abs(det) < 1e-13:
            raise SingularHessian(f"u_ij singular at y={y}")
        thetas[k] = np.linalg.solve(h, np.atleast_1d(f_grad(y)))
        hessians[k] = h
    return LagrangianSectionField(
        points=pts,
        theta=thetas.reshape(pts.shape),
        hessians=hessians.reshape(pts.shape + (pts.shape[-1],)),
    )


def _grid_derivative(values, coords, axis, periodic_length=None):
    """Second-order derivative along one axis of a tensor grid."""
    if periodic_length is not None:
        h = periodic_length / values.shape[axis]
        return (np.roll(values, -1, axis) - np.roll(values, 1, axis)) / (2 * h)
    return np.gradient(values, coords, axis=axis, edge_order=2)


def slag_residual(section: LagrangianSectionField, theta_tilde):
    """Pointwise phase defect Im(e^{-i theta_tilde} det(I + i D theta)).

    The section Jacobian is taken by second-order differences on the
    sample grid, so residuals of exact special Lagrangians vanish at
    second order under refinement.
    """
    m = section.dimension
    if m not in (1, 2):
        raise DimensionUnsupported("sections supported over 1- and 2-dim bases")
    if m == 1:
        y = section.points[:, 0]
        per = section.periodic_lengths[0] if section.periodic_lengths else None
        slope = _grid_derivative(section.theta[:, 0], y, 0, per)
        det = 1.0 + 1j * slope
    else:
        y0 = section.points[:, 0, 0]
        y1 = section.points[0, :, 1]
        pers = section.periodic_lengths or (None, None)
        jac = np.empty(section.theta.shape[:-1] + (2, 2))
        for i in range(2):
            jac[..., i, 0] = _grid_derivative(
                section.theta[..., i], y0, 0, pers[0]
            )
            jac[..., i, 1] = _grid_derivative(
                section.theta[..., i], y1, 1, pers[1]
            )
        det = (1.0 + 1j * jac[..., 0, 0]) * (1.0 + 1j * jac[..., 1, 1]) - (
            1j * jac[..., 0, 1]
        ) * (1j * jac[..., 1, 0])
    resid = np.imag(np.exp(-1j * theta_tilde) * det)
    return resid, float(np.max(np.abs(resid)))


# ---------------------------------------------------------------------------
# the projective-line family
# ---------------------------------------------------------------------------


def p1_potential(x):
    """Fubini-Study type potential log(1 + e^{2x}) on the open orbit."""
    x = np.asarray(x, dtype=float)
    return np.logaddexp(0.0, 2.0 * x)


def p1_potential_grad(x):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return 2.0 / (1.0 + np.exp(-2.0 * x))


def p1_potential_hess(x):
    g = p1_potential_grad(x)
    return np.atleast_2d(g * (2.0 - g))


def p1_symplectic_closed(y):
    """Closed form of the dual potential on (0, 2):
    (y/2) ln y + ((2-y)/2) ln(2-y) - ln 2."""
    y = np.asarray(y, dtype=float)
    return 0.5 * y * np.log(y) + 0.5 * (2 - y) * np.log(2 - y) - np.log(2.0)


@dataclass
class P1ModelFamily:
    """The degenerating family of sections over (0, 2):

        y -> -k y - delta y^2 (2-y)(4-3y) / (y^2 (2-y) + 8 e^{-2s})

    with pointwise limit -k y - delta (4 - 3y)."""

    k: int
    delta: float
    s: float

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        num = y**2 * (2 - y) * (4 - 3 * y)
        den = y**2 * (2 - y) + 8 * np.exp(-2 * self.s)
        return -self.k * y - self.delta * num / den

    def limit(self, y):
        y = np.asarray(y, dtype=float)
        return -self.k * y - self.delta * (4 - 3 * y)

    def base_line(self, y):
        y = np.asarray(y, dtype=float)
        return -self.k * y

    @property
    def limit_gaps(self):
        """|limit - base line| at the two polytope ends: (4 delta, 2 delta)."""
        return (4 * abs(self.delta), 2 * abs(self.delta))


def p1_model_family(k, delta, s) -> P1ModelFamily:
    if s < 0 or delta <= 0:
        raise ValueError("need s >= 0 and delta > 0")
    return P1ModelFamily(k=int(k), delta=float(delta), s=float(s))


# ---------------------------------------------------------------------------
# Hamiltonian roundtrip and fiber handoff
# ---------------------------------------------------------------------------


@dataclass
class RoundtripReport:
    curl_sup: float
    difference_sup: float
    lowering_mismatch: float = 0.0


def mirror_roundtrip(u: SymplecticPotentialFn, f1, f2, y_points):
    """Check that two metric potentials differ by a Hamiltonian deformation.

    Sections are built with grid-stencil gradients of f1, f2; lowering
    their difference with u_ij reproduces the same discrete gradient of
    f1 - f2 pointwise, and centered-difference curl of a centered-difference
    gradient vanishes identically, so the sup-curl is rounding noise.
    """
    pts = np.asarray(y_points, dtype=float)
    if pts.ndim == 2:  # 1-dim base: every 1-form is closed
        g1 = np.array([f1(y) for y in pts])
        g2 = np.array([f2(y) for y in pts])
        return RoundtripReport(
            curl_sup=0.0, difference_sup=float(np.max(np.abs(g1 - g2)))
        )
    y0 = pts[:, 0, 0]
    y1 = pts[0, :, 1]

    def grid_grad(fn):
        vals = np.array([[fn(y) for y in row] for row in pts])
        return vals, np.stack(
            [_grid_derivative(vals, y0, 0), _grid_derivative(vals, y1, 1)], axis=-1
        )

    v1, grad1 = grid_grad(f1)
    v2, grad2 = grid_grad(f2)
    flat = pts.reshape(-1, 2)
    lut1 = {tuple(p): g for p, g in zip(flat, grad1.reshape(-1, 2))}
    lut2 = {tuple(p): g for p, g in zip(flat, grad2.reshape(-1, 2))}
    s1 = lyz_section(u, f1, pts, f_grad=lambda y: lut1[tuple(y)])
    s2 = lyz_section(u, f2, pts, f_grad=lambda y: lut2[tuple(y)])
    lowered = np.einsum("...ij,...j->...i", s1.hessians, s1.theta - s2.theta)
    mismatch = float(np.max(np.abs(lowered - (grad1 - grad2))))
    curl = _grid_derivative(lowered[..., 1], y0, 0) - _grid_derivative(
        lowered[..., 0], y1, 1
    )
    return RoundtripReport(
        curl_sup=float(np.max(np.abs(curl))),
        difference_sup=float(np.max(np.abs(v1 - v2))),
        lowering_mismatch=mismatch,
    )


def section_from_fiber_solution(geom, phi_total):
    """SYZ transform of a circle-invariant fiber metric: the flat base circle
    has u'' = 1/(4 g); the section angle is 4 a0 x + phi'(x) on the cover.

    Returns the section sampled over the dual circle of circumference 4g,
    marked periodic up to the winding of the linear part.
    """
    g = float(geom.omega0[0, 0].real)
    a0 = float(geom.alpha0[0, 0].real)
    vals = phi_total.values[:, 0] if phi_total.values.ndim == 2 else phi_total.values
    nx = vals.shape[0]
    x = np.arange(nx) / nx
    k = 2 * np.pi * np.fft.fftfreq(nx, d=1.0 / nx)
    k[nx // 2] = 0.0
    dphi = np.fft.ifft(1j * k * np.fft.fft(vals)).real
    y = 4 * g * x
    theta = 4 * a0 * x + dphi
    pts = y[:, None]
    hess = np.full((nx, 1, 1), 1.0 / (4 * g))
    # the linear winding 4 a0 x is not periodic; store the oscillatory part's
    # periodicity via the periodic_lengths tag and keep values on the cover
    section = LagrangianSectionField(
        points=pts, theta=theta[:, None], hessians=hess, periodic_lengths=None
    )
    section.cover_slope = a0 / g
    return section


def slag_residual_fiber(section: LagrangianSectionField, theta_tilde):
    """Residual for covering-space sections whose oscillatory part is
    periodic: differentiates theta - slope*y periodically and restores the
    constant slope, avoiding one-sided boundary stencils."""
    y = section.points[:, 0]
    length = y[-1] + (y[1] - y[0]) - y[0]
    slope = getattr(section, "cover_slope", 0.0)
    osc = section.theta[:, 0] - slope * y
    dosc = _grid_derivative(osc, y, 0, periodic_length=length)
    det = 1.0 + 1j * (dosc + slope)
    resid = np.imag(np.exp(-1j * theta_tilde) * det)
    return resid, float(np.max(np.abs(resid)))
