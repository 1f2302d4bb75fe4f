"""The complexified Calabi-Yau functional and its real projections.

``cy_closed_form`` evaluates the primitive of
``psi -> integral(psi * (omega + i alpha_phi)^n)`` at a potential, based at
``phi = 0`` for the stored background.  ``J = -Im(e^{-i theta_hat} CY)`` is
the Kempf-Ness piece, ``C = Re(...)`` its conjugate, ``Z = e^{-i n pi/2} CY``
the central-charge rotation, and ``V`` the radius-functional volume.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoLift, TooFewSamples, VanishingIntegral
from .geometry import (
    FiberGeometry,
    PotentialField,
    complexified_form,
    curvature_form,
    det_field,
    integrate,
    mixed_det_field,
    radius_field,
    theta_field,
)


@dataclass(frozen=True)
class HatTheta:
    principal: float
    lift: float
    class_integral: complex


def class_integral(geom: FiberGeometry) -> complex:
    """integral((omega + i alpha)^n) for the constant background forms."""
    b0 = geom.omega0 + 1j * geom.alpha0
    return complex(np.linalg.det(b0))


def hat_theta(geom: FiberGeometry, phi: PotentialField | None = None) -> HatTheta:
    """Principal argument of the class integral, with an optional lift.

    When ``phi`` is supplied and lies in the almost-calibrated space, the
    lift is the unique representative with ``|Theta(x) - lift| < pi/2`` at
    every node.
    """
    zc = class_integral(geom)
    if abs(zc) < 1e-14:
        raise VanishingIntegral("class integral vanishes")
    principal = float(np.angle(zc))
    lift = principal
    if phi is not None:
        theta = theta_field(geom, curvature_form(phi))
        for k in (0, 1, -1, 2, -2):
            cand = principal + 2 * np.pi * k
            if np.max(np.abs(theta - cand)) < np.pi / 2:
                lift = cand
                break
        else:
            raise NoLift("no 2*pi*k shift keeps |Theta - lift| < pi/2 at every node")
    return HatTheta(principal=principal, lift=lift, class_integral=zc)


def cy_closed_form(phi: PotentialField) -> complex:
    """Closed-form CY value: (1/(n+1)) sum_j integral(phi B_phi^(j) B_0^(n-j))."""
    geom = phi.geometry
    b0 = np.broadcast_to(
        complexified_form(geom, geom.alpha0), geom.grid + (geom.n, geom.n)
    )
    bphi = complexified_form(geom, curvature_form(phi))
    if geom.n == 1:
        terms = [det_field(b0), det_field(bphi)]
    else:
        terms = [det_field(b0), mixed_det_field(bphi, b0), det_field(bphi)]
    total = sum(integrate(phi.values * t) for t in terms)
    return complex(total / (geom.n + 1))


def _dot_from_samples(stack, s_values):
    """Time derivative along the sample axis: centered differences inside,
    one-sided second order at the ends."""
    ds = np.gradient(s_values)
    dot = np.empty_like(stack)
    dot[1:-1] = (stack[2:] - stack[:-2]) / (s_values[2:] - s_values[:-2]).reshape(
        (-1,) + (1,) * (stack.ndim - 1)
    )
    h0 = s_values[1] - s_values[0]
    h1 = s_values[-1] - s_values[-2]
    dot[0] = (-3 * stack[0] + 4 * stack[1] - stack[2]) / (2 * h0)
    dot[-1] = (3 * stack[-1] - 4 * stack[-2] + stack[-3]) / (2 * h1)
    del ds
    return dot


def _integrate_samples(values, s_values):
    """Composite Simpson when the spacing is uniform and the count is odd,
    trapezoid otherwise."""
    s_values = np.asarray(s_values, dtype=float)
    h = np.diff(s_values)
    uniform = np.allclose(h, h[0], rtol=1e-12, atol=1e-14)
    if uniform and len(s_values) % 2 == 1:
        w = np.ones(len(s_values))
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        return np.sum(w * values) * h[0] / 3.0
    return np.trapezoid(values, s_values)


def path_cy(fields, s_values=None) -> complex:
    """Quadrature of ``integral ds integral(phi_dot (omega + i alpha_phi)^n)``
    along a sampled path of potentials."""
    fields = list(fields)
    if len(fields) < 3:
        raise TooFewSamples("need at least 3 path samples")
    if s_values is None:
        s_values = np.linspace(0.0, 1.0, len(fields))
    s_values = np.asarray(s_values, dtype=float)
    geom = fields[0].geometry
    stack = np.stack([f.values for f in fields])
    dot = _dot_from_samples(stack, s_values)
    dens = np.empty(len(fields), dtype=complex)
    for k, f in enumerate(fields):
        b = complexified_form(geom, curvature_form(f))
        dens[k] = integrate(dot[k] * det_field(b))
    return complex(_integrate_samples(dens, s_values))


def path_cy_gauss(path, npoints=64, h=1e-5) -> complex:
    """Gauss-Legendre path integral for a callable path ``s -> PotentialField``
    on [0, 1]; the velocity is taken by centered differences of the path."""
    nodes, weights = np.polynomial.legendre.leggauss(npoints)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    total = 0.0 + 0.0j
    for s, w in zip(nodes, weights):
        f = path(s)
        geom = f.geometry
        dot = (path(s + h).values - path(s - h).values) / (2 * h)
        b = complexified_form(geom, curvature_form(f))
        total += w * integrate(dot * det_field(b))
    return complex(total)


@dataclass(frozen=True)
class FunctionalSample:
    s: float
    cy: complex
    j: float
    c: float
    z: complex
    v: float


def functionals_at(phi: PotentialField, theta_hat_lift: float, s=float("nan")):
    """Evaluate CY, J, C, Z and the volume functional V at one potential."""
    geom = phi.geometry
    cy = cy_closed_form(phi)
    rot = np.exp(-1j * theta_hat_lift) * cy
    j = float(-rot.imag)
    c = float(rot.real)
    z = complex(np.exp(-1j * geom.n * np.pi / 2) * cy)
    r = radius_field(geom, curvature_form(phi))
    v = float(integrate(r).real * geom.volume)
    return FunctionalSample(s=float(s), cy=cy, j=j, c=c, z=z, v=v)


SERIES_COLUMNS = ("s", "re_cy", "im_cy", "j", "c", "re_z", "im_z", "v")


def series_rows(samples):
    """Rows for the CSV emission of a functional series."""
    return [
        (p.s, p.cy.real, p.cy.imag, p.j, p.c, p.z.real, p.z.imag, p.v)
        for p in samples
    ]


@dataclass(frozen=True)
class SeriesShape:
    name: str
    second_differences: np.ndarray
    min2: float
    max2: float
    scale: float
    classification: str


@dataclass(frozen=True)
class ConvexityReport:
    series: dict

    def classification(self, name: str) -> str:
        return self.series[name].classification


def _classify(values, tol_rel):
    values = np.asarray(values, dtype=float)
    d2 = values[2:] - 2 * values[1:-1] + values[:-2]
    scale = max(float(np.max(np.abs(values))), 1e-30)
    # round-off floor so an identically-zero series classifies as affine
    tol = tol_rel * scale + 64 * np.finfo(float).eps * (1.0 + scale)
    convex = bool(np.all(d2 >= -tol))
    concave = bool(np.all(d2 <= tol))
    if convex and concave:
        label = "affine"
    elif convex:
        label = "convex"
    elif concave:
        label = "concave"
    else:
        label = "indefinite"
    return SeriesShape(
        name="",
        second_differences=d2,
        min2=float(d2.min()),
        max2=float(d2.max()),
        scale=scale,
        classification=label,
    )


def second_difference_probe(samples, tol_rel=1e-6) -> ConvexityReport:
    """Centered second differences of J, C, Re Z, Im Z along a sampled curve.

    Needs at least 5 equally spaced samples.  Classification is against
    ``tol_rel * max|series|`` per series.
    """
    samples = list(samples)
    if len(samples) < 5:
        raise TooFewSamples("need at least 5 samples")
    s = np.array([p.s for p in samples])
    h = np.diff(s)
    if not np.allclose(h, h[0], rtol=1e-9, atol=1e-12):
        raise TooFewSamples("samples must be equally spaced")
    series = {
        "j": [p.j for p in samples],
        "c": [p.c for p in samples],
        "re_z": [p.z.real for p in samples],
        "im_z": [p.z.imag for p in samples],
    }
    out = {}
    for name, vals in series.items():
        shape = _classify(vals, tol_rel)
        out[name] = SeriesShape(
            name=name,
            second_differences=shape.second_differences,
            min2=shape.min2,
            max2=shape.max2,
            scale=shape.scale,
            classification=shape.classification,
        )
    return ConvexityReport(series=out)
