"""Pointwise calculus of the Lagrangian phase operator.

Everything here acts on a single Hermitian pencil (metric form, curvature
form) or directly on its vector of relative eigenvalues.  The phase of a
vector ``mu`` is ``sum(arctan(mu_i))``, the radius is
``sqrt(prod(1 + mu_i^2))``; both are the polar pieces of the complex number
``prod(1 + i*mu_i)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatch,
    NonHermitian,
    NonPositiveMetric,
    NotInBranch,
)

HERMITIAN_TOL = 1e-12


def _symmetrize(m, tol, what):
    """Average a matrix with its adjoint; reject if the skew part is large."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"{what} must be a square matrix, got shape {m.shape}")
    skew = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
    if skew > 2 * tol:
        raise NonHermitian(f"{what} deviates from Hermitian by {skew:.3e} > {2 * tol:.1e}")
    return 0.5 * (m + m.conj().T)


@dataclass(frozen=True)
class HermitianPencil:
    """A pointwise pair (metric form, curvature form).

    ``omega`` must be Hermitian positive definite, ``alpha`` Hermitian.
    Inputs are symmetrized by averaging before validation; asymmetry beyond
    ``1e-12`` is rejected.
    """

    omega: np.ndarray
    alpha: np.ndarray

    def __init__(self, omega, alpha):
        omega = _symmetrize(omega, HERMITIAN_TOL, "omega")
        alpha = _symmetrize(alpha, HERMITIAN_TOL, "alpha")
        if omega.shape != alpha.shape:
            raise DimensionMismatch(
                f"omega {omega.shape} and alpha {alpha.shape} differ in size"
            )
        if np.linalg.eigvalsh(omega)[0] <= 0:
            raise NonPositiveMetric("omega is not positive definite")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "alpha", alpha)

    @property
    def dim(self) -> int:
        return self.omega.shape[0]


@dataclass(frozen=True)
class PhaseSpectrum:
    """Eigenvalues (descending), Lagrangian phase and radius."""

    mu: np.ndarray
    theta: float
    r: float


def relative_eigenvalues(pencil: HermitianPencil) -> np.ndarray:
    """Spectrum of ``omega^{-1} alpha``, sorted descending.

    Computed by Cholesky reduction of omega to the identity followed by a
    Hermitian eigensolve, so the result is real and invariant under
    simultaneous congruence of the pencil.
    """
    try:
        low = scipy.linalg.cholesky(pencil.omega, lower=True)
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - caught at init
        raise NonPositiveMetric(str(exc)) from exc
    tmp = scipy.linalg.solve_triangular(low, pencil.alpha, lower=True)
    reduced = scipy.linalg.solve_triangular(low, tmp.conj().T, lower=True).conj().T
    mu = np.linalg.eigvalsh(0.5 * (reduced + reduced.conj().T))
    return mu[::-1]


def phase_and_radius(mu) -> PhaseSpectrum:
    """Phase ``sum(arctan mu_i)`` and radius ``sqrt(prod(1+mu_i^2))``.

    Equivalently the argument (continuously lifted) and modulus of
    ``prod(1 + i*mu_i)``.
    """
    mu = np.sort(np.asarray(mu, dtype=float))[::-1]
    theta = float(np.sum(np.arctan(mu)))
    # log-sum form avoids overflow of the plain product for large entries
    r = float(np.exp(0.5 * np.sum(np.log1p(mu**2))))
    return PhaseSpectrum(mu=mu, theta=theta, r=r)


def linearization_weights(mu) -> np.ndarray:
    """Diagonal of the linearized operator in the eigenbasis: 1/(1+mu_i^2)."""
    mu = np.asarray(mu, dtype=float)
    return 1.0 / (1.0 + mu**2)


def hessian_quadratic_form(mu, a) -> float:
    """Second directional derivative of the phase at diag(mu) in direction ``a``.

    Equals ``-sum_{ij} (mu_i+mu_j)/((1+mu_i^2)(1+mu_j^2)) |a_ij|^2``; the
    overall sign is the one fixed by finite differences of
    ``F(diag(mu) + t a)``.
    """
    mu = np.asarray(mu, dtype=float)
    a = _symmetrize(a, 1e-10, "a")
    if a.shape[0] != mu.shape[0]:
        raise DimensionMismatch(
            f"direction is {a.shape[0]}x{a.shape[0]} but mu has length {mu.shape[0]}"
        )
    w = linearization_weights(mu)
    pair = (mu[:, None] + mu[None, :]) * w[:, None] * w[None, :]
    return float(-np.sum(pair * np.abs(a) ** 2))


def phase_of_matrix(m) -> float:
    """Phase of a Hermitian matrix: ``sum(arctan)`` of its eigenvalues."""
    mu = np.linalg.eigvalsh(_symmetrize(m, 1e-9, "m"))
    return float(np.sum(np.arctan(mu)))


@dataclass(frozen=True)
class BranchWindow:
    """Structural window for the supercritical branch.

    ``theta_hat`` is the target phase, ``eta1``/``eta2`` the margins away
    from the lower and upper branch walls.
    """

    theta_hat: float
    eta1: float
    eta2: float

    def __post_init__(self):
        if self.eta1 <= 0 or self.eta2 <= 0:
            raise ValueError("eta1 and eta2 must be positive")

    def is_hypercritical(self, n: int) -> bool:
        return (n - 1) * np.pi / 2 < self.theta_hat < n * np.pi / 2


def branch_threshold(m: int, eta1: float) -> float:
    """Phase threshold for branch membership of an m-vector: (m-2)pi/2 + eta1."""
    return (m - 2) * np.pi / 2 + eta1


@dataclass(frozen=True)
class PropertyCheck:
    holds: bool
    margin: float
    applicable: bool = True


@dataclass(frozen=True)
class BranchPropertyReport:
    mu: np.ndarray
    eta1: float
    eta2: float
    properties: dict = field(default_factory=dict)
    concavity_constant: float = float("nan")

    @property
    def all_hold(self) -> bool:
        return all(p.holds for p in self.properties.values())


def sample_branch_members(m, eta1, rng, size):
    """Rejection-sample eigenvalue vectors with phase >= (m-2)pi/2 + eta1.

    Proposals are drawn by splitting a total arctan-deficit ``s ~ U(0, pi)``
    uniformly over the m slots; proposals whose phase misses the threshold
    are rejected.  Returned vectors are sorted descending.
    """
    out = np.empty((size, m))
    have = 0
    while have < size:
        want = size - have
        s = rng.uniform(0.0, np.pi, size=2 * want + 8)
        w = rng.uniform(0.0, 1.0, size=(s.size, m))
        w = w / w.sum(axis=1, keepdims=True)
        angles = np.pi / 2 - w * s[:, None]
        keep = angles.sum(axis=1) >= branch_threshold(m, eta1)
        good = np.tan(angles[keep])
        take = min(want, good.shape[0])
        out[have : have + take] = -np.sort(-good[:take], axis=1)
        have += take
    return out


def concavity_constant(m, eta1, rng=None, samples=256, a_max=1e6):
    """Smallest A (by bisection) making ``-exp(-A * phase)`` concave on sampled
    branch members.

    Concavity of the exponentiated phase as a function of the eigenvalue
    vector amounts to ``diag(f''(mu)) - A w w^T <= 0`` with
    ``w = 1/(1+mu^2)``; we bisect on the largest eigenvalue of that matrix
    over the sample.  A verification aid, not a proof.
    """
    if rng is None:
        rng = np.random.default_rng(20260810)
    mus = sample_branch_members(m, eta1, rng, samples)

    def admissible(a):
        for mu in mus:
            w = linearization_weights(mu)
            fpp = -2.0 * mu * w**2
            h = np.diag(fpp) - a * np.outer(w, w)
            if np.linalg.eigvalsh(h)[-1] > 1e-13:
                return False
        return True

    lo, hi = 0.0, 4.0
    while not admissible(hi):
        hi *= 4.0
        if hi > a_max:
            return float("inf")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if admissible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def branch_property_report(mu, window: BranchWindow, with_concavity=True):
    """Check the structural eigenvalue properties of branch members.

    ``mu`` is an m-vector with ``sum(arctan mu_i) >= (m-2)pi/2 + eta1``
    (raises NotInBranch otherwise).  Each property is reported with its
    margin; (5) and (6) carry applicability flags since their hypotheses
    are conditional.   The bound in (4) uses C(eta1) = 1/tan(eta1).
    """
    mu = np.sort(np.asarray(mu, dtype=float))[::-1]
    m = mu.shape[0]
    if m < 2:
        raise NotInBranch("need at least two eigenvalues")
    eta1, eta2 = window.eta1, window.eta2
    theta = float(np.sum(np.arctan(mu)))
    slack = theta - branch_threshold(m, eta1)
    if slack < 0:
        raise NotInBranch(
            f"phase {theta:.6f} below branch threshold {branch_threshold(m, eta1):.6f}"
        )

    props = {}
    mu_last, mu_prev = mu[-1], mu[-2]
    margin1 = min(float(mu_prev), float(mu_prev - abs(mu_last)))
    props["p1_all_but_last_positive"] = PropertyCheck(margin1 > 0 or margin1 >= -1e-15, margin1)

    if mu_last <= 0:
        margin2 = float(mu_last + mu_prev - np.tan(eta1))
    else:
        margin2 = float(mu_prev - np.tan(eta1 / 2))
    props["p2_pair_lower_bound"] = PropertyCheck(margin2 >= -1e-12, margin2)

    margin3 = float(np.sum(mu))
    props["p3_trace_positive"] = PropertyCheck(margin3 > 0, margin3)

    margin4 = float(mu_last + 1.0 / np.tan(eta1))
    props["p4_min_eigenvalue_bound"] = PropertyCheck(margin4 >= -1e-12, margin4)

    cap = m * np.pi / 2 - eta2
    if theta <= cap:
        margin5 = float(1.0 / np.tan(eta2 / m) - mu_last)
        props["p5_min_eigenvalue_cap"] = PropertyCheck(margin5 >= -1e-12, margin5)
    else:
        props["p5_min_eigenvalue_cap"] = PropertyCheck(True, float("inf"), applicable=False)

    if mu_last < 0:
        margin6 = float(-np.tan(eta1) - np.sum(1.0 / mu))
        props["p6_harmonic_sum"] = PropertyCheck(margin6 > 0, margin6)
    else:
        props["p6_harmonic_sum"] = PropertyCheck(True, float("inf"), applicable=False)

    a_const = concavity_constant(m, eta1) if with_concavity else float("nan")
    return BranchPropertyReport(
        mu=mu, eta1=eta1, eta2=eta2, properties=props, concavity_constant=a_const
    )


@dataclass(frozen=True)
class CSubsolutionResult:
    ok: bool
    margins: np.ndarray

    @property
    def margin(self) -> float:
        return float(np.min(self.margins))


def c_subsolution_test(mu, h: float) -> CSubsolutionResult:
    """Test ``sum_{l != j} arctan(mu_l) > h - pi/2`` for every j.

    The margin vector holds the slack per omitted index; the test is strict,
    so a zero margin fails.
    """
    mu = np.asarray(mu, dtype=float)
    angles = np.arctan(mu)
    partial = np.sum(angles) - angles
    margins = partial - (h - np.pi / 2)
    return CSubsolutionResult(ok=bool(np.all(margins > 0)), margins=margins)


@dataclass(frozen=True)
class DegeneratePhaseResult:
    value: float
    divergent: bool
    epsilons: np.ndarray
    thetas: np.ndarray
    extrapolants: np.ndarray
    differences: np.ndarray

    @property
    def cauchy(self) -> bool:
        d = self.differences
        return bool(d.size == 0 or (np.all(np.diff(d) <= 0) and d[-1] <= 1e-4))


DEGENERATE_EPSILONS = tuple(10.0 ** (-k) for k in range(1, 6))


def degenerate_phase(omega_x, alpha_st) -> DegeneratePhaseResult:
    """Space-time lifted phase: limit of the pencil phase as the time slot of
    the metric collapses.

    Evaluates the phase against ``diag(eps^2) (+) omega_x`` for
    ``eps = 1e-1..1e-5`` and Richardson-extrapolates at first order in
    ``eps^2``.  Divergent (``value = nan``) when successive extrapolants
    differ by more than 1e-4.
    """
    omega_x = _symmetrize(omega_x, HERMITIAN_TOL, "omega_x")
    if np.linalg.eigvalsh(omega_x)[0] <= 0:
        raise NonPositiveMetric("omega_x is not positive definite")
    alpha_st = _symmetrize(alpha_st, HERMITIAN_TOL, "alpha_st")
    n = omega_x.shape[0]
    if alpha_st.shape[0] != n + 1:
        raise DimensionMismatch(
            f"alpha_st must be {(n + 1)}x{(n + 1)} for an {n}x{n} fiber metric"
        )

    eps = np.array(DEGENERATE_EPSILONS)
    thetas = np.empty_like(eps)
    for k, e in enumerate(eps):
        omega_hat = np.zeros((n + 1, n + 1), dtype=complex)
        omega_hat[0, 0] = e**2
        omega_hat[1:, 1:] = omega_x
        pencil = HermitianPencil(omega_hat, alpha_st)
        thetas[k] = phase_and_radius(relative_eigenvalues(pencil)).theta

    h = eps**2
    extrap = (h[:-1] * thetas[1:] - h[1:] * thetas[:-1]) / (h[:-1] - h[1:])
    diffs = np.abs(np.diff(extrap))
    divergent = bool(diffs.size and diffs[-1] > 1e-4)
    value = float("nan") if divergent else float(extrap[-1])
    return DegeneratePhaseResult(
        value=value,
        divergent=divergent,
        epsilons=eps,
        thetas=thetas,
        extrapolants=extrap,
        differences=diffs,
    )
