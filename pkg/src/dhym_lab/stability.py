"""Central charges, lifted angles, and algebraic stability checks.

The charge of a cycle V of dimension p is the polynomial path
``Z_V(t) = -integral_V e^{-i t omega} ch(L)`` with exact rational
coefficients.  Its winding is lifted from the ``t = +infinity`` asymptote
(argument of the leading coefficient) down to ``t = 1``; origin crossings
on ``[1, inf)`` are certified exactly by Sturm sequences before any
floating-point winding is attempted.

Phase comparisons in the classifier use the lifted arguments of the charge
paths directly.  Rotating every path by its dimension factor ``-p! i^p``
turns it into the class path ``integral_V (t omega + i alpha)^p`` whose
asymptote is the positive real axis, so lifted arguments of charges are
exactly the class winding angles shifted by ``(p-2) pi/2``; comparing
lifted arguments therefore compares slicing angles in a single common
normalization.  ``slicing_angle`` itself applies the plain dimension shift
to a lifted angle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (
    DeltaTooLarge,
    MissingResolutionData,
    NonKaehler,
    WrongDimension,
)
from .exactpoly import QPoly, count_real_roots, isolate_roots, root_upper_bound
from .intersection import IntersectionRing


# ---------------------------------------------------------------------------
# charge paths
# ---------------------------------------------------------------------------


@dataclass
class ChargePath:
    """Z_V(t) stored as exact real/imaginary polynomials in t."""

    re: QPoly
    im: QPoly
    dim: int
    cycle: str

    def __call__(self, t):
        return complex(self.re(float(t)), self.im(float(t)))

    def at_one(self):
        return (self.re(Fraction(1)), self.im(Fraction(1)))

    def scale(self, c):
        return ChargePath(self.re.scale(c), self.im.scale(c), self.dim, self.cycle)

    def leading_argument(self):
        """Principal argument of the leading coefficient (the t -> infinity
        asymptote direction)."""
        j = self.dim
        re_c = self.re.coeffs[j] if self.re.degree >= j else Fraction(0)
        im_c = self.im.coeffs[j] if self.im.degree >= j else Fraction(0)
        return math.atan2(float(im_c), float(re_c))


def _factorial(k):
    out = 1
    for i in range(2, k + 1):
        out *= i
    return out


def charge_path(ring: IntersectionRing, cycle, l_class, omega) -> ChargePath:
    """Exact expansion of -integral_V e^{-i t omega} ch(L).

    Degree-j coefficient: -(-i)^j / (j! (p-j)!) * (omega^j L^{p-j} . V).
    Requires omega^p . V > 0 (Kahler on the cycle).
    """
    cyc = ring.cycles[cycle] if isinstance(cycle, str) else cycle
    l_class = ring.divisor(l_class)
    omega = ring.divisor(omega)
    p = cyc.dim
    if p > 0:
        top = ring.pair_on(cyc, *([omega] * p))
        if top <= 0:
            raise NonKaehler(f"omega^{p} . {cyc.name} = {top} <= 0")
    re_c = [Fraction(0)] * (p + 1)
    im_c = [Fraction(0)] * (p + 1)
    for j in range(p + 1):
        number = ring.pair_on(cyc, *([omega] * j + [l_class] * (p - j)))
        base = Fraction(number, _factorial(j) * _factorial(p - j))
        k = j % 4
        if k == 0:
            re_c[j] = -base
        elif k == 1:
            im_c[j] = base
        elif k == 2:
            re_c[j] = base
        else:
            im_c[j] = -base
    return ChargePath(QPoly(re_c), QPoly(im_c), p, cyc.name)


# ---------------------------------------------------------------------------
# lifted angles
# ---------------------------------------------------------------------------


@dataclass
class CrossingCertificate:
    t_interval: tuple
    modulus_sq: QPoly
    t_exact: Fraction | None = None


@dataclass
class LiftedAngle:
    cycle: str
    dim: int
    angle: float | None
    crossing: CrossingCertificate | None = None
    steps: int = 0

    @property
    def defined(self):
        return self.crossing is None


def origin_crossings(path: ChargePath):
    """Exact real roots of |Z|^2 on [1, inf), as isolating intervals."""
    re, im = path.re, path.im
    if re.is_zero() and im.is_zero():
        raise NonKaehler("zero charge path")
    if re.is_zero() or im.is_zero():
        g = im if re.is_zero() else re
    else:
        g = re.gcd(im)
    if g.degree <= 0:
        return []
    out = []
    if g(Fraction(1)) == 0:
        out.append((Fraction(1), Fraction(1)))
    bound = root_upper_bound(g) + 1
    if count_real_roots(g, lo=1, hi=bound) > 0:
        out.extend(isolate_roots(g, Fraction(1), bound))
    return out


def lifted_angle(path: ChargePath, base_steps=64) -> LiftedAngle:
    """Continuous winding of arg Z_V(t) from t = +infinity down to t = 1.

    Runs the exact crossing certificate first; if the path meets the origin
    the angle is undefined and the certificate is returned instead.  The
    numeric lift then marches t downward with adaptive halving so every
    accepted step rotates by less than pi/2.
    """
    crossings = origin_crossings(path)
    if crossings:
        lo, hi = crossings[0]
        s_poly = path.re * path.re + path.im * path.im
        t_exact = lo if lo == hi else None
        if t_exact is None and s_poly(lo) == 0:
            t_exact = lo
        if t_exact is None and s_poly(hi) == 0:
            t_exact = hi
        return LiftedAngle(
            cycle=path.cycle,
            dim=path.dim,
            angle=None,
            crossing=CrossingCertificate((lo, hi), s_poly, t_exact),
        )

    start_arg = path.leading_argument()
    bound_re = root_upper_bound(path.re) if not path.re.is_zero() else Fraction(1)
    bound_im = root_upper_bound(path.im) if not path.im.is_zero() else Fraction(1)
    t_hi = float(max(Fraction(2), 2 * bound_re, 2 * bound_im))

    z = path(t_hi)
    theta = math.atan2(z.imag, z.real)
    k = round((start_arg - theta) / (2 * math.pi))
    theta += 2 * math.pi * k

    t = t_hi
    dt = (t_hi - 1.0) / base_steps
    steps = 0
    z_prev = z
    while t > 1.0:
        t_next = max(1.0, t - dt)
        z_next = path(t_next)
        delta = math.atan2(z_next.imag, z_next.real) - math.atan2(
            z_prev.imag, z_prev.real
        )
        delta = (delta + math.pi) % (2 * math.pi) - math.pi
        if abs(delta) >= math.pi / 2:
            dt *= 0.5
            continue
        theta += delta
        t, z_prev = t_next, z_next
        dt = min(dt * 1.5, (t_hi - 1.0) / base_steps)
        steps += 1
    return LiftedAngle(cycle=path.cycle, dim=path.dim, angle=theta, steps=steps)


def slicing_angle(lift: LiftedAngle, dim_v=None) -> float:
    """The dimension shift phi_V = theta_V - (dim V - 2) pi/2."""
    if not lift.defined:
        raise WrongDimension(
            f"lifted angle of {lift.cycle} is undefined (origin crossing)"
        )
    p = lift.dim if dim_v is None else dim_v
    return lift.angle - (p - 2) * math.pi / 2


# ---------------------------------------------------------------------------
# Chern inequality and the classifier
# ---------------------------------------------------------------------------


@dataclass
class ChernReport:
    lhs: Fraction
    rhs: Fraction
    holds: bool
    degenerate: bool

    @property
    def margin(self) -> Fraction:
        return self.rhs - self.lhs


def chern_inequality_3d(ring: IntersectionRing, l_class, omega) -> ChernReport:
    """(omega^3)(L^3/6) < 3 (L^2 omega / 2)(L omega^2), exactly."""
    if ring.dim != 3:
        raise WrongDimension("the cubic Chern inequality needs a threefold")
    l_class = ring.divisor(l_class)
    omega = ring.divisor(omega)
    w3 = ring.pair(omega, omega, omega)
    l3 = ring.pair(l_class, l_class, l_class)
    l2w = ring.pair(l_class, l_class, omega)
    lw2 = ring.pair(l_class, omega, omega)
    lhs = w3 * l3 / 6
    rhs = 3 * (l2w / 2) * lw2
    degenerate = lhs == 0 and rhs == 0
    return ChernReport(lhs=lhs, rhs=rhs, holds=(lhs < rhs), degenerate=degenerate)


@dataclass
class StabilityVerdict:
    status: str
    cycle: str | None
    margins: list = field(default_factory=list)
    lifted: dict = field(default_factory=dict)
    crossing: CrossingCertificate | None = None

    @property
    def is_candidate(self):
        return self.status == "Candidate"


def stability_classify(ring: IntersectionRing, l_class, omega, cycles=None):
    """Run the four stability checks and report the first failure.

    (i) cubic Chern inequality, (ii) Z_X in the upper half-plane with
    Re < 0, (iii) Z_V in the upper half-plane for the supplied
    positive-dimensional cycles, (iv) lifted phase of every cycle above the
    lifted phase of X.  An exact origin crossing anywhere yields
    AngleUndefined with its certificate; margins for (i)-(iii) are exact
    rationals, (iv) margins are lifted-argument differences in radians.
    """
    if ring.dim != 3:
        raise WrongDimension("classification is specified for threefolds")
    l_class = ring.divisor(l_class)
    omega = ring.divisor(omega)
    if cycles is None:
        cycles = [
            name
            for name, c in ring.cycles.items()
            if name != "X" and c.dim >= 1
        ]
    margins = []

    paths = {"X": charge_path(ring, "X", l_class, omega)}
    for name in cycles:
        paths[name] = charge_path(ring, name, l_class, omega)
    lifted = {}
    for name, path in paths.items():
        lift = lifted_angle(path)
        if not lift.defined:
            lo, hi = lift.crossing.t_interval
            margins.append((f"origin_crossing:{name}", (lo, hi), False))
            return StabilityVerdict(
                status="AngleUndefined",
                cycle=name,
                margins=margins,
                lifted=lifted,
                crossing=lift.crossing,
            )
        lifted[name] = lift

    chern = chern_inequality_3d(ring, l_class, omega)
    margins.append(("chern_margin", chern.margin, chern.holds and not chern.degenerate))
    if chern.degenerate or not chern.holds:
        return StabilityVerdict(
            status="PhaseObstructed", cycle="X", margins=margins, lifted=lifted
        )

    re_x, im_x = paths["X"].at_one()
    margins.append(("im_Z_X", im_x, im_x > 0))
    margins.append(("neg_re_Z_X", -re_x, re_x < 0))
    if not (im_x > 0 and re_x < 0):
        return StabilityVerdict(
            status="HEmptyByCharge", cycle="X", margins=margins, lifted=lifted
        )

    for name in cycles:
        _, im_v = paths[name].at_one()
        margins.append((f"im_Z:{name}", im_v, im_v > 0))
        if not im_v > 0:
            return StabilityVerdict(
                status="HEmptyByCharge", cycle=name, margins=margins, lifted=lifted
            )

    phi_x = lifted["X"].angle
    for name in cycles:
        gap = lifted[name].angle - phi_x
        margins.append((f"phase_order:{name}", gap, gap > 0))
        if not gap > 0:
            return StabilityVerdict(
                status="PhaseObstructed", cycle=name, margins=margins, lifted=lifted
            )

    return StabilityVerdict(status="Candidate", cycle=None, margins=margins, lifted=lifted)


def classify_ab_grid(ring, a_values, b_values, omega="2H - E"):
    """Sweep L = aH - bE over a grid; yields (a, b, verdict)."""
    for a in a_values:
        for b in b_values:
            l_class = ring.divisor([Fraction(a), -Fraction(b)])
            yield a, b, stability_classify(ring, l_class, omega)


# ---------------------------------------------------------------------------
# model curves: exact charge polynomials and limit slopes
# ---------------------------------------------------------------------------

# det-convention conversion: top-form integrals here are grid means of
# coefficient determinants, 1/(n! 2^n) of the honest form integrals
def _det_conversion(n):
    return _factorial(n) * 2**n


# coefficient of the continuum limit slope: d/ds CY = -(delta / 2 pi) E.(...)^n
# in form units (verified against closed-form differentiation and adaptive
# quadrature of the model-curve integrand; see decisions ledger)
SLOPE_FORM_PREFACTOR = -1.0 / (2.0 * math.pi)


@dataclass
class ClassPair:
    """Complex combination built from exact (re, im) rational pairs."""

    re: Fraction
    im: Fraction

    def __complex__(self):
        return complex(float(self.re), float(self.im))


@dataclass
class ModelCurveSlope:
    cycle: str
    dim: int
    delta: Fraction
    lemma_leading: complex
    charge_polynomial: list | None  # coefficient (re, im) per power of delta
    full_charge: complex | None
    cy_slope_form: complex | None
    cy_slope_det: complex | None
    center_kind: str = ""
    leading_exact: tuple | None = None  # (re, im) Fractions
    w_exact: tuple | None = None  # full charge at delta, exact


def _complex_pairing(ring, cycle, omega, alpha, p):
    """integral_V (omega + i alpha)^p as exact (re, im)."""
    re = Fraction(0)
    im = Fraction(0)
    for k in range(p + 1):
        num = ring.pair_on(cycle, *([omega] * (p - k) + [alpha] * k))
        c = Fraction(math.comb(p, k)) * num
        r = k % 4
        if r == 0:
            re += c
        elif r == 1:
            im += c
        elif r == 2:
            re -= c
        else:
            im -= c
    return re, im


def blowup_charge_coefficients(ring, cycle, l_class, omega, kind):
    """Exact coefficients of E.(mu* omega + i(mu* alpha - delta E))^n in
    powers of delta, for the two builtin centers.

    Point center (ideal of a point + (t)): only E^{n+1} = (-1)^n survives,
    so the polynomial is the single term (i delta)^n.  Divisor center D:
    pushforwards give E^{j+1}. mu* beta = -(D^j . beta) for j >= 1.
    """
    n = ring.dim
    omega = ring.divisor(omega)
    alpha = ring.divisor(l_class)
    coeffs = [(Fraction(0), Fraction(0)) for _ in range(n + 1)]
    if kind == "point":
        r = n % 4
        one = Fraction(1)
        val = {
            0: (one, Fraction(0)),
            1: (Fraction(0), one),
            2: (-one, Fraction(0)),
            3: (Fraction(0), -one),
        }[r]
        coeffs[n] = val  # (i delta)^n
        return coeffs
    if kind != "divisor":
        raise MissingResolutionData(
            f"no builtin blow-up data for center kind {kind!r}"
        )
    cyc = ring.cycles[cycle] if isinstance(cycle, str) else cycle
    if cyc.dim != n - 1:
        raise MissingResolutionData("divisor centers need a codimension-1 cycle")
    d_class = getattr(cyc, "divisor_class", None)
    if d_class is None:
        raise MissingResolutionData(
            "divisor-center cycle must carry its divisor class"
        )
    for j in range(1, n + 1):
        # binom(n, j) (-i delta)^j * ( -(D^j (omega + i alpha)^{n-j}) )
        re_p, im_p = _pair_powers(ring, d_class, omega, alpha, j, n - j)
        re_p, im_p = -re_p, -im_p
        c = Fraction(math.comb(n, j))
        r = j % 4
        if r == 0:
            term = (c * re_p, c * im_p)
        elif r == 1:
            term = (c * im_p, -c * re_p)
        elif r == 2:
            term = (-c * re_p, -c * im_p)
        else:
            term = (-c * im_p, c * re_p)
        coeffs[j] = term
    return coeffs


def _pair_powers(ring, d_class, omega, alpha, j, m):
    """D^j (omega + i alpha)^m as an exact complex pair."""
    re = Fraction(0)
    im = Fraction(0)
    for k in range(m + 1):
        num = ring.pair(*([d_class] * j + [omega] * (m - k) + [alpha] * k))
        c = Fraction(math.comb(m, k)) * num
        r = k % 4
        if r == 0:
            re += c
        elif r == 1:
            im += c
        elif r == 2:
            re -= c
        else:
            im -= c
    return re, im


def model_curve_slope_subvariety(
    ring, cycle, l_class, omega, delta, center_kind=None
):
    """Leading term and, when blow-up data exists, the full delta-polynomial
    of the model-curve charge E.(mu*[omega] + i(mu*[alpha] - delta E))^n,
    together with the CY limit slopes it predicts.

    The leading term is delta^{n-p} binom(n, n-p) i^{n-p}
    integral_V(omega + i alpha)^p; the trivial flag (t^r) has slope zero in
    the gauge-fixed sense.
    """
    n = ring.dim
    cyc = ring.cycles[cycle] if isinstance(cycle, str) else cycle
    p = cyc.dim
    delta = Fraction(delta)
    omega_d = ring.divisor(omega)
    alpha_d = ring.divisor(l_class)

    re_v, im_v = _complex_pairing(ring, cyc, omega_d, alpha_d, p)
    lead_pair = _rotate_exact((re_v, im_v), n - p)
    scale = Fraction(delta) ** (n - p) * math.comb(n, n - p)
    lead_pair = (scale * lead_pair[0], scale * lead_pair[1])
    lemma_leading = complex(float(lead_pair[0]), float(lead_pair[1]))

    if center_kind is None:
        center_kind = "point" if p == 0 else ("divisor" if p == n - 1 else None)
    charge_poly = None
    full = None
    w_exact = None
    if center_kind is not None:
        try:
            charge_poly = blowup_charge_coefficients(
                ring, cyc, alpha_d, omega_d, center_kind
            )
        except MissingResolutionData:
            charge_poly = None
    if charge_poly is not None:
        w_exact = (
            sum(re_c * delta**j for j, (re_c, _) in enumerate(charge_poly)),
            sum(im_c * delta**j for j, (_, im_c) in enumerate(charge_poly)),
        )
        full = complex(float(w_exact[0]), float(w_exact[1]))
    base = full if full is not None else lemma_leading
    slope_form = SLOPE_FORM_PREFACTOR * float(delta) * base
    slope_det = slope_form / _det_conversion(n)
    return ModelCurveSlope(
        cycle=cyc.name,
        dim=p,
        delta=delta,
        lemma_leading=lemma_leading,
        charge_polynomial=charge_poly,
        full_charge=full,
        cy_slope_form=slope_form,
        cy_slope_det=slope_det,
        center_kind=center_kind or "",
        leading_exact=lead_pair,
        w_exact=w_exact,
    )


def _rotate_exact(pair, quarter_turns):
    """Multiply an exact complex pair by i^quarter_turns."""
    re, im = pair
    for _ in range(quarter_turns % 4):
        re, im = -im, re
    return re, im


@dataclass
class ObstructionReport:
    """Signed margins of the three limit-slope inequalities.

    ``dhym``: Im[e^{-i theta_hat} W] >= 0 blocks dHYM solvability when
    negative; ``space_re``: Re[e^{-i theta_hat} W] >= 0 and ``space_im``:
    -Im[e^{-i n pi/2} W] >= 0 block non-emptiness of the calibrated space.
    The half-integer rotation is exact rational arithmetic; only the
    theta_hat rotation floats.
    """

    cycle: str
    delta: float
    w_value: complex
    dhym_margin: float
    space_re_margin: float
    space_im_margin: Fraction

    @property
    def dhym_obstructed(self):
        return self.dhym_margin < 0

    @property
    def space_obstructed(self):
        return self.space_re_margin < 0 or self.space_im_margin < 0


def obstruction_test(ring, cycle, l_class, omega, delta, theta_hat=None, center_kind=None):
    """Evaluate the three model-curve obstructions; the charge and its
    quarter-turn rotation stay exact, the lifted-angle rotation floats."""
    n = ring.dim
    slope = model_curve_slope_subvariety(
        ring, cycle, l_class, omega, delta, center_kind=center_kind
    )
    w_pair = slope.w_exact if slope.w_exact is not None else slope.leading_exact
    w = complex(float(w_pair[0]), float(w_pair[1]))
    if theta_hat is None:
        re_x, im_x = _complex_pairing(
            ring, ring.cycles["X"], ring.divisor(omega), ring.divisor(l_class), n
        )
        theta_hat = math.atan2(float(im_x), float(re_x))
        # lift into the supercritical window ((n-1) pi/2, n pi/2) when possible
        while theta_hat <= (n - 1) * math.pi / 2:
            theta_hat += 2 * math.pi
    rot = np.exp(-1j * theta_hat) * w
    # e^{-i n pi/2} W = (-i)^n W rotated exactly
    rot_n = _rotate_exact(w_pair, -n)
    return ObstructionReport(
        cycle=slope.cycle,
        delta=float(delta),
        w_value=w,
        dhym_margin=float(rot.imag),
        space_re_margin=float(rot.real),
        space_im_margin=-rot_n[1],
    )


# ---------------------------------------------------------------------------
# model-curve potentials on torus fibers
# ---------------------------------------------------------------------------


def _point_profile(geom, center):
    axes = geom.axes()
    total = np.zeros(geom.grid)
    for pair in range(geom.n):
        x = axes[2 * pair]
        y = axes[2 * pair + 1]
        total = total + (
            np.sin(np.pi * (x - center[2 * pair])) ** 2
            + np.sin(np.pi * (y - center[2 * pair + 1])) ** 2
        )
    return np.broadcast_to(total / np.pi**2, geom.grid).copy()


def _divisor_profile(geom, center):
    axes = geom.axes()
    x, y = axes[0], axes[1]
    prof = (np.sin(np.pi * (x - center[0])) ** 2 + np.sin(np.pi * (y - center[1])) ** 2)
    return np.broadcast_to(prof / np.pi**2, geom.grid).copy()


def model_curve_potential(
    geom, flag, delta, s, phi0=None, theta_hat=None, validate=True
):
    """Evaluate the model-curve potential Phi(s) = phi0 + delta psi(s) on the
    fiber grid, with psi = (1/2 pi) log(sum_l |t|^{2l} |f_l|^2).

    ``flag`` is ("point", center), ("divisor", center) or ("t_power", r).
    Every requested slice is checked to stay almost calibrated; the failure
    raises DeltaTooLarge with the measured exit location.
    """
    from .functionals import hat_theta
    from .geometry import PotentialField, curvature_form, theta_field

    if phi0 is None:
        phi0 = PotentialField(geom, np.zeros(geom.grid))
    kind = flag[0]
    if kind == "t_power":
        r = flag[1]
        psi = np.full(geom.grid, -r * s / np.pi)
    else:
        prof = _point_profile(geom, flag[1]) if kind == "point" else _divisor_profile(
            geom, flag[1]
        )
        psi = (0.5 / np.pi) * np.log(prof + np.exp(-2 * s))
    phi = PotentialField(geom, phi0.values + delta * psi)
    if validate:
        if theta_hat is None:
            theta_hat = hat_theta(geom, phi0).lift
        theta = theta_field(geom, curvature_form(phi))
        dev = np.max(np.abs(theta - theta_hat))
        if dev >= np.pi / 2:
            raise DeltaTooLarge(
                f"slice at s={s} leaves the calibrated window (deviation {dev:.4f})",
                exit_s=s,
            )
    return phi


def delta_max_scan(geom, flag, s_values, phi0=None, theta_hat=None, hi=1.0, tol=1e-3):
    """Bisection for the largest delta keeping every listed slice calibrated."""
    def admissible(d):
        try:
            for s in s_values:
                model_curve_potential(
                    geom, flag, d, s, phi0=phi0, theta_hat=theta_hat
                )
            return True
        except DeltaTooLarge:
            return False

    lo = 0.0
    if admissible(hi):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if admissible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def model_curve_slope_numeric(geom, flag, delta, s, levels_margin=6, gauss_n=24):
    """Adaptive evaluation of d/ds CY along the model curve (det convention).

    The integrand is self-similar around the center, so geometric annular
    Gauss panels resolve the e^{-s}-scale core exactly where a uniform grid
    cannot.  Supports the point center on one-dimensional fibers with a
    constant background.
    """
    if geom.n != 1:
        raise MissingResolutionData("numeric slope implemented for n = 1 fibers")
    kind, center = flag
    if kind != "point":
        raise MissingResolutionData("numeric slope implemented for point centers")
    g = float(geom.omega0[0, 0].real)
    a0 = float(geom.alpha0[0, 0].real)
    eps2 = math.exp(-2 * s)

    def integrand(xx, yy):
        sx = np.sin(np.pi * (xx - center[0]))
        sy = np.sin(np.pi * (yy - center[1]))
        u = (sx**2 + sy**2) / np.pi**2
        w = u + eps2
        dux = np.sin(2 * np.pi * (xx - center[0])) / np.pi
        duy = np.sin(2 * np.pi * (yy - center[1])) / np.pi
        lap_u = 2 * (np.cos(2 * np.pi * (xx - center[0])) + np.cos(2 * np.pi * (yy - center[1])))
        psidot = -(1.0 / np.pi) * eps2 / w
        h_psi = (1.0 / (8 * np.pi)) * (lap_u / w - (dux**2 + duy**2) / w**2)
        return delta * psidot * (g + 1j * (a0 + delta * h_psi))

    nodes, weights = np.polynomial.legendre.leggauss(gauss_n)

    def rect(x0, x1, y0, y1):
        xm, xh = 0.5 * (x0 + x1), 0.5 * (x1 - x0)
        ym, yh = 0.5 * (y0 + y1), 0.5 * (y1 - y0)
        xx, yy = np.meshgrid(
            xm + xh * nodes + center[0], ym + yh * nodes + center[1], indexing="ij"
        )
        return xh * yh * np.einsum("i,j,ij->", weights, weights, integrand(xx, yy))

    total = 0j
    rho = 0.25
    for box in (
        (-0.5, -rho, -0.5, 0.5),
        (rho, 0.5, -0.5, 0.5),
        (-rho, rho, -0.5, -rho),
        (-rho, rho, rho, 0.5),
    ):
        total += rect(*box)
    k_levels = int(math.ceil(math.log2(rho / math.exp(-s)))) + levels_margin
    r_out = rho
    for _ in range(max(k_levels, 1)):
        r_in = r_out / 2
        for box in (
            (-r_out, -r_in, -r_out, r_out),
            (r_in, r_out, -r_out, r_out),
            (-r_in, r_in, -r_out, -r_in),
            (-r_in, r_in, r_in, r_out),
        ):
            total += rect(*box)
        r_out = r_in
    total += rect(-r_out, r_out, -r_out, r_out)
    return complex(total)
