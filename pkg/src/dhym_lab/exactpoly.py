"""Exact univariate polynomials over the rationals, with Sturm-sequence
real-root isolation.

Coefficients are `fractions.Fraction`, stored low degree first with no
trailing zeros.  Only what the central-charge paths need: arithmetic,
evaluation, gcd, square-free part, sign variations, root counting on
intervals (including half-lines), and bisection-based isolation."""

from __future__ import annotations

from fractions import Fraction


def _trim(coeffs):
    coeffs = list(coeffs)
    while coeffs and coeffs[-1] == 0:
        coeffs.pop()
    return coeffs


class QPoly:
    """Polynomial with Fraction coefficients, lowest degree first."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs=()):
        self.coeffs = _trim(Fraction(c) for c in coeffs)

    @classmethod
    def constant(cls, c):
        return cls([c])

    @classmethod
    def monomial(cls, degree, c=1):
        return cls([0] * degree + [c])

    @property
    def degree(self):
        return len(self.coeffs) - 1 if self.coeffs else -1

    def is_zero(self):
        return not self.coeffs

    def __repr__(self):
        return f"QPoly({self.coeffs})"

    def __eq__(self, other):
        return isinstance(other, QPoly) and self.coeffs == other.coeffs

    def __hash__(self):
        return hash(tuple(self.coeffs))

    def __add__(self, other):
        if not isinstance(other, QPoly):
            other = QPoly.constant(other)
        n = max(len(self.coeffs), len(other.coeffs))
        a = self.coeffs + [Fraction(0)] * (n - len(self.coeffs))
        b = other.coeffs + [Fraction(0)] * (n - len(other.coeffs))
        return QPoly([x + y for x, y in zip(a, b)])

    def __neg__(self):
        return QPoly([-c for c in self.coeffs])

    def __sub__(self, other):
        if not isinstance(other, QPoly):
            other = QPoly.constant(other)
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, QPoly):
            other = QPoly.constant(other)
        if self.is_zero() or other.is_zero():
            return QPoly()
        out = [Fraction(0)] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            if a == 0:
                continue
            for j, b in enumerate(other.coeffs):
                out[i + j] += a * b
        return QPoly(out)

    __rmul__ = __mul__

    def scale(self, c):
        return QPoly([a * Fraction(c) for a in self.coeffs])

    def __call__(self, x):
        x = Fraction(x) if not isinstance(x, float) else x
        acc = 0 if isinstance(x, float) else Fraction(0)
        for c in reversed(self.coeffs):
            acc = acc * x + (float(c) if isinstance(x, float) else c)
        return acc

    def derivative(self):
        return QPoly([i * c for i, c in enumerate(self.coeffs)][1:])

    def divmod(self, other):
        if other.is_zero():
            raise ZeroDivisionError("division by the zero polynomial")
        rem = list(self.coeffs)
        quo = [Fraction(0)] * max(0, len(rem) - len(other.coeffs) + 1)
        d = other.degree
        lead = other.coeffs[-1]
        while len(rem) - 1 >= d and _trim(rem):
            rem = _trim(rem)
            if len(rem) - 1 < d:
                break
            k = len(rem) - 1 - d
            q = rem[-1] / lead
            quo[k] = q
            for i, c in enumerate(other.coeffs):
                rem[k + i] -= q * c
            rem.pop()
        return QPoly(quo), QPoly(rem)

    def gcd(self, other):
        a, b = self, other
        while not b.is_zero():
            a, b = b, a.divmod(b)[1]
        if a.is_zero():
            return a
        return a.scale(1 / a.coeffs[-1])

    def squarefree(self):
        if self.degree <= 0:
            return self
        g = self.gcd(self.derivative())
        if g.degree <= 0:
            return self
        return self.divmod(g)[0]

    def sign_at_infinity(self, positive=True):
        if self.is_zero():
            return 0
        lead = self.coeffs[-1]
        if positive:
            return 1 if lead > 0 else -1
        s = 1 if lead > 0 else -1
        return s if self.degree % 2 == 0 else -s


def sturm_chain(poly: QPoly):
    chain = [poly, poly.derivative()]
    while not chain[-1].is_zero() and chain[-1].degree > 0:
        rem = chain[-2].divmod(chain[-1])[1]
        if rem.is_zero():
            break
        chain.append(-rem)
    return [p for p in chain if not p.is_zero()]


def _variations(values):
    signs = [v for v in values if v != 0]
    return sum(1 for a, b in zip(signs, signs[1:]) if (a > 0) != (b > 0))


def _eval_chain(chain, x):
    out = []
    for p in chain:
        v = p(x)
        out.append(0 if v == 0 else (1 if v > 0 else -1))
    return out


def _chain_at_infinity(chain):
    return [p.sign_at_infinity(True) for p in chain]


def count_real_roots(poly: QPoly, lo=None, hi=None):
    """Distinct real roots in (lo, hi]; None endpoints mean -inf/+inf."""
    if poly.is_zero():
        raise ValueError("the zero polynomial has every point as a root")
    sf = poly.squarefree()
    if sf.degree <= 0:
        return 0
    chain = sturm_chain(sf)
    v_lo = (
        _variations([p.sign_at_infinity(False) for p in chain])
        if lo is None
        else _variations(_eval_chain(chain, Fraction(lo)))
    )
    v_hi = (
        _variations(_chain_at_infinity(chain))
        if hi is None
        else _variations(_eval_chain(chain, Fraction(hi)))
    )
    return v_lo - v_hi


def root_upper_bound(poly: QPoly):
    """Cauchy bound: all real roots lie in [-B, B]."""
    lead = abs(poly.coeffs[-1])
    return 1 + max((abs(c) / lead for c in poly.coeffs[:-1]), default=Fraction(0))


def isolate_roots(poly: QPoly, lo, hi, max_width=Fraction(1, 2**40)):
    """Disjoint rational intervals (a, b], each holding one distinct real
    root of ``poly`` in (lo, hi]."""
    sf = poly.squarefree()
    if sf.degree <= 0:
        return []
    chain = sturm_chain(sf)

    def var(x):
        return _variations(_eval_chain(chain, x))

    out = []
    stack = [(Fraction(lo), Fraction(hi), var(Fraction(lo)), var(Fraction(hi)))]
    while stack:
        a, b, va, vb = stack.pop()
        count = va - vb
        if count == 0:
            continue
        if count == 1 and b - a <= max_width:
            out.append((a, b))
            continue
        mid = (a + b) / 2
        vm = var(mid)
        stack.append((a, mid, va, vm))
        stack.append((mid, b, vm, vb))
    return sorted(out)
