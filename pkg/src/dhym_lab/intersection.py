"""Exact rational intersection-theory tables.

A ring stores the degree-n multilinear form on named divisor generators and
a set of cycles (dimension + how degree-p divisor products evaluate on
them).  All arithmetic is over `fractions.Fraction`; nothing floats here.

Builtins: projective space P^n and the blow-up of P^3 at a point with
H^3 = E^3 = 1 and vanishing mixed products.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations_with_replacement, product

from .errors import ConfigError, DimensionMismatch


@dataclass(frozen=True)
class DivisorClass:
    """Rational coefficient vector over the ring generators."""

    coeffs: tuple

    def __init__(self, coeffs):
        object.__setattr__(self, "coeffs", tuple(Fraction(c) for c in coeffs))

    def __add__(self, other):
        return DivisorClass([a + b for a, b in zip(self.coeffs, other.coeffs)])

    def __sub__(self, other):
        return DivisorClass([a - b for a, b in zip(self.coeffs, other.coeffs)])

    def scale(self, c):
        return DivisorClass([Fraction(c) * a for a in self.coeffs])

    def __neg__(self):
        return self.scale(-1)


@dataclass
class Cycle:
    """A named cycle with exact restriction data.

    ``pairing`` maps sorted generator-index tuples of length ``dim`` to the
    value of the corresponding divisor product on the cycle.  Dimension-0
    cycles carry a single entry under the empty tuple (the degree).
    Codimension-1 cycles cut out by one divisor remember its class, which
    blow-up charge computations need.
    """

    name: str
    dim: int
    pairing: dict
    divisor_class: DivisorClass | None = None


class IntersectionRing:
    def __init__(self, dim, generators, form, cycles=None, name="ring"):
        self.dim = int(dim)
        self.generators = list(generators)
        self.name = name
        self.form = {tuple(sorted(k)): Fraction(v) for k, v in form.items()}
        needed = set(combinations_with_replacement(range(len(self.generators)), self.dim))
        missing = needed - set(self.form)
        if missing:
            raise DimensionMismatch(
                f"intersection form incomplete: missing {sorted(missing)[:4]}..."
            )
        self.cycles = {}
        self.cycles["X"] = Cycle("X", self.dim, dict(self.form))
        self.cycles["point"] = Cycle("point", 0, {(): Fraction(1)})
        for c in cycles or []:
            self.cycles[c.name] = c

    # -- construction helpers ------------------------------------------------

    def divisor(self, spec) -> DivisorClass:
        """Parse '2H - E' style linear combinations, or pass vectors through."""
        if isinstance(spec, DivisorClass):
            return spec
        if isinstance(spec, (list, tuple)):
            return DivisorClass(spec)
        text = spec.replace("-", "+-").replace(" ", "")
        coeffs = [Fraction(0)] * len(self.generators)
        for term in filter(None, text.split("+")):
            m = re.fullmatch(r"(-?)([0-9]+(?:/[0-9]+)?)?\*?([A-Za-z_][A-Za-z_0-9]*)", term)
            if not m:
                raise ConfigError(f"cannot parse divisor term {term!r}")
            sign, mag, gen = m.groups()
            if gen not in self.generators:
                raise ConfigError(f"unknown generator {gen!r}")
            c = Fraction(mag) if mag else Fraction(1)
            if sign:
                c = -c
            coeffs[self.generators.index(gen)] += c
        return DivisorClass(coeffs)

    def cycle_from_divisors(self, name, divisors):
        """Cycle cut out by (dim - p) divisor classes (complete intersection)."""
        p = self.dim - len(divisors)
        if p < 0:
            raise DimensionMismatch("too many divisors for a cycle")
        pairing = {}
        for idx in combinations_with_replacement(range(len(self.generators)), p):
            pairing[idx] = self._pair_indices(list(idx), divisors)
        cyc = Cycle(name, p, pairing)
        if len(divisors) == 1:
            cyc.divisor_class = divisors[0]
        return cyc

    # -- evaluation -----------------------------------------------------------

    def _pair_indices(self, fixed, divisors):
        total = Fraction(0)
        for combo in product(*[range(len(self.generators)) for _ in divisors]):
            coeff = Fraction(1)
            for d, g in zip(divisors, combo):
                coeff *= d.coeffs[g]
                if coeff == 0:
                    break
            if coeff == 0:
                continue
            total += coeff * self.form[tuple(sorted(fixed + list(combo)))]
        return total

    def pair(self, *divisors) -> Fraction:
        """Full-degree intersection number of dim-many divisor classes."""
        if len(divisors) != self.dim:
            raise DimensionMismatch(f"need {self.dim} divisor classes")
        return self._pair_indices([], [self.divisor(d) for d in divisors])

    def pair_on(self, cycle, *divisors) -> Fraction:
        """Degree-p product evaluated on a cycle of dimension p."""
        cycle = self.cycles[cycle] if isinstance(cycle, str) else cycle
        if len(divisors) != cycle.dim:
            raise DimensionMismatch(
                f"cycle {cycle.name} has dimension {cycle.dim}, got {len(divisors)} classes"
            )
        divisors = [self.divisor(d) for d in divisors]
        total = Fraction(0)
        for idx, base in cycle.pairing.items():
            if base == 0:
                continue
            # idx is a sorted multiset; expand the symmetric product of the
            # supplied classes against it
            total += base * _symmetric_coefficient(idx, divisors)
        return total

    def validate_symmetry(self):
        """The form is stored on sorted keys, so symmetry is structural; this
        re-checks the generator-level table is total."""
        for idx in combinations_with_replacement(range(len(self.generators)), self.dim):
            if tuple(sorted(idx)) not in self.form:
                return False
        return True


def _symmetric_coefficient(idx, divisors):
    """Sum of prod_i d_i[g_i] over ordered tuples g with sorted(g) == idx.

    Each such tuple is produced by prod_v m_v! slot permutations, m_v the
    multiplicity of generator v in idx, hence the division.
    """
    from collections import Counter
    from itertools import permutations
    from math import factorial

    total = Fraction(0)
    for perm in permutations(range(len(divisors))):
        coeff = Fraction(1)
        for slot, d_i in enumerate(perm):
            coeff *= divisors[d_i].coeffs[idx[slot]]
            if coeff == 0:
                break
        total += coeff
    mult = 1
    for c in Counter(idx).values():
        mult *= factorial(c)
    return total / mult


def projective_space(n) -> IntersectionRing:
    form = {tuple([0] * n): Fraction(1)}
    ring = IntersectionRing(n, ["H"], form, name=f"P{n}")
    h = ring.divisor("H")
    for p in range(1, n):
        ring.cycles[f"H{n - p}"] = ring.cycle_from_divisors(
            f"H{n - p}", [h] * (n - p)
        )
    if n >= 2:
        ring.cycles["line"] = ring.cycle_from_divisors("line", [h] * (n - 1))
    return ring


def blown_up_p3() -> IntersectionRing:
    """Bl_p P^3 with H^3 = E^3 = 1 and H^2 E = H E^2 = 0."""
    form = {}
    for idx in combinations_with_replacement(range(2), 3):
        counts = (idx.count(0), idx.count(1))
        if counts == (3, 0) or counts == (0, 3):
            form[idx] = Fraction(1)
        else:
            form[idx] = Fraction(0)
    ring = IntersectionRing(3, ["H", "E"], form, name="blp3")
    h, e = ring.divisor("H"), ring.divisor("E")
    ring.cycles["E"] = ring.cycle_from_divisors("E", [e])
    ring.cycles["H_surface"] = ring.cycle_from_divisors("H_surface", [h])
    ring.cycles["line"] = ring.cycle_from_divisors("line", [h, h])
    exc = ring.cycle_from_divisors("exc_line", [e, e])
    exc.pairing = {k: -v for k, v in exc.pairing.items()}  # effective curve is -E^2
    ring.cycles["exc_line"] = exc
    return ring


BUILTIN_RINGS = {
    "blp3": blown_up_p3,
    "p1": lambda: projective_space(1),
    "p2": lambda: projective_space(2),
    "p3": lambda: projective_space(3),
}


def parse_ring_file(text) -> IntersectionRing:
    """Plain-text ring description: one statement per line.

        dim 3
        gens: H E
        form H H H = 1
        ...
        cycle E = E
        cycle line = H H
        cycle exc_line = - E E
    """
    dim = None
    gens = None
    form_lines = []
    cycle_lines = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("dim"):
            dim = int(line.split()[1])
        elif line.startswith("gens"):
            gens = line.split(":", 1)[1].split()
        elif line.startswith("form"):
            form_lines.append((lineno, line))
        elif line.startswith("cycle"):
            cycle_lines.append((lineno, line))
        else:
            raise ConfigError(f"unrecognized statement {line!r}", line=lineno)
    if dim is None or gens is None:
        raise ConfigError("ring file must declare 'dim' and 'gens'")
    form = {}
    for lineno, line in form_lines:
        m = re.fullmatch(r"form\s+(.+?)\s*=\s*(-?[0-9]+(?:/[0-9]+)?)", line)
        if not m:
            raise ConfigError(f"cannot parse {line!r}", line=lineno)
        names = m.group(1).split()
        if len(names) != dim:
            raise ConfigError(f"form entry needs {dim} generators", line=lineno)
        try:
            idx = tuple(sorted(gens.index(nm) for nm in names))
        except ValueError as exc:
            raise ConfigError(str(exc), line=lineno) from exc
        form[idx] = Fraction(m.group(2))
    ring = IntersectionRing(dim, gens, form, name="custom")
    for lineno, line in cycle_lines:
        m = re.fullmatch(r"cycle\s+(\w+)\s*=\s*(-)?\s*(.+)", line)
        if not m:
            raise ConfigError(f"cannot parse {line!r}", line=lineno)
        name, minus, rest = m.groups()
        divisors = [ring.divisor(tok) for tok in rest.split()]
        cyc = ring.cycle_from_divisors(name, divisors)
        if minus:
            cyc.pairing = {k: -v for k, v in cyc.pairing.items()}
        ring.cycles[name] = cyc
    return ring
