import math
from fractions import Fraction

import numpy as np
import pytest

from dhym_lab import geometry as geo
from dhym_lab import intersection as ix
from dhym_lab import stability as st
from dhym_lab.errors import ConfigError, NonKaehler, WrongDimension
from dhym_lab.exactpoly import QPoly


@pytest.fixture(scope="module")
def blp3():
    return ix.blown_up_p3()


@pytest.fixture(scope="module")
def omega(blp3):
    return blp3.divisor("2H - E")


class TestIntersectionRing:
    def test_builtin_relations(self, blp3):
        h, e = blp3.divisor("H"), blp3.divisor("E")
        assert blp3.pair(h, h, h) == 1
        assert blp3.pair(e, e, e) == 1
        assert blp3.pair(h, h, e) == 0
        assert blp3.pair(h, e, e) == 0

    def test_divisor_parsing(self, blp3):
        d = blp3.divisor("2H - E")
        assert d.coeffs == (Fraction(2), Fraction(-1))
        d2 = blp3.divisor("-3/2H + E")
        assert d2.coeffs == (Fraction(-3, 2), Fraction(1))

    def test_multilinear_values(self, blp3, omega):
        l53 = blp3.divisor("5H - 3E")
        assert blp3.pair(omega, omega, omega) == 7
        assert blp3.pair(omega, l53, l53) == 41
        assert blp3.pair(omega, omega, l53) == 17
        assert blp3.pair(l53, l53, l53) == 98

    def test_cycle_restriction(self, blp3, omega):
        l53 = blp3.divisor("5H - 3E")
        assert blp3.pair_on("E", omega, omega) == 1
        assert blp3.pair_on("E", omega, l53) == 3
        assert blp3.pair_on("E", l53, l53) == 9
        # effective curves have positive omega-degree
        assert blp3.pair_on("line", omega) == 2
        assert blp3.pair_on("exc_line", omega) == 1

    def test_pair_on_x_matches_pair(self, blp3, omega, rng):
        for _ in range(10):
            a, b = rng.integers(-4, 5, size=2)
            d = blp3.divisor([int(a), int(b)])
            assert blp3.pair_on("X", d, d, omega) == blp3.pair(d, d, omega)

    def test_symmetry_validated(self, blp3):
        assert blp3.validate_symmetry()

    def test_ring_file_roundtrip(self, blp3, omega):
        text = """
        dim 3
        gens: H E
        form H H H = 1
        form H H E = 0
        form H E E = 0
        form E E E = 1
        cycle E = E
        cycle exc_line = - E E
        """
        ring = ix.parse_ring_file(text)
        l53 = ring.divisor("5H - 3E")
        assert ring.pair(l53, l53, l53) == 98
        assert ring.pair_on("exc_line", ring.divisor("2H - E")) == 1

    def test_ring_file_errors(self):
        with pytest.raises(ConfigError):
            ix.parse_ring_file("dim 3\ngens: H\nform H H = 1")
        with pytest.raises(ConfigError):
            ix.parse_ring_file("gens: H\nform H = 1")


class TestChargePath:
    def test_exceptional_surface_path(self, blp3, omega):
        z = st.charge_path(blp3, "E", blp3.divisor("5H - 3E"), omega)
        # (t^2 - b^2)/2 + i b t with b = 3
        assert z.re == QPoly([Fraction(-9, 2), 0, Fraction(1, 2)])
        assert z.im == QPoly([0, 3])

    def test_point_is_minus_one(self, blp3, omega):
        z = st.charge_path(blp3, "point", blp3.divisor("5H - 3E"), omega)
        assert z.re == QPoly([-1]) and z.im.is_zero()

    def test_full_space_imaginary_part(self, blp3, omega):
        a, b = 5, 3
        z = st.charge_path(blp3, "X", blp3.divisor([a, -b]), omega)
        # Im Z_X(t) = t (2a^2 - b^2)/2 - 7 t^3/6
        assert z.im == QPoly([0, Fraction(2 * a * a - b * b, 2), 0, Fraction(-7, 6)])

    def test_non_kaehler_rejected(self, blp3):
        with pytest.raises(NonKaehler):
            st.charge_path(blp3, "E", blp3.divisor("H"), blp3.divisor("H"))


class TestLiftedAngle:
    def test_positive_real_ray(self):
        path = st.ChargePath(QPoly([0, 1]), QPoly([]), 1, "ray")
        lift = st.lifted_angle(path)
        assert lift.defined
        assert abs(lift.angle) < 1e-9

    def test_known_values(self, blp3, omega):
        l53 = blp3.divisor("5H - 3E")
        ax = st.lifted_angle(st.charge_path(blp3, "X", l53, omega)).angle
        ae = st.lifted_angle(st.charge_path(blp3, "E", l53, omega)).angle
        assert abs(ax - (math.pi - math.atan2(19.333333333333332, 7.833333333333333))) < 1e-9
        assert abs(ae - (math.pi - math.atan(3 / 4))) < 1e-9

    def test_surface_cycles_always_defined_hodge(self, rng):
        # dim-2 paths (w2 t^2 - l2)/2 + i wl t with Hodge-index-consistent data:
        # wl = 0 forces l2 <= 0, so Re and Im never vanish together on [1, inf)
        for _ in range(500):
            w2 = int(rng.integers(1, 30))
            wl = int(rng.integers(-12, 13))
            l2 = int(rng.integers(-30, 30))
            if wl == 0:
                l2 = -abs(l2)
            path = st.ChargePath(
                QPoly([Fraction(-l2, 2), 0, Fraction(w2, 2)]),
                QPoly([0, wl]),
                2,
                "V",
            )
            lift = st.lifted_angle(path)
            assert lift.defined

    def test_winding_scale_invariance(self, blp3, omega, rng):
        l53 = blp3.divisor("5H - 3E")
        path = st.charge_path(blp3, "X", l53, omega)
        base = st.lifted_angle(path).angle
        for _ in range(5):
            c = Fraction(int(rng.integers(1, 200)), int(rng.integers(1, 200)))
            scaled = path.scale(c)
            assert abs(st.lifted_angle(scaled).angle - base) < 1e-10

    def test_refinement_reproducibility(self, blp3, omega):
        l53 = blp3.divisor("5H - 3E")
        path = st.charge_path(blp3, "X", l53, omega)
        coarse = st.lifted_angle(path, base_steps=64).angle
        fine = st.lifted_angle(path, base_steps=1024).angle
        assert abs(coarse - fine) < 1e-9

    def test_crossing_certificate_exact(self, blp3, omega):
        l_cross = blp3.divisor([Fraction(12, 5), 3])  # a = 2.4, b = -3
        path = st.charge_path(blp3, "X", l_cross, omega)
        boxes = st.origin_crossings(path)
        assert len(boxes) == 1
        lo, hi = boxes[0]
        # the root is t = 3 sqrt(3)/5
        t_true = 3 * math.sqrt(3) / 5
        assert float(lo) < t_true <= float(hi)
        s_poly = path.re * path.re + path.im * path.im
        assert s_poly(lo) >= 0 and s_poly(hi) >= 0

    def test_slicing_angle_shift(self):
        lift = st.LiftedAngle(cycle="V", dim=2, angle=math.pi)
        assert st.slicing_angle(lift) == math.pi
        pt = st.LiftedAngle(cycle="point", dim=0, angle=math.pi)
        assert abs(st.slicing_angle(pt) - 2 * math.pi) < 1e-15


class TestChernInequality:
    def test_exact_values(self, blp3, omega):
        rep = st.chern_inequality_3d(blp3, blp3.divisor("5H - 3E"), omega)
        assert rep.lhs == Fraction(7 * 98, 6)
        assert rep.rhs == 3 * Fraction(41, 2) * 17
        assert rep.holds

    def test_degenerate_zero(self, blp3, omega):
        rep = st.chern_inequality_3d(blp3, blp3.divisor([0, 0]), omega)
        assert rep.degenerate and not rep.holds

    def test_wrong_dimension(self):
        ring = ix.projective_space(2)
        with pytest.raises(WrongDimension):
            st.chern_inequality_3d(ring, ring.divisor("H"), ring.divisor("H"))

    def test_consistency_sweep_with_re_sign_at_im_zero(self, blp3, omega, rng):
        # the cubic inequality says exactly: at the time t* with
        # Im Z_X(t*) = 0 (t*^2 = 3 wL^2 / w^3 when wL^2 > 0), the real part
        # is positive; the boundary case Re(t*) = 0 is the origin crossing
        w3 = blp3.pair(omega, omega, omega)
        checked = 0
        for _ in range(200):
            a = int(rng.integers(-6, 7))
            b = int(rng.integers(-6, 7))
            if a == 0 and b == 0:
                continue
            l_ab = blp3.divisor([a, -b])
            rep = st.chern_inequality_3d(blp3, l_ab, omega)
            wl2 = blp3.pair(omega, l_ab, l_ab)
            if wl2 <= 0:
                continue
            checked += 1
            t_star_sq = Fraction(3) * wl2 / w3
            w2l = blp3.pair(omega, omega, l_ab)
            l3 = blp3.pair(l_ab, l_ab, l_ab)
            re_at_star = -Fraction(l3, 6) + Fraction(w2l, 2) * t_star_sq
            assert rep.holds == (re_at_star > 0)
            if re_at_star == 0 and t_star_sq >= 1:
                path = st.charge_path(blp3, "X", l_ab, omega)
                assert st.origin_crossings(path)
        assert checked > 50


class TestClassifier:
    def test_candidate(self, blp3, omega):
        v = st.stability_classify(blp3, blp3.divisor("5H - 3E"), omega)
        assert v.status == "Candidate"
        assert all(ok for _, _, ok in v.margins)

    def test_h_empty(self, blp3, omega):
        v = st.stability_classify(blp3, blp3.divisor([5, 2]), omega)  # b = -2
        assert v.status == "HEmptyByCharge" and v.cycle == "E"

    def test_phase_obstructed(self, blp3, omega):
        v = st.stability_classify(blp3, blp3.divisor([5, -1]), omega)  # b = 1
        assert v.status == "PhaseObstructed" and v.cycle == "E"

    def test_angle_undefined_certificate(self, blp3, omega):
        v = st.stability_classify(blp3, blp3.divisor([Fraction(12, 5), 3]), omega)
        assert v.status == "AngleUndefined" and v.cycle == "X"
        assert v.crossing is not None

    def test_candidate_iff_all_margins(self, blp3, omega, rng):
        for _ in range(60):
            a = int(rng.integers(1, 8))
            b = int(rng.integers(-5, 6))
            v = st.stability_classify(blp3, blp3.divisor([a, -b]), omega)
            if v.status == "Candidate":
                assert all(ok for _, _, ok in v.margins)
            elif v.status != "AngleUndefined":
                assert not all(ok for _, _, ok in v.margins) or len(v.margins) > 0
                assert not v.margins[-1][2]


class TestModelCurves:
    def test_point_center_leading(self, blp3, omega):
        fiber = ix.IntersectionRing(1, ["F"], {(0,): Fraction(1)}, name="fiber")
        sl = st.model_curve_slope_subvariety(
            fiber, "point", [Fraction(3, 5)], [1], Fraction(1, 20), center_kind="point"
        )
        assert sl.lemma_leading == pytest.approx(0.05j)
        assert sl.w_exact == (0, Fraction(1, 20))

    def test_t_power_has_zero_obstruction(self, blp3, omega):
        # flag (t^r): E is r copies of the central fiber; the dHYM margin is
        # exactly zero, using W = r * integral_X (omega + i alpha)^n
        l53 = blp3.divisor("5H - 3E")
        re_x, im_x = st._complex_pairing(blp3, blp3.cycles["X"], omega, l53, 3)
        theta = math.atan2(float(im_x), float(re_x))
        rot = np.exp(-1j * theta) * complex(float(re_x), float(im_x))
        assert abs(rot.imag) < 1e-12 * abs(rot.real)

    def test_surface_leading_term(self):
        # n=2, curve cycle: leading 2 delta i * integral_C(omega + i alpha)
        ring = ix.projective_space(2)
        sl = st.model_curve_slope_subvariety(
            ring, "line", ring.divisor("H"), ring.divisor("H"), Fraction(1, 10),
            center_kind=None,
        )
        expected = 2 * 0.1 * 1j * (1 + 1j)
        assert sl.lemma_leading == pytest.approx(expected)

    def test_divisor_center_full_polynomial(self, blp3, omega):
        l53 = blp3.divisor("5H - 3E")
        sl = st.model_curve_slope_subvariety(
            blp3, "E", l53, omega, Fraction(1, 20), center_kind="divisor"
        )
        # leading term: 3 i delta * integral_E(omega + i alpha)^2
        lead = 3 * 0.05j * complex(1 - 9, 2 * 3)
        assert sl.lemma_leading == pytest.approx(lead)
        # full polynomial deviates from the leading term at next order only
        diff1 = abs(sl.full_charge - sl.lemma_leading)
        sl_half = st.model_curve_slope_subvariety(
            blp3, "E", l53, omega, Fraction(1, 40), center_kind="divisor"
        )
        diff2 = abs(sl_half.full_charge - sl_half.lemma_leading)
        # leading-term consistency: residual is O(delta^{n-p+1}) = O(delta^2)
        assert diff2 <= diff1 / 3.0

    def test_obstruction_matches_charge_check(self, blp3, omega):
        rep_bad = st.obstruction_test(
            blp3, "E", blp3.divisor([5, 2]), omega, Fraction(1, 20), center_kind="divisor"
        )
        assert rep_bad.space_obstructed
        rep_good = st.obstruction_test(
            blp3, "E", blp3.divisor("5H - 3E"), omega, Fraction(1, 20), center_kind="divisor"
        )
        assert not rep_good.space_obstructed and rep_good.dhym_margin > 0

    def test_numeric_slope_cross_check(self):
        g = geo.FiberGeometry(1, (32, 8), [[1.0]], [[0.6]])
        fiber = ix.IntersectionRing(1, ["F"], {(0,): Fraction(1)}, name="fiber")
        sl = st.model_curve_slope_subvariety(
            fiber, "point", [Fraction(3, 5)], [1], Fraction(1, 20), center_kind="point"
        )
        num = st.model_curve_slope_numeric(g, ("point", (0.5, 0.5)), 0.05, 8.0)
        assert abs(num - sl.cy_slope_det) <= 0.02 * abs(sl.cy_slope_det)


class TestModelCurvePotential:
    def test_trivial_flag_keeps_form(self):
        g = geo.FiberGeometry(1, (32, 8), [[1.0]], [[0.6]])
        phi = st.model_curve_potential(g, ("t_power", 2), 0.05, 3.0)
        dev = geo.curvature_form(phi) - g.alpha0
        assert np.max(np.abs(dev)) < 1e-12
        assert phi.values.std() < 1e-14

    def test_point_slice_calibrated(self):
        g = geo.FiberGeometry(1, (64, 8), [[1.0]], [[0.6]])
        phi = st.model_curve_potential(g, ("point", (0.5, 0.5)), 0.05, 4.0)
        assert phi.values.shape == g.grid

    def test_delta_scan_finds_exit_threshold(self):
        # the log profile drags the eigenvalue below tan(theta_hat - pi/2)
        # once delta is large enough; bisection localizes the exit (the
        # sweep's theta_hat-dependence is reported, not asserted)
        from dhym_lab.errors import DeltaTooLarge

        g = geo.FiberGeometry(1, (32, 8), [[1.0]], [[0.6]])
        svals = (1.0, 3.0)
        flag = ("point", (0.5, 0.5))
        dmax = st.delta_max_scan(g, flag, svals, hi=8.0, tol=2e-2)
        assert 0 < dmax < 8.0
        with pytest.raises(DeltaTooLarge):
            for s in svals:
                st.model_curve_potential(g, flag, dmax + 0.5, s)


class TestScans:
    def test_b_minus3_scan_extended_range(self, blp3, omega):
        found = []
        a = Fraction(3, 2)
        while a <= 3:
            path = st.charge_path(blp3, "X", blp3.divisor([a, 3]), omega)
            if st.origin_crossings(path):
                found.append(a)
            a += Fraction(1, 100)
        assert found == [Fraction(12, 5)]

    def test_b_minus3_literal_range_empty(self, blp3, omega):
        a = Fraction(3, 10)
        while a <= Fraction(6, 10):
            path = st.charge_path(blp3, "X", blp3.divisor([a, 3]), omega)
            assert not st.origin_crossings(path)
            a += Fraction(1, 100)
