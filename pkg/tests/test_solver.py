import numpy as np
import pytest

from dhym_lab import functionals as fn
from dhym_lab import geometry as geo
from dhym_lab import solver as sv
from dhym_lab.errors import (
    InconsistentClass,
    NotCauchy,
    StructuralFailure,
    SubsolutionViolated,
)


def geom1(nx=32, ny=8, a=0.6):
    return geo.FiberGeometry(1, (nx, ny), [[1.0]], [[a]])


def cos_field(geom, amp, k=1, shift=0.0, const=0.0):
    x = geom.axes()[0]
    vals = amp * np.cos(2 * np.pi * k * x + shift) + const
    return geo.PotentialField(geom, np.broadcast_to(vals, geom.grid).copy())


@pytest.fixture
def boundary_pair():
    g = geom1()
    return g, cos_field(g, 0.02), cos_field(g, -0.015, shift=1.0, const=0.05)


class TestLinear1d:
    def test_exact_background(self):
        g = geom1(a=np.tan(0.5))
        phi = sv.solve_dhym_linear_1d(g, 0.5)
        assert np.max(np.abs(phi.values)) < 1e-14

    def test_manufactured_cosine(self):
        g = geom1(nx=64, a=0.6)
        th = np.arctan(0.6)
        psi = cos_field(g, 0.05)
        alpha = 0.6 + geo.complex_hessian(g, psi.values)[..., 0, 0].real
        phi = sv.solve_dhym_linear_1d(g, th, alpha_field=alpha)
        target = -psi.values + psi.values.mean()
        assert np.max(np.abs(phi.values - target)) < 1e-10
        resid = np.arctan(
            alpha + geo.complex_hessian(g, phi.values)[..., 0, 0].real
        ) - th
        assert np.max(np.abs(resid)) < 1e-10

    def test_volume_identity(self):
        g = geom1(nx=64, a=0.6)
        th = np.arctan(0.6)
        psi = cos_field(g, 0.05)
        alpha = 0.6 + geo.complex_hessian(g, psi.values)[..., 0, 0].real
        phi = sv.solve_dhym_linear_1d(g, th, alpha_field=alpha)
        sample = fn.functionals_at(geo.PotentialField(g, psi.values + phi.values), th)
        floor = abs(fn.class_integral(g))
        assert abs(sample.v - floor) <= 1e-8 * floor

    def test_inconsistent_class(self):
        g = geom1(a=0.6)
        with pytest.raises(InconsistentClass):
            sv.solve_dhym_linear_1d(g, 0.9)


class TestFiberNewton:
    def test_constant_background_one_shot(self):
        th = 0.9
        g = geo.FiberGeometry(2, (8, 8, 8, 8), np.eye(2), np.tan(th / 2) * np.eye(2))
        run, sol = sv.solve_dhym_newton(
            g, th, geo.PotentialField(g, np.zeros(g.grid))
        )
        assert run.iterates == 0
        assert np.max(np.abs(sol.values)) < 1e-14

    def test_manufactured_recovery(self):
        g = geo.FiberGeometry(2, (8, 8, 8, 8), np.eye(2), 1.8 * np.eye(2))
        axes = g.axes()
        phi_star = 0.04 * np.cos(2 * np.pi * axes[0]) + 0.03 * np.cos(
            2 * np.pi * (axes[2] + axes[1])
        )
        phi_star = np.broadcast_to(phi_star, g.grid).copy()
        h = geo.theta_field(g, g.alpha0 + geo.complex_hessian(g, phi_star))
        assert h.min() > np.pi / 2  # stays in the supercritical branch
        run, sol = sv.solve_dhym_newton(
            g, fn.hat_theta(g).lift, geo.PotentialField(g, np.zeros(g.grid)), h_field=h
        )
        assert run.converged and run.final_residual < 1e-8
        assert np.max(np.abs(sol.values - (phi_star - phi_star.mean()))) < 1e-7

    def test_perturbed_background_regression(self):
        th = np.pi / 2 + 0.2
        g = geo.FiberGeometry(2, (8, 8, 8, 8), np.eye(2), np.tan(th / 2) * np.eye(2))
        axes = g.axes()
        psi0 = 0.015 * np.cos(2 * np.pi * axes[1]) + 0.01 * np.cos(
            2 * np.pi * (axes[0] + axes[3])
        )
        psi0 = np.broadcast_to(psi0, g.grid).copy()
        a_pert = g.alpha0 + geo.complex_hessian(g, psi0)
        run, sol = sv.solve_dhym_newton(
            g, th, geo.PotentialField(g, np.zeros(g.grid)), alpha_field=a_pert
        )
        assert run.converged
        hist = run.residual_history
        assert all(b <= a + 1e-15 for a, b in zip(hist, hist[1:]))
        assert np.max(np.abs(sol.values - (-psi0 + psi0.mean()))) < 1e-7

    def test_subsolution_gate(self):
        g = geom1(a=0.0)
        bad = geo.PotentialField(g, np.zeros(g.grid))
        with pytest.raises(SubsolutionViolated):
            # n=1 partial sums are empty: 0 > h - pi/2 fails once h > pi/2
            sv.solve_dhym_newton(g, np.pi / 2 + 0.3, bad)

    def test_n1_uniqueness_two_inits(self):
        g = geom1()
        th = np.arctan(0.6)
        psi = cos_field(g, 0.04)
        alpha = (0.6 + geo.complex_hessian(g, psi.values)[..., 0, 0].real)[
            ..., None, None
        ]
        _, s1 = sv.solve_dhym_newton(
            g, th, geo.PotentialField(g, np.zeros(g.grid)), alpha_field=alpha,
            tol=1e-11,
        )
        _, s2 = sv.solve_dhym_newton(
            g, th, cos_field(g, 0.01, k=2), alpha_field=alpha, tol=1e-11
        )
        assert np.max(np.abs(s1.values - s2.values)) < 1e-9
        lin = sv.solve_dhym_linear_1d(g, th, alpha_field=alpha[..., 0, 0])
        assert np.max(np.abs(s1.values - lin.values)) < 1e-9


class TestSubsolutionBundle:
    def test_equal_boundaries_match_ring(self, boundary_pair):
        g, phi0, _ = boundary_pair
        grid = sv.AnnulusGrid(g, 17, 0.1, phi0, phi0)
        th = fn.hat_theta(g, phi0).lift
        bundle = sv.build_subsolution(grid, th)
        assert np.allclose(bundle.underline_phi[0], phi0.values, atol=1e-12)
        assert np.allclose(bundle.underline_phi[-1], phi0.values, atol=1e-12)

    def test_interior_margin(self, boundary_pair):
        g, phi0, phi1 = boundary_pair
        grid = sv.AnnulusGrid(g, 33, 0.1, phi0, phi1)
        th = fn.hat_theta(g, phi0).lift
        bundle = sv.build_subsolution(grid, th)
        assert bundle.interior_margin >= -1e-9
        assert np.isfinite(bundle.boundary_c1) and np.isfinite(bundle.boundary_c2)

    def test_structural_failure(self):
        g = geom1(a=0.6)
        # boundary data far outside the calibrated window for a too-large target
        phi0 = cos_field(g, 0.0)
        grid = sv.AnnulusGrid(g, 17, 0.1, phi0, phi0)
        with pytest.raises(StructuralFailure):
            sv.build_subsolution(grid, np.pi / 2 + 1.2)


class TestEpsilonGeodesic:
    def test_stationary(self):
        g = geom1(a=0.6)
        p0 = geo.PotentialField(g, np.zeros(g.grid))
        sol = sv.solve_epsilon_geodesic(sv.AnnulusGrid(g, 17, 0.1, p0, p0))
        assert sol.run.final_residual < 1e-10
        assert np.max(np.abs(sol.values)) < 1e-12
        assert sol.run.estimates["sup_mixed_ts"] < 1e-12
        assert sol.run.estimates["sup_tt"] < 1e-12

    def test_convexity_profile(self, boundary_pair):
        g, phi0, phi1 = boundary_pair
        sol = sv.solve_epsilon_geodesic(sv.AnnulusGrid(g, 33, 0.1, phi0, phi1))
        assert sol.run.converged and sol.run.final_residual < 1e-8
        series = sol.functional_series()
        rep = fn.second_difference_probe(series)
        j = rep.series["j"]
        assert j.min2 >= -1e-6 * j.scale
        assert rep.classification("c") == "affine"
        for name in ("re_z", "im_z"):
            assert rep.series[name].max2 <= 1e-6 * rep.series[name].scale

    def test_comparison_bounds(self, boundary_pair):
        g, phi0, phi1 = boundary_pair
        sol = sv.solve_epsilon_geodesic(sv.AnnulusGrid(g, 33, 0.1, phi0, phi1))
        under = sol.subsolution.underline_phi
        assert np.min(sol.values[:, 0] - under) >= -1e-9
        trace_bound = max(
            float(np.trace(np.linalg.inv(g.omega0) @ g.alpha0).real), 0.0
        )
        cap = (
            max(np.abs(phi0.values).max(), np.abs(phi1.values).max())
            + trace_bound * 0.1**2
            + 1e-9
        )
        assert sol.values.max() <= cap

    def test_branch_never_left(self, boundary_pair):
        g, phi0, phi1 = boundary_pair
        grid = sv.AnnulusGrid(g, 17, 0.1, phi0, phi1)
        sol = sv.solve_epsilon_geodesic(grid)
        ops = sv.SpaceTimeOps(grid)
        f = ops.phase(sol.values)
        assert f.min() > (g.n - 1) * np.pi / 2
        assert f.max() < (g.n + 1) * np.pi / 2

    def test_slices_stay_calibrated(self, boundary_pair):
        g, phi0, phi1 = boundary_pair
        sol = sv.solve_epsilon_geodesic(sv.AnnulusGrid(g, 17, 0.1, phi0, phi1))
        th = sol.theta_hat
        for k in range(sol.grid.s_nodes):
            field = geo.theta_field(g, geo.curvature_form(sol.slice_potential(k)))
            assert np.max(np.abs(field - th)) < np.pi / 2

    def test_circle_reduction_consistency(self, boundary_pair):
        g, phi0, phi1 = boundary_pair
        red = sv.solve_epsilon_geodesic(
            sv.AnnulusGrid(g, 17, 0.15, phi0, phi1, n_angle=1), tol=1e-10
        )
        full = sv.solve_epsilon_geodesic(
            sv.AnnulusGrid(g, 17, 0.15, phi0, phi1, n_angle=8), tol=1e-10
        )
        assert np.max(np.abs(full.values - red.values[:, :1])) < 1e-8


class TestScalingAndExtrapolation:
    def test_two_epsilon_study(self, boundary_pair):
        g, phi0, phi1 = boundary_pair
        report, sols = sv.estimate_scaling_study(
            g, phi0, phi1, epsilons=(0.2, 0.1, 0.05), s_nodes=33
        )
        assert report.spatial_variation < 0.15
        assert report.mixed_ratio < 4.0
        assert report.tt_ratio < 4.0
        finest, cauchy = sv.weak_geodesic_extrapolate(sols)
        assert cauchy.decreasing
        assert finest.grid.epsilon == 0.05

    def test_extrapolate_needs_three(self, boundary_pair):
        g, phi0, phi1 = boundary_pair
        sol = sv.solve_epsilon_geodesic(sv.AnnulusGrid(g, 17, 0.1, phi0, phi1))
        with pytest.raises(NotCauchy):
            sv.weak_geodesic_extrapolate([sol, sol])
