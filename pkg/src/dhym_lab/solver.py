"""Solvers for the fiber phase equation and the regularized geodesic equation.

The fiber problem prescribes the pointwise phase of ``(omega0, alpha_phi)``;
for one complex fiber dimension it is linear and solved spectrally, otherwise
by a damped Newton iteration whose line search never leaves the supercritical
branch.

The geodesic problem lives on fiber x annulus with ``s = -log|t|`` rescaled
to [0, 1] and metric ``pi* omega + eps^2 i dt dtbar``.  After circle
reduction ``d_t d_tbar`` becomes ``d_s^2 / (4 |t|^2)`` and the mixed entries
pick up ``(d_s + i d_theta)/(2|t|)`` factors; we discretize the annulus
factor with second-order central differences (Dirichlet rows pinned) and the
fiber spectrally, and solve each Newton step with preconditioned GMRES.
An optional angular axis solves the unreduced problem for cross-checks.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .demailly import regularized_max
from .errors import (
    BranchExit,
    InconsistentClass,
    NotCauchy,
    NotConverged,
    SliceExitsH,
    StructuralFailure,
    SubsolutionViolated,
)
from .functionals import functionals_at, hat_theta
from .geometry import (
    FiberGeometry,
    PotentialField,
    complex_hessian,
    curvature_form,
    dz_gradient,
    theta_field,
)
from .phase import c_subsolution_test


# ---------------------------------------------------------------------------
# fiber dHYM
# ---------------------------------------------------------------------------


def solve_dhym_linear_1d(geom: FiberGeometry, theta_hat, alpha_field=None):
    """n = 1 phase equation: alpha_phi = tan(theta_hat) * omega, solved
    spectrally.  The class forces tan(theta_hat) * integral(omega) =
    integral(alpha); a mismatch raises InconsistentClass."""
    if geom.n != 1:
        raise InconsistentClass("linear closed form requires n = 1")
    g = geom.omega0[0, 0].real
    if alpha_field is None:
        a = np.broadcast_to(geom.alpha0[0, 0].real, geom.grid)
    else:
        a = np.asarray(alpha_field)
        if a.ndim == len(geom.grid) + 2:
            a = a[..., 0, 0]
        a = a.real
    target = np.tan(theta_hat) * g
    mismatch = abs(target - a.mean())
    if mismatch > 1e-10 * max(1.0, abs(target)):
        raise InconsistentClass(
            f"tan(theta_hat)*vol(omega) - integral(alpha) = {mismatch:.3e}"
        )
    rhs = target - a  # need (1/4) Lap phi = rhs
    hat = np.fft.fftn(rhs)
    k2 = np.zeros(geom.grid)
    for ax, size in enumerate(geom.grid):
        k = 2 * np.pi * np.fft.fftfreq(size, d=1.0 / size)
        shape = [1] * len(geom.grid)
        shape[ax] = size
        k2 = k2 + (k**2).reshape(shape)
    sym = -0.25 * k2
    sym_flat = sym.ravel()
    hat_flat = hat.ravel()
    out = np.zeros_like(hat_flat)
    nz = sym_flat != 0
    out[nz] = hat_flat[nz] / sym_flat[nz]
    phi = np.fft.ifftn(out.reshape(geom.grid)).real
    return PotentialField(geom, phi - phi.mean())


@dataclass
class SolverRun:
    iterates: int
    residual_history: list
    estimates: dict
    wall_time: float
    converged: bool
    epsilon: float = float("nan")
    message: str = ""

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else float("inf")


def _fiber_weights(geom, alpha_fld):
    """Per-node weight matrices of the linearized fiber operator, expressed
    against the raw coefficient entries: Wt = Linv^dag W Linv."""
    n = geom.n
    low = geom.cholesky
    linv = scipy.linalg.solve_triangular(low, np.eye(n), lower=True)
    red = np.einsum("ij,...jk,lk->...il", linv, alpha_fld, linv.conj())
    red = 0.5 * (red + np.conj(np.swapaxes(red, -1, -2)))
    mu, vec = np.linalg.eigh(red)
    w = 1.0 / (1.0 + mu**2)
    wmat = np.einsum("...ij,...j,...kj->...ik", vec, w, vec.conj())
    wt = np.einsum("ji,...jk,kl->...il", linv.conj(), wmat, linv)
    theta = np.sum(np.arctan(mu), axis=-1)
    return theta, wt


def _fiber_apply(geom, wt, delta):
    """Action of the linearized operator sum W^{ab} d_a d_bbar on delta."""
    hess = complex_hessian(geom, delta)
    return np.einsum("...ab,...ba->...", wt, hess).real


def _fiber_symbol(geom, wt_mean):
    """Fourier symbol of the averaged linearized operator."""
    hs = geom.hessian_symbols()
    sym = np.zeros(geom.grid, dtype=complex)
    for a in range(geom.n):
        for b in range(geom.n):
            sym = sym + wt_mean[a, b] * hs[b][a]
    return sym.real


def solve_dhym_newton(
    geom: FiberGeometry,
    theta_hat,
    initial: PotentialField,
    alpha_field=None,
    h_field=None,
    tol=1e-8,
    max_newton=50,
    check_subsolution=True,
):
    """Damped Newton for the fiber phase equation ``Theta(alpha_phi) = h``.

    ``h_field`` defaults to the constant ``theta_hat``.  The initial guess
    must pass the pointwise subsolution test; the line search keeps every
    iterate above the branch wall (n-1) pi/2 and backtracks on the
    sup-residual (factor 0.5, at most 40 halvings).
    """
    a_base = geom.alpha0 if alpha_field is None else np.asarray(alpha_field)
    h = np.broadcast_to(
        theta_hat if h_field is None else np.asarray(h_field), geom.grid
    )
    wall = (geom.n - 1) * np.pi / 2

    def alpha_of(vals):
        return a_base + complex_hessian(geom, vals)

    if check_subsolution:
        from .geometry import mu_field

        mus = mu_field(geom, alpha_of(initial.values))
        flat_mu = mus.reshape(-1, geom.n)
        flat_h = h.reshape(-1)
        worst = min(
            c_subsolution_test(m, hv).margin for m, hv in zip(flat_mu, flat_h)
        )
        if worst <= 0:
            raise SubsolutionViolated(
                f"initial guess fails the subsolution test by {worst:.3e}"
            )

    vals = initial.values - initial.values.mean()
    t0 = time.perf_counter()
    history = []
    for it in range(max_newton):
        theta, wt = _fiber_weights(geom, alpha_of(vals))
        res = theta - h
        sup = float(np.max(np.abs(res)))
        history.append(sup)
        if sup < tol:
            run = SolverRun(
                iterates=it,
                residual_history=history,
                estimates={},
                wall_time=time.perf_counter() - t0,
                converged=True,
            )
            return run, PotentialField(geom, vals - vals.mean())

        wt_mean = wt.reshape(-1, geom.n, geom.n).mean(axis=0)
        sym = _fiber_symbol(geom, wt_mean)
        size = int(np.prod(geom.grid))

        def matvec(x):
            d = x.reshape(geom.grid)
            d = d - d.mean()
            out = _fiber_apply(geom, wt, d) + d.mean() + x.reshape(geom.grid).mean()
            return out.ravel()

        def precond(x):
            hat = np.fft.fftn(x.reshape(geom.grid))
            flat_sym = sym.ravel()
            out = np.array(hat.ravel())
            nz = np.abs(flat_sym) > 1e-14
            out[nz] = out[nz] / flat_sym[nz]
            return np.fft.ifftn(out.reshape(geom.grid)).real.ravel()

        op = scipy.sparse.linalg.LinearOperator((size, size), matvec=matvec)
        pc = scipy.sparse.linalg.LinearOperator((size, size), matvec=precond)
        rtol = float(np.clip(0.1 * sup, 1e-10, 1e-2))
        step, info = scipy.sparse.linalg.gmres(
            op, -res.ravel(), M=pc, rtol=rtol, atol=0.0, maxiter=400, restart=40
        )
        if info != 0:
            raise NotConverged(f"GMRES stalled at Newton iterate {it} (info={info})")
        step = step.reshape(geom.grid)
        step = step - step.mean()

        lam = 1.0
        for _ in range(40):
            cand = vals + lam * step
            theta_c = theta_field(geom, alpha_of(cand))
            if np.min(theta_c) > wall:
                sup_c = float(np.max(np.abs(theta_c - h)))
                if sup_c < sup * (1.0 - 1e-4 * lam) or sup_c < tol:
                    vals = cand - cand.mean()
                    break
            lam *= 0.5
        else:
            if np.min(theta_field(geom, alpha_of(vals + lam * step))) <= wall:
                raise BranchExit(
                    "line search cannot keep the phase above the branch wall"
                )
            raise NotConverged("line search failed to reduce the residual")

    theta, _ = _fiber_weights(geom, alpha_of(vals))
    history.append(float(np.max(np.abs(theta - h))))
    run = SolverRun(
        iterates=max_newton,
        residual_history=history,
        estimates={},
        wall_time=time.perf_counter() - t0,
        converged=history[-1] < tol,
    )
    if not run.converged:
        raise NotConverged(f"Newton did not reach {tol:.1e}: residual {history[-1]:.3e}")
    return run, PotentialField(geom, vals - vals.mean())


# ---------------------------------------------------------------------------
# annulus grid and subsolutions
# ---------------------------------------------------------------------------


@dataclass
class AnnulusGrid:
    """Fiber x annulus grid; ``s in [0,1]`` with ``|t| = e^{-s}``, so the
    outer ring s=0 carries phi0 and the inner ring s=1 carries phi1."""

    geometry: FiberGeometry
    s_nodes: int
    epsilon: float
    phi0: PotentialField
    phi1: PotentialField
    n_angle: int = 1

    def __post_init__(self):
        if self.s_nodes < 9:
            raise ValueError("need at least 9 s-samples")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive (0 is only a limit)")
        for p in (self.phi0, self.phi1):
            if p.geometry.grid != self.geometry.grid:
                raise StructuralFailure("boundary fields live on a different grid")

    @property
    def s_values(self):
        return np.linspace(0.0, 1.0, self.s_nodes)

    @property
    def radii(self):
        return np.exp(-self.s_values)


def structural_margins(geom, phi0, phi1, h_max, h_min=None):
    """Margins eta1 (lower wall + subsolution slack) and eta2 (upper wall)."""
    t0 = theta_field(geom, curvature_form(phi0))
    t1 = theta_field(geom, curvature_form(phi1))
    wall = (geom.n - 1) * np.pi / 2
    eta1_wall = min(t0.min(), t1.min()) - wall
    eta1_sub = min(t0.min(), t1.min()) - (h_max - np.pi / 2)
    eta1 = min(eta1_wall, eta1_sub)
    eta2 = (geom.n + 1) * np.pi / 2 - h_max
    return float(eta1), float(eta2)


@dataclass
class SubsolutionBundle:
    psi0: np.ndarray
    psi1: np.ndarray
    underline_phi: np.ndarray
    a0: float
    a1: float
    c0: float
    c1: float
    delta_max: float
    eta1: float
    interior_margin: float = float("nan")
    boundary_c1: float = float("nan")
    boundary_c2: float = float("nan")


def build_subsolution(grid: AnnulusGrid, h, eta1=None, delta=0.25):
    """Barriers ``phi_i + A_i(|t|^2 - ...) + C_i log(...)`` glued by the
    regularized maximum.

    ``h`` is the target phase (scalar or (s,) + grid field).  The bundle's
    glued potential matches the boundary data exactly on the two rings, and
    the interior space-time phase margin ``F - h - eta1/2`` is validated
    numerically along with the |t|-derivative bounds C/eps, C/eps^2.
    """
    geom = grid.geometry
    eps = grid.epsilon
    svals = grid.s_values
    h_arr = np.broadcast_to(np.asarray(h), (grid.s_nodes,) + geom.grid)
    eta1_avail, eta2 = structural_margins(
        geom, grid.phi0, grid.phi1, float(np.max(h_arr))
    )
    if eta1_avail <= 0 or eta2 <= 0:
        raise StructuralFailure(
            f"structural margins not positive: eta1={eta1_avail:.3e}, eta2={eta2:.3e}"
        )
    eta1 = eta1_avail if eta1 is None else eta1
    if eta1 > eta1_avail + 1e-12:
        raise StructuralFailure(
            f"requested eta1={eta1} exceeds available margin {eta1_avail:.4e}"
        )

    # arctan(A) = pi/2 - eta1/4 leaves interior slack eta1/4 over the
    # required h + eta1/2
    a_const = 1.0 / np.tan(eta1 / 4.0)
    gap = float(np.max(np.abs(grid.phi0.values - grid.phi1.values)))
    c0 = gap + 1.0
    c1 = gap + 1.0 + a_const * eps**2

    r2 = np.exp(-2.0 * svals)  # |t|^2 in the unit annulus; physically eps^2 r2
    shape = (grid.s_nodes,) + (1,) * len(geom.grid)
    r2 = r2.reshape(shape)
    s_col = svals.reshape(shape)
    psi0 = grid.phi0.values[None] + a_const * eps**2 * (r2 - 1.0) - 2.0 * c0 * s_col
    psi1 = (
        grid.phi1.values[None]
        + a_const * eps**2 * (r2 - np.exp(-2.0))
        - c1 * (2.0 - 2.0 * s_col)
    )
    underline = regularized_max(psi0, psi1, delta)
    if not np.allclose(underline[0], grid.phi0.values, atol=1e-12):
        raise StructuralFailure("glued barrier does not match phi0 on the outer ring")
    if not np.allclose(underline[-1], grid.phi1.values, atol=1e-12):
        raise StructuralFailure("glued barrier does not match phi1 on the inner ring")

    bundle = SubsolutionBundle(
        psi0=psi0,
        psi1=psi1,
        underline_phi=underline,
        a0=a_const,
        a1=a_const,
        c0=c0,
        c1=c1,
        delta_max=delta,
        eta1=eta1,
    )

    ops = SpaceTimeOps(grid)
    f_vals = ops.phase(underline[:, None])  # interior s-slices
    margin = float(np.min(f_vals - h_arr[1:-1, None] - eta1 / 2.0))
    bundle.interior_margin = margin

    # |d/d|t|| bounds at the rings in the collapsed frame |t| = eps e^{-s}:
    # d/d|t| = -(e^s / eps) d/ds, so C_k := eps^k * sup|d^k/d|t|^k| is
    # eps-free and certifies the C/eps, C/eps^2 growth
    h_s = 1.0 / (grid.s_nodes - 1)
    d_outer = (underline[1] - underline[0]) / h_s
    d_inner = (underline[-1] - underline[-2]) / h_s * np.e
    dd_outer = (underline[2] - 2 * underline[1] + underline[0]) / h_s**2
    dd_inner = (underline[-3] - 2 * underline[-2] + underline[-1]) / h_s**2 * np.e**2
    bundle.boundary_c1 = float(max(np.max(np.abs(d_outer)), np.max(np.abs(d_inner))))
    bundle.boundary_c2 = float(max(np.max(np.abs(dd_outer)), np.max(np.abs(dd_inner))))
    return bundle


# ---------------------------------------------------------------------------
# space-time operator
# ---------------------------------------------------------------------------


class SpaceTimeOps:
    """Pencil assembly and linearization on (s, theta, fiber) grids.

    Fields have shape (Ns, Ntheta) + fiber grid; theta has size 1 for the
    circle-reduced problem and its derivatives vanish automatically.
    """

    def __init__(self, grid: AnnulusGrid):
        self.grid = grid
        geom = grid.geometry
        self.geom = geom
        self.eps = grid.epsilon
        self.h_s = 1.0 / (grid.s_nodes - 1)
        self.r = grid.radii
        self.fiber_axes = tuple(range(2, 2 + 2 * geom.n))
        lead = (1, 1)
        self.dz = [np.reshape(w, lead + w.shape) for w in geom.dz_symbols()]
        self.dzb = [np.reshape(w, lead + w.shape) for w in geom.dzbar_symbols()]
        self.hess_sym = [
            [np.reshape(s, lead + s.shape) for s in row]
            for row in geom.hessian_symbols()
        ]
        n_t = grid.n_angle
        m = 2 * np.pi * np.fft.fftfreq(n_t, d=2 * np.pi / n_t)
        if n_t > 1:
            m[n_t // 2] = 0.0
        self.theta_sym = (1j * m).reshape((1, n_t) + (1,) * (2 * geom.n))
        low = geom.cholesky
        linv = scipy.linalg.solve_triangular(low, np.eye(geom.n), lower=True)
        lhat = np.zeros((geom.n + 1, geom.n + 1), dtype=complex)
        lhat[0, 0] = 1.0 / self.eps
        lhat[1:, 1:] = linv
        self.lhat_inv = lhat

    # -- spectral helpers ---------------------------------------------------

    def _fiber_fft(self, arr):
        return np.fft.fftn(arr, axes=self.fiber_axes)

    def _fiber_ifft(self, arr):
        return np.fft.ifftn(arr, axes=self.fiber_axes)

    def _dtheta(self, arr):
        if self.grid.n_angle == 1:
            return np.zeros_like(arr, dtype=complex)
        hat = np.fft.fft(arr, axis=1)
        sym = self.theta_sym.reshape(
            self.theta_sym.shape + (1,) * (arr.ndim - self.theta_sym.ndim)
        )
        return np.fft.ifft(sym * hat, axis=1)

    def _ds_interior(self, arr):
        return (arr[2:] - arr[:-2]) / (2 * self.h_s)

    def _dss_interior(self, arr):
        return (arr[2:] - 2 * arr[1:-1] + arr[:-2]) / self.h_s**2

    # -- pencil assembly ----------------------------------------------------

    def coefficient_matrices(self, vals):
        """Space-time form coefficients at interior s-nodes,
        shape (Ns-2, Nt) + grid + (n+1, n+1)."""
        geom = self.geom
        n = geom.n
        hat = self._fiber_fft(vals)
        grad = np.stack(
            [self._fiber_ifft(self.dz[a] * hat) for a in range(n)], axis=-1
        )
        hess = np.empty(vals.shape + (n, n), dtype=complex)
        for a in range(n):
            for b in range(a, n):
                blk = self._fiber_ifft(self.hess_sym[a][b] * hat)
                hess[..., a, b] = blk
                if a != b:
                    hess[..., b, a] = np.conj(blk)

        r_int = self.r[1:-1].reshape((-1, 1) + (1,) * (2 * n))
        tt = (self._dss_interior(vals) + self._dtheta(vals)[1:-1].real) / (4 * r_int**2)
        gradbar = np.conj(grad)
        mixed = self._ds_interior(gradbar) + 1j * self._dtheta(gradbar)[1:-1]
        q = -mixed / (2 * r_int[..., None])

        mats = np.zeros(tt.shape + (n + 1, n + 1), dtype=complex)
        mats[..., 0, 0] = tt
        mats[..., 0, 1:] = q
        mats[..., 1:, 0] = np.conj(q)
        mats[..., 1:, 1:] = geom.alpha0 + hess[1:-1]
        return mats

    def reduce(self, mats):
        return np.einsum(
            "ij,...jk,lk->...il", self.lhat_inv, mats, self.lhat_inv.conj()
        )

    def phase(self, vals):
        red = self.reduce(self.coefficient_matrices(vals))
        red = 0.5 * (red + np.conj(np.swapaxes(red, -1, -2)))
        mu = np.linalg.eigvalsh(red)
        return np.sum(np.arctan(mu), axis=-1)

    def phase_and_weights(self, vals):
        red = self.reduce(self.coefficient_matrices(vals))
        red = 0.5 * (red + np.conj(np.swapaxes(red, -1, -2)))
        mu, vec = np.linalg.eigh(red)
        f = np.sum(np.arctan(mu), axis=-1)
        w = 1.0 / (1.0 + mu**2)
        wmat = np.einsum("...ij,...j,...kj->...ik", vec, w, vec.conj())
        wt = np.einsum(
            "ji,...jk,kl->...il", self.lhat_inv.conj(), wmat, self.lhat_inv
        )
        return f, wt, mu

    # -- linearized operator -------------------------------------------------

    def apply_linearized(self, wt, delta_interior):
        """tr(Wt dM(delta)) at interior nodes; delta vanishes on the rings."""
        geom = self.geom
        n = geom.n
        full = np.zeros(
            (self.grid.s_nodes, self.grid.n_angle) + geom.grid, dtype=float
        )
        full[1:-1] = delta_interior
        hat = self._fiber_fft(full)
        grad = np.stack(
            [self._fiber_ifft(self.dz[a] * hat) for a in range(n)], axis=-1
        )
        hess = np.empty(full.shape + (n, n), dtype=complex)
        for a in range(n):
            for b in range(a, n):
                blk = self._fiber_ifft(self.hess_sym[a][b] * hat)
                hess[..., a, b] = blk
                if a != b:
                    hess[..., b, a] = np.conj(blk)

        r_int = self.r[1:-1].reshape((-1, 1) + (1,) * (2 * n))
        tt = (self._dss_interior(full) + self._dtheta(full)[1:-1].real) / (
            4 * r_int**2
        )
        gradbar = np.conj(grad)
        mixed = self._ds_interior(gradbar) + 1j * self._dtheta(gradbar)[1:-1]
        q = -mixed / (2 * r_int[..., None])

        out = wt[..., 0, 0].real * tt
        out = out + 2 * np.einsum("...a,...a->...", wt[..., 0, 1:], np.conj(q)).real
        out = out + np.einsum("...ab,...ba->...", wt[..., 1:, 1:], hess[1:-1]).real
        return out

    def preconditioner(self, wt):
        """Constant-coefficient inverse: fiber/theta modes decouple and each
        mode needs one tridiagonal solve along s."""
        geom = self.geom
        n = geom.n
        n_i = self.grid.s_nodes - 2
        axes_mean = (1,) + tuple(range(2, 2 + 2 * n))
        w_tt = wt[..., 0, 0].real.mean(axis=axes_mean)  # per interior s
        a_t = w_tt / (4 * self.r[1:-1] ** 2)
        wf = wt[..., 1:, 1:].mean(axis=axes_mean)  # (Ns-2, n, n)
        wf_mean = wf.mean(axis=0)

        sym_f = np.zeros((self.grid.n_angle,) + geom.grid, dtype=complex)
        for a in range(n):
            for b in range(n):
                sym_f = sym_f + wf_mean[a, b] * self.hess_sym[b][a][0]
        sym_f = np.broadcast_to(sym_f.real, (self.grid.n_angle,) + geom.grid)
        m2 = np.broadcast_to(
            -(self.theta_sym[0] ** 2).real, (self.grid.n_angle,) + geom.grid
        )

        h2 = self.h_s**2
        modes = sym_f.reshape(-1)
        m2_flat = m2.reshape(-1)

        diag = (
            -2.0 * a_t[:, None] / h2
            + modes[None, :]
            - m2_flat[None, :] * a_t[:, None]
        )
        off = a_t[:, None] / h2  # sub/super diagonal entries per row

        def solve(rhs_flat):
            rhs = rhs_flat.reshape((n_i, self.grid.n_angle) + geom.grid)
            rhat = np.fft.fft(np.fft.fftn(rhs, axes=self.fiber_axes), axis=1)
            r2 = rhat.reshape(n_i, -1)
            # Thomas algorithm, batched over modes
            cp = np.zeros_like(diag, dtype=complex)
            dp = np.zeros((n_i, r2.shape[1]), dtype=complex)
            cp[0] = off[0] / diag[0]
            dp[0] = r2[0] / diag[0]
            for i in range(1, n_i):
                denom = diag[i] - off[i] * cp[i - 1]
                cp[i] = off[i] / denom
                dp[i] = (r2[i] - off[i] * dp[i - 1]) / denom
            x = np.zeros_like(dp)
            x[-1] = dp[-1]
            for i in range(n_i - 2, -1, -1):
                x[i] = dp[i] - cp[i] * x[i + 1]
            xr = x.reshape((n_i, self.grid.n_angle) + geom.grid)
            out = np.fft.ifftn(np.fft.ifft(xr, axis=1), axes=self.fiber_axes).real
            return out.ravel()

        return solve


@dataclass
class GeodesicSolution:
    grid: AnnulusGrid
    values: np.ndarray  # (Ns, Ntheta) + fiber grid
    run: SolverRun
    theta_hat: float
    subsolution: SubsolutionBundle | None = None
    history: list = field(default_factory=list)

    def slice_potential(self, k) -> PotentialField:
        return PotentialField(self.grid.geometry, self.values[k, 0])

    def functional_series(self):
        svals = self.grid.s_values
        return [
            functionals_at(self.slice_potential(k), self.theta_hat, s=svals[k])
            for k in range(self.grid.s_nodes)
        ]


def _estimate_report(ops: SpaceTimeOps, vals):
    """Sup norms of the scaled derivatives entering the a priori estimates,
    measured against the eps-metric."""
    geom = ops.geom
    n = geom.n
    ginv = np.linalg.inv(geom.omega0)
    hat = ops._fiber_fft(vals)
    grad = np.stack([ops._fiber_ifft(ops.dz[a] * hat) for a in range(n)], axis=-1)
    hess = np.empty(vals.shape + (n, n), dtype=complex)
    for a in range(n):
        for b in range(n):
            hess[..., a, b] = ops._fiber_ifft(ops.hess_sym[a][b] * hat)

    grad_norm = np.sqrt(
        np.abs(np.einsum("ab,...a,...b->...", ginv, grad, np.conj(grad)))
    )
    rel = np.einsum("ab,...bc->...ac", ginv, hess)
    eigs = np.linalg.eigvals(rel.reshape(-1, n, n))
    spatial_c2 = float(np.max(np.abs(eigs)))

    r_int = ops.r[1:-1].reshape((-1, 1) + (1,) * (2 * n))
    tt = ops._dss_interior(vals) / (4 * r_int**2)
    mixed = ops._ds_interior(np.conj(grad)) / (2 * r_int[..., None])
    mixed_norm = np.sqrt(
        np.abs(np.einsum("ab,...a,...b->...", ginv, mixed, np.conj(mixed)))
    )
    eps = ops.eps
    return {
        "osc": float(vals.max() - vals.min()),
        "sup_grad_x": float(np.max(grad_norm)),
        "sup_hess_x": spatial_c2,
        "sup_mixed_ts": float(np.max(mixed_norm)) / eps,
        "sup_tt": float(np.max(np.abs(tt))) / eps**2,
    }


def solve_epsilon_geodesic(
    grid: AnnulusGrid,
    theta_hat=None,
    h_field=None,
    tol=1e-8,
    max_newton=30,
    start="subsolution",
    check_slices=True,
):
    """Damped Newton for the phase equation on fiber x annulus.

    Starts from the glued barrier bundle (``start='subsolution'``), the
    straight interpolation (``'linear'``), or a supplied (Ns,)+grid array.
    Falls back to a continuity path in the right-hand side if the direct
    iteration stalls.  Dirichlet rows are pinned; the line search keeps the
    space-time phase above the branch wall at every interior node.
    """
    geom = grid.geometry
    if theta_hat is None:
        theta_hat = hat_theta(geom, grid.phi0).lift
    h_target = theta_hat if h_field is None else np.asarray(h_field)
    h_arr = np.broadcast_to(h_target, (grid.s_nodes,) + geom.grid)

    eta1, eta2 = structural_margins(geom, grid.phi0, grid.phi1, float(np.max(h_arr)))
    if eta1 <= 0 or eta2 <= 0:
        raise StructuralFailure(
            f"boundary data violates the structural window: eta1={eta1:.3e}, eta2={eta2:.3e}"
        )

    bundle = None
    if isinstance(start, str) and start == "subsolution":
        bundle = build_subsolution(grid, h_target)
        init = bundle.underline_phi
    elif isinstance(start, str) and start == "linear":
        s = grid.s_values.reshape((-1,) + (1,) * len(geom.grid))
        init = (1 - s) * grid.phi0.values[None] + s * grid.phi1.values[None]
    else:
        init = np.asarray(start)

    vals = np.repeat(init[:, None], grid.n_angle, axis=1).astype(float)
    vals[0] = grid.phi0.values[None]
    vals[-1] = grid.phi1.values[None]

    ops = SpaceTimeOps(grid)
    wall = (geom.n - 1) * np.pi / 2
    h_int = np.broadcast_to(
        h_arr[1:-1, None], (grid.s_nodes - 2, grid.n_angle) + geom.grid
    )

    t0 = time.perf_counter()
    try:
        vals, history, iters = _newton_spacetime(
            ops, vals, h_int, wall, tol, max_newton
        )
        converged = True
        message = ""
    except (NotConverged, BranchExit):
        # continuity path in the right-hand side: start at the barrier, whose
        # own phase field solves the u=0 problem exactly, and march the
        # target phase in adaptively
        vals = np.repeat(
            (bundle.underline_phi if bundle is not None else init)[:, None],
            grid.n_angle,
            axis=1,
        ).astype(float)
        vals[0] = grid.phi0.values[None]
        vals[-1] = grid.phi1.values[None]
        vals, history, iters = _continuation_solve(
            ops, vals, h_int, wall, tol, max_newton
        )
        converged = True
        message = "continuity path"

    run = SolverRun(
        iterates=iters,
        residual_history=history,
        estimates=_estimate_report(ops, vals),
        wall_time=time.perf_counter() - t0,
        converged=converged,
        epsilon=grid.epsilon,
        message=message,
    )
    sol = GeodesicSolution(
        grid=grid, values=vals, run=run, theta_hat=float(theta_hat), subsolution=bundle
    )

    if check_slices and h_field is None:
        for k in range(grid.s_nodes):
            th = theta_field(geom, curvature_form(sol.slice_potential(k)))
            if np.max(np.abs(th - theta_hat)) >= np.pi / 2:
                raise SliceExitsH(
                    f"slice {k} leaves the almost-calibrated space", slice_index=k
                )
    return sol


def _newton_spacetime(ops, vals, h_int, wall, tol, max_newton, stall_window=5):
    history = []
    shape_i = (ops.grid.s_nodes - 2, ops.grid.n_angle) + ops.geom.grid
    size = int(np.prod(shape_i))
    for it in range(max_newton):
        f, wt, _ = ops.phase_and_weights(vals)
        res = f - h_int
        sup = float(np.max(np.abs(res)))
        history.append(sup)
        if sup < tol:
            return vals, history, it
        if (
            len(history) > stall_window
            and history[-1] > 0.98 * history[-1 - stall_window]
        ):
            raise NotConverged(
                f"stalled at residual {sup:.3e} after {it} iterates"
            )

        pre = ops.preconditioner(wt)

        def matvec(x):
            return ops.apply_linearized(wt, x.reshape(shape_i)).ravel()

        op = scipy.sparse.linalg.LinearOperator((size, size), matvec=matvec)
        pc = scipy.sparse.linalg.LinearOperator((size, size), matvec=pre)
        # inexact Newton: loose solves while damped, tight near the solution
        rtol = float(np.clip(0.1 * sup, 1e-10, 1e-2))
        step, info = scipy.sparse.linalg.gmres(
            op, -res.ravel(), M=pc, rtol=rtol, atol=0.0, maxiter=300, restart=40
        )
        if info != 0:
            raise NotConverged(f"GMRES stalled (info={info}) at iterate {it}")
        step = step.reshape(shape_i)

        lam = 1.0
        accepted = False
        for _ in range(40):
            cand = vals.copy()
            cand[1:-1] += lam * step
            f_c = ops.phase(cand)
            if np.min(f_c) > wall:
                sup_c = float(np.max(np.abs(f_c - h_int)))
                if sup_c < sup * (1.0 - 1e-4 * lam) or sup_c < tol:
                    vals = cand
                    accepted = True
                    break
            lam *= 0.5
        if not accepted:
            cand = vals.copy()
            cand[1:-1] += lam * step
            if np.min(ops.phase(cand)) <= wall:
                raise BranchExit("line search cannot stay above the branch wall")
            raise NotConverged("line search failed to reduce the residual")

    f, _, _ = ops.phase_and_weights(vals)
    sup = float(np.max(np.abs(f - h_int)))
    history.append(sup)
    if sup < tol:
        return vals, history, max_newton
    raise NotConverged(f"no convergence in {max_newton} iterates: residual {sup:.3e}")


def _continuation_solve(ops, vals, h_target, wall, tol, max_newton):
    """Adaptive homotopy F = (1-u) F(start) + u h from an exact solution."""
    f_start = ops.phase(vals)
    history = []
    iters = 0
    u, du = 0.0, 0.25
    while u < 1.0:
        u_try = min(1.0, u + du)
        h_u = (1 - u_try) * f_start + u_try * h_target
        stage_tol = tol if u_try >= 1.0 else max(tol, 1e-7)
        try:
            vals_new, hist, its = _newton_spacetime(
                ops, vals, h_u, wall, stage_tol, max_newton
            )
        except (NotConverged, BranchExit):
            du *= 0.5
            if du < 1.0 / 1024:
                raise NotConverged(
                    f"continuity path wedged near u={u:.4f}"
                ) from None
            continue
        vals = vals_new
        u = u_try
        history.extend(hist)
        iters += its
        du = min(0.25, 2 * du)
    return vals, history, iters


# ---------------------------------------------------------------------------
# scaling study and weak-geodesic extrapolation
# ---------------------------------------------------------------------------


@dataclass
class ScalingReport:
    epsilons: list
    table: dict
    spatial_variation: float
    mixed_ratio: float
    tt_ratio: float
    runs: list

    @property
    def spatial_uniform(self) -> bool:
        return self.spatial_variation < 0.15

    @property
    def temporal_bounded(self) -> bool:
        return self.mixed_ratio < 4.0 and self.tt_ratio < 4.0


def estimate_scaling_study(
    geometry,
    phi0,
    phi1,
    epsilons=(0.2, 0.1, 0.05, 0.025),
    s_nodes=65,
    theta_hat=None,
    tol=1e-8,
    warm_start=True,
):
    """Solve the geodesic across an epsilon family and tabulate the scaled
    derivative sup-norms the a priori estimates bound.

    The first solve starts from the barrier bundle; later ones continue from
    the previous epsilon's solution (the family is Cauchy in epsilon, so
    neighbours are excellent seeds).
    """
    sols = []
    prev = None
    for eps in sorted(epsilons, reverse=True):
        grid = AnnulusGrid(geometry, s_nodes, eps, phi0, phi1)
        start = "subsolution" if (prev is None or not warm_start) else prev.values[:, 0]
        sols.append(solve_epsilon_geodesic(grid, theta_hat=theta_hat, tol=tol, start=start))
        prev = sols[-1]
    order = np.argsort([-s.grid.epsilon for s in sols])
    sols = [sols[i] for i in order]
    epsilons = [s.grid.epsilon for s in sols]
    table = {
        "epsilon": list(epsilons),
        "sup_grad_x": [s.run.estimates["sup_grad_x"] for s in sols],
        "sup_hess_x": [s.run.estimates["sup_hess_x"] for s in sols],
        "sup_mixed_ts_times_eps": [
            s.run.estimates["sup_mixed_ts"] * e for s, e in zip(sols, epsilons)
        ],
        "sup_tt_times_eps2": [
            s.run.estimates["sup_tt"] * e**2 for s, e in zip(sols, epsilons)
        ],
    }

    def ratio(xs):
        lo = min(xs)
        return float("inf") if lo <= 1e-300 else max(xs) / lo

    c2 = table["sup_hess_x"]
    spatial_variation = (max(c2) - min(c2)) / max(max(c2), 1e-300)
    return ScalingReport(
        epsilons=list(epsilons),
        table=table,
        spatial_variation=float(spatial_variation),
        mixed_ratio=ratio(table["sup_mixed_ts_times_eps"]),
        tt_ratio=ratio(table["sup_tt_times_eps2"]),
        runs=[s.run for s in sols],
    ), sols


@dataclass
class CauchyReport:
    epsilons: list
    differences: list
    decreasing: bool


def weak_geodesic_extrapolate(solutions):
    """Sup-norm Cauchy differences across decreasing epsilon; the finest
    solution stands in for the weak geodesic."""
    sols = sorted(solutions, key=lambda s: -s.grid.epsilon)
    if len(sols) < 3:
        raise NotCauchy("need at least 3 converged runs")
    diffs = [
        float(np.max(np.abs(a.values - b.values)))
        for a, b in zip(sols[:-1], sols[1:])
    ]
    decreasing = all(d2 < d1 for d1, d2 in zip(diffs[:-1], diffs[1:]))
    if not decreasing and max(diffs) > 1e-12:
        raise NotCauchy(f"differences not decreasing: {diffs}")
    report = CauchyReport(
        epsilons=[s.grid.epsilon for s in sols], differences=diffs, decreasing=decreasing
    )
    return sols[-1], report
