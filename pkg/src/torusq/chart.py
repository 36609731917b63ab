"""Action-angle chart for planar central-force motion in balanced units.

The Hamiltonian is H = (w0/2) [p_r^2 + L^2/r^2 + 2U(r)] with a smooth
polynomial-in-r^2 potential U, U(0)=0, U''(0)=1.  For L != 0 and energies
below any separatrix the orbits fill 2-tori labelled by (E, L); the chart
maps phase-space points to (phi_r, phi_theta, A_r, L) and back.

All quadratures substitute rho = r^2 = m + w sin(u), which removes the
inverse-square-root singularities of p_r at both turning points: writing
rho * p_r^2 = F(rho) = -(rho - rho0)(rho - rho1) G(rho) with G > 0 obtained by
exact polynomial deflation, every integrand below is smooth in u.  Node
counts and iteration counts are fixed (never adaptive per point) so that all
chart outputs are smooth functions of the input point to machine precision;
adaptivity would make finite differences of chart quantities meaningless.

Angle conventions: phi_r = 0 at the inner turning point with p_r turning
positive; phi_theta agrees with the polar angle at that event (the separable
generating function theta*L + int p_r dr).  The averaged second-order
correction downstream is invariant under any other choice of origin.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .fields import RegionError, ScalarField, numeric_field, polynomial_field, scaled_field
from .poly import Poly
from .potentials import CentralForcePotential

__all__ = [
    "ChartRegionError",
    "TurningPointError",
    "DegenerateTorusError",
    "turning_points",
    "radial_action",
    "contour_matrices",
    "quantized_actions",
    "TorusChart",
]

TWO_PI = 2.0 * np.pi


class ChartRegionError(RegionError):
    pass


class TurningPointError(ValueError):
    pass


class DegenerateTorusError(TurningPointError):
    pass


@lru_cache(maxsize=16)
def _gauss_nodes(order: int) -> tuple[np.ndarray, np.ndarray]:
    xi, wt = np.polynomial.legendre.leggauss(order)
    xi.flags.writeable = False
    wt.flags.writeable = False
    return xi, wt


@lru_cache(maxsize=16)
def _gauss_half_circle(order: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Nodes u on [-pi/2, pi/2] with du-weights, plus their sines and cosines."""
    xi, wt = _gauss_nodes(order)
    u = -0.5 * np.pi + 0.5 * np.pi * (xi + 1.0)
    jac = 0.5 * np.pi * wt
    sin_u, cos_u = np.sin(u), np.cos(u)
    for arr in (u, jac, sin_u, cos_u):
        arr.flags.writeable = False
    return u, jac, sin_u, cos_u


def _wrap(phi: np.ndarray) -> np.ndarray:
    return np.mod(phi, TWO_PI)


# ---------------------------------------------------------------------------
# Radial momentum polynomial and turning points (all vectorized over points)


def _f_coeffs(pot: CentralForcePotential, e: np.ndarray, l: np.ndarray) -> np.ndarray:
    """Ascending coefficients of F(rho) = rho p_r^2 = (2E/w0) rho - L^2 - 2 rho U(rho)."""
    e = np.asarray(e, dtype=float)
    l = np.asarray(l, dtype=float)
    d = pot.degree
    c = np.zeros((d + 2, np.broadcast(e, l).size))
    c[0] = -np.broadcast_to(l, c[0].shape) ** 2
    c[1] = 2.0 * np.broadcast_to(e, c[0].shape) / pot.omega0
    for k, uk in enumerate(pot.u):
        c[k + 2] -= 2.0 * uk
    return c


def _poly_eval(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Horner evaluation; coeffs (K, M) ascending, x (M,) or (M, nodes)."""
    out = np.zeros_like(x)
    for c in coeffs[::-1]:
        cc = c[:, None] if x.ndim == 2 else c
        out = out * x + cc
    return out


def _poly_deriv(coeffs: np.ndarray) -> np.ndarray:
    k = np.arange(1, coeffs.shape[0])
    return coeffs[1:] * k[:, None]


def _bisect_root(coeffs: np.ndarray, lo: np.ndarray, hi: np.ndarray, iters: int = 36,
                 newton: int = 6) -> np.ndarray:
    """Root of ascending-coefficient polynomials bracketed by [lo, hi] (sign change assumed)."""
    flo = _poly_eval(coeffs, lo)
    dcoeffs = _poly_deriv(coeffs)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = _poly_eval(coeffs, mid)
        same = np.sign(fm) == np.sign(flo)
        lo = np.where(same, mid, lo)
        flo = np.where(same, fm, flo)
        hi = np.where(same, hi, mid)
    x = 0.5 * (lo + hi)
    for _ in range(newton):
        fx = _poly_eval(coeffs, x)
        dfx = _poly_eval(dcoeffs, x)
        step = np.where(dfx != 0.0, fx / np.where(dfx != 0.0, dfx, 1.0), 0.0)
        xn = x - step
        x = np.where((xn > lo) & (xn < hi), xn, x)
    return x


def _turning_sq(pot: CentralForcePotential, e: np.ndarray, l: np.ndarray,
                degenerate_rtol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Simple roots rho0 < rho1 of F; raises when the annulus does not exist."""
    e = np.atleast_1d(np.asarray(e, dtype=float))
    l = np.atleast_1d(np.asarray(l, dtype=float))
    e, l = np.broadcast_arrays(e, l)
    coeffs = _f_coeffs(pot, e.ravel(), l.ravel())
    m = coeffs.shape[1]

    hi = 2.0 * (np.abs(e.ravel()) / pot.omega0 + np.abs(l.ravel()) + 1.0)
    for _ in range(200):
        mask = _poly_eval(coeffs, hi) >= 0.0
        if not mask.any():
            break
        hi = np.where(mask, 2.0 * hi, hi)
    else:
        raise TurningPointError("outer turning point bracket not found: unbounded motion?")

    # Critical point of F between the roots (F' decreasing from 2E/w0 > 0).
    dcoeffs = _poly_deriv(coeffs)
    if dcoeffs.shape[0] == 1:
        rho_c = np.full(m, np.inf)  # F linear cannot happen (degree >= 2)
        raise TurningPointError("degenerate radial polynomial")
    hi_d = hi.copy()
    for _ in range(200):
        mask = _poly_eval(dcoeffs, hi_d) >= 0.0
        if not mask.any():
            break
        hi_d = np.where(mask, 2.0 * hi_d, hi_d)
    rho_c = _bisect_root(dcoeffs, np.zeros(m), hi_d)

    f_c = _poly_eval(coeffs, rho_c)
    fscale = np.abs(e.ravel()) / pot.omega0 + l.ravel() ** 2 + 1e-300
    if np.any(f_c <= 0.0):
        if np.all(np.abs(f_c) <= 1e-12 * fscale):
            raise DegenerateTorusError(
                "energy sits at the circular-orbit bound: coincident turning points"
            )
        raise TurningPointError(
            "energy below the minimum of the effective potential: no annular motion"
        )

    zero_l = np.abs(l.ravel()) == 0.0
    rho0 = np.where(zero_l, 0.0, _bisect_root(coeffs, np.zeros(m), rho_c))
    rho1 = _bisect_root(coeffs, rho_c, hi)

    width = rho1 - rho0
    if np.any(width <= degenerate_rtol * np.maximum(rho1, 1e-300)):
        raise DegenerateTorusError(
            "coincident turning points: circular orbit or separatrix (torus degenerates)"
        )
    return rho0.reshape(e.shape), rho1.reshape(e.shape)


def turning_points(pot: CentralForcePotential, e: float, l: float) -> tuple[float, float]:
    """Radial turning points r0 < r1 solving 2E/w0 = L^2/r^2 + 2U(r)."""
    rho0, rho1 = _turning_sq(pot, np.asarray([e]), np.asarray([l]))
    return float(np.sqrt(rho0[0])), float(np.sqrt(rho1[0]))


def _deflate(coeffs: np.ndarray, rho0: np.ndarray, rho1: np.ndarray) -> np.ndarray:
    """G with F(rho) = -(rho - rho0)(rho - rho1) G(rho); exact synthetic division."""
    def divide(c: np.ndarray, root: np.ndarray) -> np.ndarray:
        deg = c.shape[0] - 1
        b = np.zeros((deg, c.shape[1]))
        b[deg - 1] = c[deg]
        for i in range(deg - 1, 0, -1):
            b[i - 1] = c[i] + root * b[i]
        return b

    return -divide(divide(coeffs, rho1), rho0)


# ---------------------------------------------------------------------------
# Torus data: everything one batch of (E, L) values needs


@dataclass
class _TorusData:
    e: np.ndarray
    l: np.ndarray
    rho0: np.ndarray
    rho1: np.ndarray
    mid: np.ndarray
    half_width: np.ndarray
    g_coeffs: np.ndarray
    omega0: float
    gl_order: int
    a_r: np.ndarray = None
    tau_half: np.ndarray = None
    theta_half: np.ndarray = None

    @property
    def omega11(self) -> np.ndarray:
        return np.pi / self.tau_half

    @property
    def omega12(self) -> np.ndarray:
        return self.theta_half / self.tau_half


def _make_torus_data(pot: CentralForcePotential, e: np.ndarray, l: np.ndarray,
                     gl_order: int) -> _TorusData:
    e = np.atleast_1d(np.asarray(e, dtype=float))
    l = np.atleast_1d(np.asarray(l, dtype=float))
    e, l = np.broadcast_arrays(e, l)
    e, l = e.ravel(), l.ravel()

    # Batches frequently repeat the same torus (angle grids at fixed actions);
    # solve per unique (E, L) pair and scatter back.
    pairs = np.stack([e, l], axis=1)
    uniq, inverse = np.unique(pairs, axis=0, return_inverse=True)
    eu, lu = uniq[:, 0], uniq[:, 1]

    rho0, rho1 = _turning_sq(pot, eu, lu)
    coeffs = _f_coeffs(pot, eu, lu)
    g = _deflate(coeffs, rho0, rho1)
    data = _TorusData(
        e=eu, l=lu, rho0=rho0, rho1=rho1,
        mid=0.5 * (rho0 + rho1), half_width=0.5 * (rho1 - rho0),
        g_coeffs=g, omega0=pot.omega0, gl_order=gl_order,
    )
    _complete_integrals(data)
    return _scatter_torus_data(data, inverse)


def _scatter_torus_data(data: _TorusData, idx: np.ndarray) -> _TorusData:
    return _TorusData(
        e=data.e[idx], l=data.l[idx], rho0=data.rho0[idx], rho1=data.rho1[idx],
        mid=data.mid[idx], half_width=data.half_width[idx],
        g_coeffs=data.g_coeffs[:, idx], omega0=data.omega0, gl_order=data.gl_order,
        a_r=data.a_r[idx], tau_half=data.tau_half[idx], theta_half=data.theta_half[idx],
    )


def _sqrt_g(data: _TorusData, rho: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum(_poly_eval(data.g_coeffs, rho), 1e-300))


def _complete_integrals(data: _TorusData) -> None:
    _, jac, sin_u, cos_u = _gauss_half_circle(data.gl_order)
    rho = data.mid[:, None] + data.half_width[:, None] * sin_u
    sqrt_g = _sqrt_g(data, rho)
    data.a_r = (data.half_width ** 2 / (2.0 * np.pi)) * np.einsum(
        "k,mk->m", cos_u ** 2 * jac, sqrt_g / rho
    )
    data.tau_half = np.einsum("k,mk->m", jac, 1.0 / sqrt_g) / (2.0 * data.omega0)
    data.theta_half = data.l * np.einsum("k,mk->m", jac, 1.0 / (rho * sqrt_g)) / 2.0


def _incomplete_integrals(data: _TorusData, u_upper: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """tau and accumulated polar angle from the inner turning point to u_upper."""
    xi, wt = _gauss_nodes(data.gl_order)
    a = -0.5 * np.pi
    half_len = 0.5 * (u_upper - a)
    u = a + half_len[:, None] * (xi + 1.0)
    rho = data.mid[:, None] + data.half_width[:, None] * np.sin(u)
    sqrt_g = _sqrt_g(data, rho)
    jac = half_len[:, None] * wt
    tau = np.sum(jac / sqrt_g, axis=1) / (2.0 * data.omega0)
    dtheta = data.l * np.sum(jac / (rho * sqrt_g), axis=1) / 2.0
    return tau, dtheta


def _invert_tau(data: _TorusData, tau_target: np.ndarray,
                bisect_iters: int = 12, newton_iters: int = 8) -> np.ndarray:
    """u with tau(u) = tau_target in [0, tau_half]; hybrid bisection + Newton."""
    lo = np.full_like(tau_target, -0.5 * np.pi)
    hi = np.full_like(tau_target, 0.5 * np.pi)
    for _ in range(bisect_iters):
        mid = 0.5 * (lo + hi)
        tau_mid, _ = _incomplete_integrals(data, mid)
        low_side = tau_mid < tau_target
        lo = np.where(low_side, mid, lo)
        hi = np.where(low_side, hi, mid)
    u = 0.5 * (lo + hi)
    for _ in range(newton_iters):
        tau_u, _ = _incomplete_integrals(data, u)
        rho_u = data.mid + data.half_width * np.sin(u)
        g_u = _poly_eval(data.g_coeffs, rho_u)
        dtau = 1.0 / (2.0 * data.omega0 * np.sqrt(np.maximum(g_u, 1e-300)))
        un = u - (tau_u - tau_target) / dtau
        u = np.clip(un, lo, hi)
    return u


# ---------------------------------------------------------------------------
# Public quadrature-level operations


def radial_action(pot: CentralForcePotential, e: float | np.ndarray, l: float | np.ndarray,
                  rtol: float = 1e-10, start_order: int = 64, max_doublings: int = 5):
    """Radial action (1/pi) int_{r0}^{r1} sqrt(2E/w0 - L^2/r^2 - 2U) dr.

    Node count doubles until the relative change drops below ``rtol``.
    """
    e_arr = np.atleast_1d(np.asarray(e, dtype=float))
    l_arr = np.atleast_1d(np.asarray(l, dtype=float))
    order = start_order
    prev = _make_torus_data(pot, e_arr, l_arr, order).a_r
    for _ in range(max_doublings):
        order *= 2
        cur = _make_torus_data(pot, e_arr, l_arr, order).a_r
        if np.all(np.abs(cur - prev) <= rtol * np.maximum(np.abs(cur), 1e-300)):
            return cur if np.ndim(e) or np.ndim(l) else float(cur[0])
        prev = cur
    raise RuntimeError(f"radial action quadrature did not converge to rtol={rtol}")


def contour_matrices(sector: int) -> tuple[np.ndarray, np.ndarray]:
    """Cycle-basis matrix nu (GL(2,Z)) and Maslov vector gamma for one sign of L.

    Basis (A_r, A_theta); gamma_j = 2 * sum_k nu_jk.
    """
    if sector > 0:
        nu = np.array([[0, 1], [1, -1]], dtype=int)
    else:
        nu = np.array([[1, 0], [1, -1]], dtype=int)
    gamma = 2 * nu.sum(axis=1)
    return nu, gamma


def quantized_actions(n_r: int, m: int, hbar: float) -> tuple[float, float]:
    """Quantized (A_r, L) for radial number n_r >= 0 and angular number m != 0.

    Equivalent to quantizing the oscillator-basis actions at (n + 1/2) hbar
    and mapping through the sector's cycle matrix; both sectors give
    A_r = (n_r + 1/2) hbar, L = m hbar.
    """
    if n_r < 0 or m == 0:
        raise ValueError("need n_r >= 0 and m != 0")
    nu, gamma = contour_matrices(+1 if m > 0 else -1)
    n_vec = np.array([n_r, m])
    a_q = (n_vec + gamma / 4.0) * hbar
    return float(a_q[0]), float(a_q[1])


# ---------------------------------------------------------------------------
# The chart


class TorusChart:
    """Bidirectional action-angle chart for one sign sector of L.

    Exposes the actions and angles as scalar fields over phase space with
    derivative access (exact first derivatives for the actions, central
    differences beyond), the forward and inverse maps in batched form, and the
    frequency matrix with its action derivatives.
    """

    n_actions = 2

    def __init__(
        self,
        pot: CentralForcePotential,
        sector: int = +1,
        gl_order: int = 96,
        energy_cap: float | None = None,
        fd_steps_action: dict[int, float] | None = None,
        fd_steps_angle: dict[int, float] | None = None,
    ):
        if sector not in (+1, -1):
            raise ValueError("sector must be +1 or -1")
        self.pot = pot
        self.omega0 = pot.omega0
        self.sector = sector
        self.gl_order = gl_order
        self.energy_cap = energy_cap
        self.nu, self.gamma = contour_matrices(sector)
        self._fd_action = fd_steps_action or {1: 1e-5, 2: 1e-4, 3: 1e-3, 4: 1e-2}
        # Angle values carry quadrature noise ~1e-15; wide steps with
        # Richardson extrapolation balance that noise against truncation for
        # second and third differences (tuned on the identity suite).
        self._fd_angle = fd_steps_angle or {1: 1e-4, 2: 4e-3, 3: 1.4e-2, 4: 2e-2}
        self._fwd_cache: dict = {}
        self._build_fields()

    # -- region ------------------------------------------------------------

    def _check_region(self, e: np.ndarray, l: np.ndarray) -> None:
        bad_sector = (np.sign(l) != self.sector) | (l == 0.0)
        if np.any(bad_sector):
            raise ChartRegionError(
                f"{int(np.sum(bad_sector))} point(s) outside the L {'>' if self.sector > 0 else '<'} 0 sector"
            )
        if self.energy_cap is not None and np.any(e > self.energy_cap):
            raise ChartRegionError(f"energy above configured cap {self.energy_cap}")

    def with_sector(self, sector: int) -> "TorusChart":
        if sector == self.sector:
            return self
        return TorusChart(self.pot, sector=sector, gl_order=self.gl_order,
                          energy_cap=self.energy_cap,
                          fd_steps_action=self._fd_action, fd_steps_angle=self._fd_angle)

    # -- raw phase-space functions ------------------------------------------

    @staticmethod
    def _split(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return pts[:, 0], pts[:, 1], pts[:, 2], pts[:, 3]

    def _elr(self, pts: np.ndarray):
        x, y, px, py = self._split(pts)
        rho = x * x + y * y
        l = x * py - y * px
        e = self.omega0 * (0.5 * (px * px + py * py) + self.pot.u_of_rho(rho))
        return e, l, rho, x, y, px, py

    def energy_values(self, pts: np.ndarray) -> np.ndarray:
        return self._elr(pts)[0]

    def torus_data(self, e: np.ndarray, l: np.ndarray) -> _TorusData:
        return _make_torus_data(self.pot, e, l, self.gl_order)

    # -- forward map ---------------------------------------------------------

    def _forward_memo(self, pts: np.ndarray) -> np.ndarray:
        """Forward map with a small digest-keyed memo.

        The two angle fields difference identical stencil point sets; caching
        on the raw bytes lets the second field reuse the first field's work.
        """
        pts = np.ascontiguousarray(np.atleast_2d(np.asarray(pts, dtype=float)))
        key = (pts.shape, pts.tobytes())
        hit = self._fwd_cache.get(key)
        if hit is not None:
            return hit
        out = self.forward(pts)
        if len(self._fwd_cache) > 64:
            self._fwd_cache.clear()
        self._fwd_cache[key] = out
        return out

    def forward(self, pts: np.ndarray) -> np.ndarray:
        """Map points (M, 4) to chart coordinates (phi_r, phi_theta, A_r, L)."""
        e, l, rho, x, y, px, py = self._elr(pts)
        self._check_region(e, l)
        data = self.torus_data(e, l)
        r = np.sqrt(rho)
        p_r = (x * px + y * py) / r
        theta = np.arctan2(y, x)

        s = (rho - data.mid) / data.half_width
        u_r = np.arcsin(np.clip(s, -1.0, 1.0))
        tau_inc, dth_inc = _incomplete_integrals(data, u_r)
        outgoing = p_r >= 0.0
        tau = np.where(outgoing, tau_inc, 2.0 * data.tau_half - tau_inc)
        dth = np.where(outgoing, dth_inc, 2.0 * data.theta_half - dth_inc)

        phi_r = _wrap(data.omega11 * tau)
        phi_th = _wrap(theta - dth + data.omega12 * tau)
        return np.stack([phi_r, phi_th, data.a_r, l], axis=1)

    # -- inverse map ----------------------------------------------------------

    def energy_from_actions(self, a_r: np.ndarray, l: np.ndarray,
                            newton_iters: int = 20) -> np.ndarray:
        """Energy with radial_action(E, L) = A_r; Newton with dA/dE = tau_half/pi."""
        a_r = np.atleast_1d(np.asarray(a_r, dtype=float))
        l = np.atleast_1d(np.asarray(l, dtype=float))
        a_r, l = np.broadcast_arrays(a_r, l)
        shape = a_r.shape
        if np.any(a_r <= 0.0):
            raise ChartRegionError("radial action must be positive inside the chart")

        pairs = np.stack([a_r.ravel(), l.ravel()], axis=1)
        uniq, inverse = np.unique(pairs, axis=0, return_inverse=True)
        au, lu = uniq[:, 0], uniq[:, 1]
        e = self.omega0 * (2.0 * au + np.abs(lu))
        e_floor = self._effective_minimum(lu)
        for _ in range(newton_iters):
            data = self.torus_data(e, lu)
            e_new = e - (data.a_r - au) * np.pi / data.tau_half
            e = np.maximum(e_new, 0.5 * (e + e_floor))
        if self.energy_cap is not None and np.any(e > self.energy_cap):
            raise ChartRegionError(f"requested actions leave the region (E > {self.energy_cap})")
        return e[inverse].reshape(shape)

    def _effective_minimum(self, l: np.ndarray) -> np.ndarray:
        """Minimum of (w0/2)(L^2/rho + 2U) over rho > 0 (circular-orbit energy)."""
        l = np.atleast_1d(np.asarray(l, dtype=float)).ravel()
        # Solve L^2 = 2 rho^2 U'(rho) by bisection; RHS is increasing for small rho.
        lo = np.full(l.shape, 1e-12)
        hi = np.full(l.shape, 1.0)
        def h(rho):
            du = np.zeros_like(rho)
            for k, uk in enumerate(self.pot.u):
                du += (k + 1) * uk * rho ** k
            return 2.0 * rho ** 2 * du - l ** 2
        for _ in range(200):
            mask = h(hi) <= 0.0
            if not mask.any():
                break
            hi = np.where(mask, 2.0 * hi, hi)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            low = h(mid) < 0.0
            lo = np.where(low, mid, lo)
            hi = np.where(low, hi, mid)
        rho_c = 0.5 * (lo + hi)
        return self.omega0 * (0.5 * l ** 2 / rho_c + self.pot.u_of_rho(rho_c))

    def torus_point(self, phis: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Map chart coordinates to phase-space points (M, 4)."""
        phis = np.atleast_2d(np.asarray(phis, dtype=float))
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        phis, actions = np.broadcast_arrays(phis, actions)
        a_r, l = actions[:, 0], actions[:, 1]
        if np.any((np.sign(l) != self.sector) | (l == 0.0)):
            raise ChartRegionError("angular momentum outside the chart's sign sector")
        if np.any(a_r <= 0.0):
            raise ChartRegionError("radial action must be positive inside the chart")
        e = self.energy_from_actions(a_r, l)
        data = self.torus_data(e, l)

        tau_total = _wrap(phis[:, 0]) / data.omega11
        outgoing = tau_total <= data.tau_half
        tau_eff = np.where(outgoing, tau_total, 2.0 * data.tau_half - tau_total)
        u = _invert_tau(data, tau_eff)

        rho = data.mid + data.half_width * np.sin(u)
        g = _poly_eval(data.g_coeffs, rho)
        r = np.sqrt(rho)
        p_r_mag = data.half_width * np.abs(np.cos(u)) * np.sqrt(np.maximum(g, 0.0)) / r
        p_r = np.where(outgoing, p_r_mag, -p_r_mag)

        _, dth_inc = _incomplete_integrals(data, u)
        dth = np.where(outgoing, dth_inc, 2.0 * data.theta_half - dth_inc)
        theta = phis[:, 1] + dth - data.omega12 * tau_total

        cos_t, sin_t = np.cos(theta), np.sin(theta)
        x = r * cos_t
        y = r * sin_t
        px = p_r * cos_t - (l / r) * sin_t
        py = p_r * sin_t + (l / r) * cos_t
        return np.stack([x, y, px, py], axis=1)

    # -- frequencies -----------------------------------------------------------

    def omega_row1(self, a_r: np.ndarray, l: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(dE/dA_r, dE/dL) at fixed actions, from period quadratures."""
        e = self.energy_from_actions(a_r, l)
        data = self.torus_data(e, l)
        return data.omega11, data.omega12

    def frequency_data(self, a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Frequency matrix w[j,k] = d f^j / d A^k and its first two A-derivatives.

        Row 1 (the energy observable) comes from quadratures differentiated by
        central differences in action space; row 2 is the identity map on L,
        so w[1] = (0, 1) with vanishing derivatives.
        """
        a = np.asarray(a, dtype=float).reshape(2)
        h1 = 1e-5 * max(1.0, abs(a[0]), abs(a[1]))
        h2 = 1e-4 * max(1.0, abs(a[0]), abs(a[1]))
        h1 = min(h1, 0.2 * a[0])
        h2 = min(h2, 0.2 * a[0])

        def row1(av: np.ndarray) -> np.ndarray:
            w11, w12 = self.omega_row1(av[:, 0], av[:, 1])
            return np.stack([w11, w12], axis=1)

        w = np.zeros((2, 2))
        w[0] = row1(a[None, :])[0]
        w[1] = (0.0, 1.0)

        w3 = np.zeros((2, 2, 2))
        for lidx in range(2):
            ap = a.copy(); ap[lidx] += h1
            am = a.copy(); am[lidx] -= h1
            w3[0, :, lidx] = (row1(ap[None, :])[0] - row1(am[None, :])[0]) / (2 * h1)

        w4 = np.zeros((2, 2, 2, 2))
        for lidx in range(2):
            for midx in range(lidx, 2):
                pts = []
                for s1 in (+1, -1):
                    for s2 in (+1, -1):
                        av = a.copy()
                        av[lidx] += s1 * h2
                        av[midx] += s2 * h2
                        pts.append(av)
                vals = row1(np.asarray(pts))
                mixed = (vals[0] - vals[1] - vals[2] + vals[3]) / (4 * h2 * h2)
                w4[0, :, lidx, midx] = mixed
                w4[0, :, midx, lidx] = mixed
        return w, w3, w4

    # -- fields ------------------------------------------------------------------

    def _build_fields(self) -> None:
        n = 2
        x, y, px, py = (Poly.var(i, 4) for i in range(4))
        l_poly = x * py - y * px
        h_poly = Poly.const(4, 0.0)
        rho_poly = x * x + y * y
        for k, uk in enumerate(self.pot.u):
            h_poly = h_poly + rho_poly ** (k + 1) * uk
        h_poly = (h_poly + (px * px + py * py) * 0.5) * self.omega0

        self.h_field = polynomial_field(h_poly, "H")
        self.l_field = polynomial_field(l_poly, "L")

        def a_r_eval(pts: np.ndarray) -> np.ndarray:
            e, l, *_ = self._elr(pts)
            self._check_region(e, l)
            return self.torus_data(e, l).a_r

        def a_r_grad(pts: np.ndarray) -> np.ndarray:
            e, l, rho, x_, y_, px_, py_ = self._elr(pts)
            self._check_region(e, l)
            data = self.torus_data(e, l)
            da_de = data.tau_half / np.pi
            da_dl = -data.theta_half / np.pi
            du = np.zeros_like(rho)
            for k, uk in enumerate(self.pot.u):
                du += (k + 1) * uk * rho ** k
            grad_e = np.stack([
                self.omega0 * du * 2.0 * x_,
                self.omega0 * du * 2.0 * y_,
                self.omega0 * px_,
                self.omega0 * py_,
            ], axis=1)
            grad_l = np.stack([py_, -px_, -y_, x_], axis=1)
            return da_de[:, None] * grad_e + da_dl[:, None] * grad_l

        self.a1_field = numeric_field(
            "A_r", n, a_r_eval, gradient=a_r_grad,
            fd_steps=self._fd_action, max_order=4,
        )
        self.a2_field = polynomial_field(l_poly, "A_theta")

        def angle_eval(idx: int):
            def ev(pts: np.ndarray) -> np.ndarray:
                return self._forward_memo(pts)[:, idx]
            return ev

        self.phi1_field = numeric_field("phi_r", n, angle_eval(0), period=TWO_PI,
                                        fd_steps=self._fd_angle, max_order=3, richardson=True)
        self.phi2_field = numeric_field("phi_theta", n, angle_eval(1), period=TWO_PI,
                                        fd_steps=self._fd_angle, max_order=3, richardson=True)

        self._raised = (self.phi1_field, self.phi2_field, self.a1_field, self.a2_field)
        self._lowered = (
            scaled_field(self.a1_field, -1.0, "-A_r"),
            scaled_field(self.a2_field, -1.0, "-A_theta"),
            self.phi1_field,
            self.phi2_field,
        )

    def action_fields(self) -> tuple[ScalarField, ScalarField]:
        return self.a1_field, self.a2_field

    def angle_fields(self) -> tuple[ScalarField, ScalarField]:
        return self.phi1_field, self.phi2_field

    def raised_fields(self) -> tuple[ScalarField, ...]:
        """D^mu = (phi_r, phi_theta, A_r, L)."""
        return self._raised

    def lowered_fields(self) -> tuple[ScalarField, ...]:
        """D_mu = (-A_r, -L, phi_r, phi_theta)."""
        return self._lowered

    # -- sampling -----------------------------------------------------------------

    def sample_interior_points(self, count: int, rng: np.random.Generator,
                               a_r_range: tuple[float, float] = (0.3, 1.2),
                               l_range: tuple[float, float] = (0.3, 1.0),
                               phi_margin: float = 0.35) -> np.ndarray:
        """Random points on interior tori, keeping phi_r away from turning phases."""
        a_r = rng.uniform(*a_r_range, size=count)
        l = self.sector * rng.uniform(*l_range, size=count)
        phi_r = np.empty(count)
        half = count - count // 2
        phi_r[:half] = rng.uniform(phi_margin, np.pi - phi_margin, size=half)
        phi_r[half:] = rng.uniform(np.pi + phi_margin, TWO_PI - phi_margin, size=count - half)
        phi_t = rng.uniform(0.0, TWO_PI, size=count)
        return self.torus_point(np.stack([phi_r, phi_t], axis=1), np.stack([a_r, l], axis=1))
