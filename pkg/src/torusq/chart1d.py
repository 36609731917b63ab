"""Action-angle chart for a one-dimensional oscillator in balanced units.

Same machinery as the planar chart, one degree of freedom: H = (w0/2)
[p^2 + 2U(x)] with an even polynomial U, U(0)=0, U''(0)=1.  The substitution
x = x1 sin(u) (turning points at -x1, x1) makes every integrand smooth.
Used by the one-dimensional reduction of the quantizer, which runs the full
multidimensional pipeline at N=1 against the collapsed closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chart import ChartRegionError, TurningPointError, _gauss_nodes, _wrap
from .fields import ScalarField, numeric_field, polynomial_field, scaled_field
from .poly import Poly
from .potentials import OneDPotential

__all__ = ["OneDChart"]

TWO_PI = 2.0 * np.pi


@dataclass
class _WellData:
    e: np.ndarray
    s1: np.ndarray              # square of the turning point
    g_coeffs: np.ndarray        # p^2 = (s1 - x^2) G(x^2)
    omega0: float
    gl_order: int
    action: np.ndarray = None
    tau_half: np.ndarray = None

    @property
    def omega(self) -> np.ndarray:
        return np.pi / self.tau_half


class OneDChart:
    """Bidirectional (phi, A) chart; phi = 0 at the left turning point, p rising."""

    def __init__(self, pot: OneDPotential, gl_order: int = 128,
                 fd_steps_action: dict[int, float] | None = None,
                 fd_steps_angle: dict[int, float] | None = None):
        self.pot = pot
        self.omega0 = pot.omega0
        self.gl_order = gl_order
        self.sector = +1
        self.nu = np.array([[1]], dtype=int)
        self.gamma = np.array([2], dtype=int)
        self._fd_action = fd_steps_action or {1: 1e-5, 2: 1e-4, 3: 1e-3, 4: 1e-2}
        self._fd_angle = fd_steps_angle or {1: 1e-4, 2: 4e-3, 3: 1.4e-2, 4: 2e-2}
        self._build_fields()

    n_actions = 1

    # -- polynomial machinery in s = x^2 ------------------------------------

    def _f_coeffs(self, e: np.ndarray) -> np.ndarray:
        """Ascending coefficients of F(s) = 2E/w0 - 2U(sqrt(s))."""
        d = len(self.pot.u)
        c = np.zeros((d + 1, e.size))
        c[0] = 2.0 * e / self.omega0
        for k, uk in enumerate(self.pot.u):
            c[k + 1] -= 2.0 * uk
        return c

    @staticmethod
    def _poly_eval(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
        out = np.zeros_like(x)
        for c in coeffs[::-1]:
            cc = c[:, None] if x.ndim == 2 else c
            out = out * x + cc
        return out

    def _well_data(self, e: np.ndarray) -> _WellData:
        e = np.atleast_1d(np.asarray(e, dtype=float)).ravel()
        if np.any(e <= 0.0):
            raise TurningPointError("energy must be above the potential minimum")
        coeffs = self._f_coeffs(e)
        hi = 2.0 * (e / self.omega0 + 1.0)
        for _ in range(200):
            mask = self._poly_eval(coeffs, hi) >= 0.0
            if not mask.any():
                break
            hi = np.where(mask, 2.0 * hi, hi)
        else:
            raise TurningPointError("turning point bracket not found")
        lo = np.zeros_like(hi)
        flo = self._poly_eval(coeffs, lo)
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            fm = self._poly_eval(coeffs, mid)
            same = np.sign(fm) == np.sign(flo)
            lo = np.where(same, mid, lo)
            flo = np.where(same, fm, flo)
            hi = np.where(same, hi, mid)
        s1 = 0.5 * (lo + hi)
        # deflate: F(s) = (s1 - s) G(s)
        deg = coeffs.shape[0] - 1
        b = np.zeros((deg, coeffs.shape[1]))
        b[deg - 1] = coeffs[deg]
        for i in range(deg - 1, 0, -1):
            b[i - 1] = coeffs[i] + s1 * b[i]
        g = -b
        data = _WellData(e=e, s1=s1, g_coeffs=g, omega0=self.omega0, gl_order=self.gl_order)
        self._complete(data)
        return data

    def _g_on(self, data: _WellData, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s = data.s1[:, None] * np.sin(u) ** 2
        g = self._poly_eval(data.g_coeffs, s)
        return s, np.sqrt(np.maximum(g, 1e-300))

    def _complete(self, data: _WellData) -> None:
        xi, wt = _gauss_nodes(data.gl_order)
        u = (-0.5 * np.pi) + 0.5 * np.pi * (xi + 1.0)
        uu = np.broadcast_to(u, (data.e.size, u.size))
        _, sqrt_g = self._g_on(data, uu)
        jac = 0.5 * np.pi * wt
        cos_u = np.cos(u)
        data.action = (data.s1 / np.pi) * np.einsum("k,mk->m", cos_u ** 2 * jac, sqrt_g)
        data.tau_half = np.einsum("k,mk->m", jac, 1.0 / sqrt_g) / self.omega0

    def _tau_incomplete(self, data: _WellData, u_upper: np.ndarray) -> np.ndarray:
        xi, wt = _gauss_nodes(data.gl_order)
        a = -0.5 * np.pi
        half_len = 0.5 * (u_upper - a)
        u = a + half_len[:, None] * (xi + 1.0)
        _, sqrt_g = self._g_on(data, u)
        return np.sum(half_len[:, None] * wt / sqrt_g, axis=1) / self.omega0

    def _invert_tau(self, data: _WellData, tau_target: np.ndarray) -> np.ndarray:
        lo = np.full_like(tau_target, -0.5 * np.pi)
        hi = np.full_like(tau_target, 0.5 * np.pi)
        for _ in range(12):
            mid = 0.5 * (lo + hi)
            low_side = self._tau_incomplete(data, mid) < tau_target
            lo = np.where(low_side, mid, lo)
            hi = np.where(low_side, hi, mid)
        u = 0.5 * (lo + hi)
        for _ in range(8):
            tau_u = self._tau_incomplete(data, u)
            s_u = data.s1 * np.sin(u) ** 2
            g_u = self._poly_eval(data.g_coeffs, s_u)
            dtau = 1.0 / (self.omega0 * np.sqrt(np.maximum(g_u, 1e-300)))
            u = np.clip(u - (tau_u - tau_target) / dtau, lo, hi)
        return u

    # -- maps -----------------------------------------------------------------

    def energy_values(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x, p = pts[:, 0], pts[:, 1]
        return self.omega0 * (0.5 * p * p + self.pot.value(x))

    def forward(self, pts: np.ndarray) -> np.ndarray:
        """(x, p) -> (phi, A)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x, p = pts[:, 0], pts[:, 1]
        e = self.energy_values(pts)
        data = self._well_data(e)
        x1 = np.sqrt(data.s1)
        u_x = np.arcsin(np.clip(x / x1, -1.0, 1.0))
        tau_inc = self._tau_incomplete(data, u_x)
        tau = np.where(p >= 0.0, tau_inc, 2.0 * data.tau_half - tau_inc)
        phi = _wrap(data.omega * tau)
        return np.stack([phi, data.action], axis=1)

    def action_from_energy(self, e: np.ndarray) -> np.ndarray:
        return self._well_data(np.asarray(e, dtype=float)).action

    def energy_from_actions(self, a: np.ndarray, newton_iters: int = 20) -> np.ndarray:
        a = np.atleast_1d(np.asarray(a, dtype=float)).ravel()
        if np.any(a <= 0.0):
            raise ChartRegionError("action must be positive")
        e = self.omega0 * a
        for _ in range(newton_iters):
            data = self._well_data(e)
            e_new = e - (data.action - a) * np.pi / data.tau_half
            e = np.maximum(e_new, 0.5 * e)
        return e

    def torus_point(self, phis: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """(phi, A) -> (x, p); accepts (M, 1) or (M,) arrays for both."""
        phi = np.atleast_2d(np.asarray(phis, dtype=float)).reshape(-1)
        a = np.atleast_2d(np.asarray(actions, dtype=float)).reshape(-1)
        phi, a = np.broadcast_arrays(phi, a)
        e = self.energy_from_actions(a)
        data = self._well_data(e)
        tau_total = _wrap(phi) / data.omega
        outgoing = tau_total <= data.tau_half
        tau_eff = np.where(outgoing, tau_total, 2.0 * data.tau_half - tau_total)
        u = self._invert_tau(data, tau_eff)
        x1 = np.sqrt(data.s1)
        x = x1 * np.sin(u)
        s = data.s1 * np.sin(u) ** 2
        g = self._poly_eval(data.g_coeffs, s)
        p_mag = np.sqrt(np.maximum((data.s1 - s) * g, 0.0))
        p = np.where(outgoing, p_mag, -p_mag)
        return np.stack([x, p], axis=1)

    # -- frequency data ----------------------------------------------------------

    def omega_of_action(self, a: np.ndarray) -> np.ndarray:
        e = self.energy_from_actions(a)
        return self._well_data(e).omega

    def frequency_data(self, a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        a = np.asarray(a, dtype=float).reshape(1)
        h1 = min(1e-5 * max(1.0, a[0]), 0.2 * a[0])
        h2 = min(1e-4 * max(1.0, a[0]), 0.2 * a[0])
        w = np.zeros((1, 1))
        w[0, 0] = self.omega_of_action(a)[0]
        w3 = np.zeros((1, 1, 1))
        w3[0, 0, 0] = (self.omega_of_action(a + h1)[0] - self.omega_of_action(a - h1)[0]) / (2 * h1)
        w4 = np.zeros((1, 1, 1, 1))
        w4[0, 0, 0, 0] = (
            self.omega_of_action(a + 2 * h2)[0]
            - 2 * self.omega_of_action(a)[0]
            + self.omega_of_action(a - 2 * h2)[0]
        ) / (4 * h2 * h2)
        return w, w3, w4

    # -- fields --------------------------------------------------------------------

    def _build_fields(self) -> None:
        xv, pv = Poly.var(0, 2), Poly.var(1, 2)
        h_poly = Poly.const(2, 0.0)
        s_poly = xv * xv
        for k, uk in enumerate(self.pot.u):
            h_poly = h_poly + s_poly ** (k + 1) * uk
        h_poly = (h_poly + pv * pv * 0.5) * self.omega0
        self.h_field = polynomial_field(h_poly, "H1d")

        def a_eval(pts: np.ndarray) -> np.ndarray:
            return self._well_data(self.energy_values(pts)).action

        def a_grad(pts: np.ndarray) -> np.ndarray:
            pts = np.atleast_2d(np.asarray(pts, dtype=float))
            x, p = pts[:, 0], pts[:, 1]
            data = self._well_data(self.energy_values(pts))
            da_de = data.tau_half / np.pi
            s = x * x
            du = np.zeros_like(s)
            for k, uk in enumerate(self.pot.u):
                du += (k + 1) * uk * s ** k
            grad_e = np.stack([self.omega0 * du * 2.0 * x, self.omega0 * p], axis=1)
            return da_de[:, None] * grad_e

        self.a1_field = numeric_field("A1d", 1, a_eval, gradient=a_grad,
                                      fd_steps=self._fd_action, max_order=4)
        self.phi1_field = numeric_field("phi1d", 1, lambda q: self.forward(q)[:, 0],
                                        period=TWO_PI, fd_steps=self._fd_angle, max_order=3,
                                        richardson=True)
        self._raised = (self.phi1_field, self.a1_field)
        self._lowered = (scaled_field(self.a1_field, -1.0, "-A1d"), self.phi1_field)

    def action_fields(self) -> tuple[ScalarField, ...]:
        return (self.a1_field,)

    def angle_fields(self) -> tuple[ScalarField, ...]:
        return (self.phi1_field,)

    def raised_fields(self) -> tuple[ScalarField, ...]:
        return self._raised

    def lowered_fields(self) -> tuple[ScalarField, ...]:
        return self._lowered
