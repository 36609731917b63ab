"""Numerically exact eigenvalues of the model Hamiltonians, per angular sector.

The planar central-force problem in balanced units separates on psi =
exp(i m theta) u(r) / sqrt(r) into the radial problem

    -(hbar^2/2) u'' + [ (m^2 - 1/4) hbar^2 / (2 r^2) + U(r) ] u = (E/w0) u,

with Dirichlet conditions at r -> 0+ and at a cutoff radius beyond the
classical annulus.  The -1/4 shift comes from the two-dimensional polar
reduction (the sqrt(r) substitution); omitting it is the classic silent bug
when comparing torus-quantized levels to an exact solver, so it is applied
unconditionally here.

Discretization: uniform grid, three-point Laplacian, symmetric tridiagonal
eigensolver, followed by one grid doubling and Richardson extrapolation of
the O(h^2) truncation error.  The difference between the two resolutions is
the reported convergence estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .chart import turning_points
from .potentials import CentralForcePotential, OneDPotential

__all__ = ["OracleError", "RadialProblem", "OracleSpectrum", "exact_spectrum", "exact_spectrum_1d"]


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class RadialProblem:
    potential: CentralForcePotential
    hbar: float
    m: int
    r_max: float
    n_points: int

    def effective_potential(self, r: np.ndarray) -> np.ndarray:
        centrifugal = (self.m ** 2 - 0.25) * self.hbar ** 2 / (2.0 * r ** 2)
        return centrifugal + self.potential.value(r)


@dataclass
class OracleSpectrum:
    hbar: float
    levels: dict[int, np.ndarray] = field(default_factory=dict)          # m -> E(n_r)
    convergence: dict[int, np.ndarray] = field(default_factory=dict)     # m -> |E_2h - E_h|
    r_max: float = 0.0
    n_points: int = 0

    def energy(self, n_r: int, m: int) -> float:
        return float(self.levels[m][n_r])

    def as_mapping(self) -> dict[tuple[int, int], float]:
        out = {}
        for m, vals in self.levels.items():
            for n_r, e in enumerate(vals):
                out[(n_r, m)] = float(e)
        return out


def _solve_radial(problem: RadialProblem, n_levels: int) -> tuple[np.ndarray, np.ndarray]:
    """Lowest eigenvalues (balanced units, E/w0) and tail mass of the top state."""
    n = problem.n_points
    h = problem.r_max / (n + 1)
    r = h * np.arange(1, n + 1)
    kin = problem.hbar ** 2 / (2.0 * h ** 2)
    diag = 2.0 * kin + problem.effective_potential(r)
    off = np.full(n - 1, -kin)
    vals, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(0, n_levels - 1))
    tail = int(0.95 * n)
    top = vecs[:, -1]
    tail_mass = float(np.sum(top[tail:] ** 2) / np.sum(top ** 2))
    return vals, tail_mass


def _auto_r_max(pot: CentralForcePotential, hbar: float, m_max: int, n_max: int,
                margin: float = 2.0) -> float:
    e_guess = 1.5 * hbar * pot.omega0 * (2 * n_max + abs(m_max) + 1)
    l_guess = hbar * max(1, abs(m_max))
    _, r1 = turning_points(pot, e_guess, l_guess)
    return margin * r1


def exact_spectrum(
    pot: CentralForcePotential,
    hbar: float,
    m_list: list[int],
    n_max: int,
    r_max: float | None = None,
    n_points: int = 4000,
    rtol: float = 1e-8,
    tail_tol: float = 1e-8,
) -> OracleSpectrum:
    """Lowest n_max+1 eigenvalues of the quantum problem for each m.

    Three grids (n, 2n, 4n) give two Richardson extrapolants of the O(h^2)
    truncation; their difference is the convergence estimate and must fall
    below ``rtol`` relative.  The returned levels add one further Richardson
    stage over the extrapolants.  Values are in balanced units (identical to
    physical energies).
    """
    if n_points > 5000:
        raise OracleError("n_points beyond the desk-scale cap (finest grid is 4x n_points)")
    if r_max is None:
        r_max = _auto_r_max(pot, hbar, max(abs(m) for m in m_list), n_max)

    spec = OracleSpectrum(hbar=hbar, r_max=r_max)
    n_levels = n_max + 1
    for m in m_list:
        solved = []
        for n_pts in (n_points, 2 * n_points, 4 * n_points):
            vals, tail = _solve_radial(RadialProblem(pot, hbar, m, r_max, n_pts), n_levels)
            if tail > tail_tol:
                raise OracleError(
                    f"eigenfunction tail mass {tail:.2e} at r_max={r_max}: cutoff radius too small"
                )
            solved.append(vals)
        extrap1 = (4.0 * solved[1] - solved[0]) / 3.0
        extrap2 = (4.0 * solved[2] - solved[1]) / 3.0
        # After the first stage the remainder is again ~h^2 (the centrifugal
        # corner contributes h^2 log h, whose extrapolant is pure h^2), so a
        # second stage with the same ratio removes it.
        best = (4.0 * extrap2 - extrap1) / 3.0
        estimate = np.abs(extrap2 - extrap1) / 3.0
        change = estimate / np.maximum(np.abs(best), 1e-300)
        if np.any(change >= 10 * rtol):
            raise OracleError(
                f"radial solver not converged for m={m}: extrapolant change {change.max():.2e}"
            )
        spec.levels[m] = pot.omega0 * best
        spec.convergence[m] = pot.omega0 * estimate
        spec.n_points = 4 * n_points
    return spec


def exact_spectrum_1d(
    pot: OneDPotential,
    hbar: float,
    n_max: int,
    x_max: float | None = None,
    n_points: int = 4000,
    rtol: float = 1e-8,
) -> np.ndarray:
    """Lowest n_max+1 levels of -(hbar^2/2) u'' + U(x) u = (E/w0) u on [-x_max, x_max]."""
    if x_max is None:
        e_guess = 1.5 * hbar * (n_max + 1)
        # crude outer turning point of U(x) = x^2/2 + ...
        x_max = 2.0 * np.sqrt(2.0 * e_guess)
    def solve(n: int) -> np.ndarray:
        h = 2.0 * x_max / (n + 1)
        x = -x_max + h * np.arange(1, n + 1)
        kin = hbar ** 2 / (2.0 * h ** 2)
        diag = 2.0 * kin + pot.value(x)
        off = np.full(n - 1, -kin)
        vals = eigh_tridiagonal(diag, off, select="i", select_range=(0, n_max))[0]
        return vals

    solved = [solve(n) for n in (n_points, 2 * n_points, 4 * n_points)]
    extrap1 = (4.0 * solved[1] - solved[0]) / 3.0
    extrap2 = (4.0 * solved[2] - solved[1]) / 3.0
    best = (4.0 * extrap2 - extrap1) / 3.0
    change = np.abs(extrap2 - extrap1) / 3.0 / np.maximum(np.abs(best), 1e-300)
    if np.any(change >= 10 * rtol):
        raise OracleError(f"1d solver not converged: extrapolant change {change.max():.2e}")
    return pot.omega0 * best
