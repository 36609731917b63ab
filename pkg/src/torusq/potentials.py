"""Model potentials and canonical unit balancing.

Physical central-force models are specified by even polynomial potentials
V(r) = (m w0^2/2) r^2 + c4 r^4 + c6 r^6 + ...  The canonical scaling
x -> x/sqrt(m w0), p -> sqrt(m w0) p gives positions and momenta balanced
units of action^(1/2); the balanced Hamiltonian is

    H = (w0/2) [p^2 + 2 U(r)],   U(r) = V(r / sqrt(m w0)) / w0,

with U(0) = 0 and U''(0) = 1.  Energies are unchanged by the scaling, so
balanced spectra are directly comparable to physical ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PotentialError",
    "PhysicalPotential",
    "CentralForcePotential",
    "balance_units",
    "OneDPotential",
    "balance_units_1d",
]


class PotentialError(Exception):
    pass


@dataclass(frozen=True)
class PhysicalPotential:
    """V(r) = (mass*omega0^2/2) r^2 + sum_k coeffs[k] r^(2(k+2)) in original units."""

    mass: float
    omega0: float
    anharmonic: tuple[float, ...] = ()      # coefficients of r^4, r^6, ...

    def __post_init__(self):
        if self.mass <= 0:
            raise PotentialError("mass must be positive")
        if self.omega0 <= 0:
            raise PotentialError("V''(0) <= 0: no stable small oscillations")


@dataclass(frozen=True)
class CentralForcePotential:
    """Balanced potential U as a polynomial in rho = r^2: U = sum_k u[k] rho^(k+1).

    Invariants: U(0) = 0 by construction and U''(0) = 1, i.e. u[0] = 1/2.
    ``omega0`` and ``mass`` record the original units for bookkeeping.
    """

    u: tuple[float, ...]
    omega0: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        u = tuple(float(c) for c in self.u)
        if not u or abs(u[0] - 0.5) > 1e-12:
            raise PotentialError(f"balanced potential must have U''(0)=1, got u[0]={u[0] if u else None}")
        object.__setattr__(self, "u", u)

    @property
    def degree(self) -> int:
        return len(self.u)

    def u_of_rho(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        out = np.zeros_like(rho)
        for c in reversed(self.u):
            out = rho * (out + c)
        return out

    def value(self, r: np.ndarray) -> np.ndarray:
        return self.u_of_rho(np.asarray(r, dtype=float) ** 2)

    @property
    def length_scale(self) -> float:
        """Conversion factor: physical x = balanced x / sqrt(mass * omega0)."""
        return 1.0 / np.sqrt(self.mass * self.omega0)


def balance_units(v: PhysicalPotential) -> CentralForcePotential:
    """Canonical scaling to balanced units; U(r) = V(r/sqrt(m w0))/w0."""
    m, w0 = v.mass, v.omega0
    u = [0.5]
    for k, c in enumerate(v.anharmonic):
        power = k + 2                      # rho^power with rho = r^2
        u.append(c / (w0 * (m * w0) ** power))
    while len(u) > 1 and u[-1] == 0.0:
        u.pop()
    return CentralForcePotential(u=tuple(u), omega0=w0, mass=m)


@dataclass(frozen=True)
class OneDPotential:
    """Balanced 1D potential U(x) = sum_k u[k] x^(2(k+1)); U''(0) = 1."""

    u: tuple[float, ...]
    omega0: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        u = tuple(float(c) for c in self.u)
        if not u or abs(u[0] - 0.5) > 1e-12:
            raise PotentialError("balanced 1D potential must have U''(0)=1")
        object.__setattr__(self, "u", u)

    def u_of_s(self, s: np.ndarray) -> np.ndarray:
        """U as a function of s = x^2."""
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        for c in reversed(self.u):
            out = s * (out + c)
        return out

    def value(self, x: np.ndarray) -> np.ndarray:
        return self.u_of_s(np.asarray(x, dtype=float) ** 2)


def balance_units_1d(mass: float, omega0: float, anharmonic: tuple[float, ...] = ()) -> OneDPotential:
    if mass <= 0 or omega0 <= 0:
        raise PotentialError("need mass > 0 and V''(0) > 0")
    u = [0.5]
    for k, c in enumerate(anharmonic):
        power = k + 2
        u.append(c / (omega0 * (mass * omega0) ** power))
    while len(u) > 1 and u[-1] == 0.0:
        u.pop()
    return OneDPotential(u=tuple(u), omega0=omega0, mass=mass)
