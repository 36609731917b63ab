"""Small exact multivariate polynomials.

Model observables (Hamiltonian, angular momentum, oscillator actions) are
low-degree polynomials on phase space.  Representing them exactly gives
closed-form mixed partials of any order, which the derivative engine prefers
over finite differences whenever available.
"""

from __future__ import annotations

from typing import Iterable, Mapping

import numpy as np


class Poly:
    """Polynomial in ``nvars`` variables, stored as {exponent tuple: coefficient}."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: Mapping[tuple[int, ...], float] | None = None):
        self.nvars = int(nvars)
        clean: dict[tuple[int, ...], float] = {}
        for expo, coef in (terms or {}).items():
            if len(expo) != nvars:
                raise ValueError("exponent tuple length does not match nvars")
            c = float(coef)
            if c != 0.0:
                clean[tuple(int(e) for e in expo)] = clean.get(tuple(expo), 0.0) + c
        self.terms = {e: c for e, c in clean.items() if c != 0.0}

    @staticmethod
    def zero(nvars: int) -> "Poly":
        return Poly(nvars, {})

    @staticmethod
    def const(nvars: int, c: float) -> "Poly":
        return Poly(nvars, {tuple([0] * nvars): c})

    @staticmethod
    def var(i: int, nvars: int) -> "Poly":
        expo = [0] * nvars
        expo[i] = 1
        return Poly(nvars, {tuple(expo): 1.0})

    def __add__(self, other: "Poly | float") -> "Poly":
        if not isinstance(other, Poly):
            other = Poly.const(self.nvars, float(other))
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0.0) + c
        return Poly(self.nvars, out)

    __radd__ = __add__

    def __sub__(self, other: "Poly | float") -> "Poly":
        return self + (other * -1.0 if isinstance(other, Poly) else -float(other))

    def __mul__(self, other: "Poly | float") -> "Poly":
        if not isinstance(other, Poly):
            return Poly(self.nvars, {e: c * float(other) for e, c in self.terms.items()})
        out: dict[tuple[int, ...], float] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0.0) + c1 * c2
        return Poly(self.nvars, out)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Poly":
        if k < 0:
            raise ValueError("negative powers not supported")
        out = Poly.const(self.nvars, 1.0)
        for _ in range(k):
            out = out * self
        return out

    def diff(self, i: int) -> "Poly":
        out: dict[tuple[int, ...], float] = {}
        for e, c in self.terms.items():
            if e[i] > 0:
                e2 = list(e)
                e2[i] -= 1
                out[tuple(e2)] = out.get(tuple(e2), 0.0) + c * e[i]
        return Poly(self.nvars, out)

    def partial(self, multi_index: Iterable[int]) -> "Poly":
        out = self
        for i in multi_index:
            out = out.diff(i)
        return out

    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        """Evaluate at points of shape (M, nvars); returns shape (M,)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros(pts.shape[0])
        for e, c in self.terms.items():
            term = np.full(pts.shape[0], c)
            for i, p in enumerate(e):
                if p:
                    term = term * pts[:, i] ** p
            out += term
        return out

    def __repr__(self) -> str:
        return f"Poly(nvars={self.nvars}, nterms={len(self.terms)})"
