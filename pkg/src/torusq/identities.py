"""Residual checks for the diagrammatic identity suite on an action-angle chart.

Every identity below is exact for a canonical chart; numerical residuals are
limited by the finite-difference accuracy of the chart's derivative fields.
Residuals are reported relative to the largest intermediate term of each
identity, with an absolute floor, since several identities rest on large
cancellations.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .diagrams import (
    Diagram,
    DerivativeCache,
    chain,
    closed_loop_batch,
    eval_diagram_abs_batch,
    eval_diagram_batch,
    sandwich_batch,
)
from .fields import poisson_matrix
from .quantize import chart_coordinate_partial

__all__ = ["IdentityResult", "IdentityReport", "identity_suite"]

ABS_FLOOR = 1e-12


@dataclass
class IdentityResult:
    name: str
    max_abs_residual: float
    scale: float
    n_points: int

    @property
    def rel_residual(self) -> float:
        # residuals at or below the absolute floor count as exact (identities
        # that degenerate to 0 = 0 on simple charts compare pure noise)
        if self.max_abs_residual <= ABS_FLOOR:
            return 0.0
        return self.max_abs_residual / max(self.scale, ABS_FLOOR)


@dataclass
class IdentityReport:
    results: dict[str, IdentityResult]

    @property
    def max_rel(self) -> float:
        return max(r.rel_residual for r in self.results.values())

    def failures(self, tol: float) -> list[str]:
        return [name for name, r in self.results.items() if r.rel_residual > tol]

    def lines(self) -> list[str]:
        width = max(len(n) for n in self.results)
        return [
            f"{name:<{width}}  rel={r.rel_residual:.3e}  abs={r.max_abs_residual:.3e}  scale={r.scale:.3e}"
            for name, r in self.results.items()
        ]


class _Collector:
    def __init__(self):
        self.results: dict[str, IdentityResult] = {}

    def add(self, name: str, lhs: np.ndarray, rhs: np.ndarray, *terms: np.ndarray) -> None:
        lhs = np.asarray(lhs, dtype=float)
        rhs = np.asarray(rhs, dtype=float)
        resid = float(np.max(np.abs(lhs - rhs)))
        scale = max(float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))))
        for t in terms:
            scale = max(scale, float(np.max(np.abs(t))))
        prev = self.results.get(name)
        if prev is None:
            self.results[name] = IdentityResult(name, resid, scale, lhs.size)
        else:
            prev.max_abs_residual = max(prev.max_abs_residual, resid)
            prev.scale = max(prev.scale, scale)


def _linear_chain_values(d_up, pts, cache, length: int) -> dict[tuple[int, ...], np.ndarray]:
    vals = {}
    for idx in itertools.product(range(len(d_up)), repeat=length):
        vals[idx] = eval_diagram_batch(chain(*[d_up[i] for i in idx]), pts, cache)
    return vals


def _triangle(fields3, pts, cache) -> np.ndarray:
    d = Diagram(tuple(fields3), ((2, 0, 1), (0, 1, 1), (1, 2, 1)))
    return eval_diagram_batch(d, pts, cache)


def identity_suite(chart, sample_points: np.ndarray, tol: float = 1e-5) -> IdentityReport:
    """Evaluate the full identity suite at the given interior points.

    Points must lie strictly inside the chart region, away from turning-point
    phases.  Returns a report with per-identity residuals; use
    ``report.failures(tol)`` for the names exceeding the tolerance.  Residual
    scales are the absolute index-summand masses of the diagrams involved
    (the cancellation ceiling), so identities that happen to vanish on simple
    charts are still compared against the sizes actually summed.
    """
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    cache = DerivativeCache(pts)
    d_up = chart.raised_fields()
    d_low = chart.lowered_fields()
    acts = chart.action_fields()
    angles = chart.angle_fields()
    n = chart.n_actions
    dim = 2 * n
    col = _Collector()

    def ev(d: Diagram) -> tuple[np.ndarray, np.ndarray]:
        return eval_diagram_batch(d, pts, cache), eval_diagram_abs_batch(d, pts, cache)

    # (i) three-node linear diagrams are symmetric in all indices
    vals3, mass3 = {}, {}
    for idx in itertools.product(range(dim), repeat=3):
        vals3[idx], mass3[idx] = ev(chain(*[d_up[i] for i in idx]))
    for idx in itertools.combinations_with_replacement(range(dim), 3):
        base = vals3[idx]
        for perm in set(itertools.permutations(idx)):
            col.add("linear3_symmetry", vals3[perm], base, mass3[idx])

    # (ii) triangle diagrams: symmetric under even, antisymmetric under odd permutations
    tri, tri_mass = {}, {}
    for idx in itertools.product(range(dim), repeat=3):
        d = Diagram(tuple(d_up[i] for i in idx), ((2, 0, 1), (0, 1, 1), (1, 2, 1)))
        tri[idx], tri_mass[idx] = ev(d)
    for idx in itertools.combinations_with_replacement(range(dim), 3):
        base = tri[idx]
        for perm in set(itertools.permutations((0, 1, 2))):
            sign = _perm_sign(perm)
            value = tri[tuple(idx[p] for p in perm)]
            col.add("triangle_parity", value, sign * base, tri_mass[idx])

    # (iii) four-node linear diagrams: end-pair swaps are even, whole reversal is odd
    vals4, mass4 = {}, {}
    for idx in itertools.product(range(dim), repeat=4):
        vals4[idx], mass4[idx] = ev(chain(*[d_up[i] for i in idx]))
    for idx in itertools.product(range(dim), repeat=4):
        mu, nu, al, be = idx
        base = vals4[idx]
        col.add("linear4_symmetry", vals4[(nu, mu, al, be)], base, mass4[idx])
        col.add("linear4_symmetry", vals4[(mu, nu, be, al)], base, mass4[idx])
        col.add("linear4_symmetry", vals4[(al, be, mu, nu)], -base, mass4[idx])

    # (iv) wheel: an arrow into a three-node chain equals the three-spoke star
    for idx in itertools.combinations_with_replacement(range(dim), 3):
        al, be, ga = idx
        for mu in range(dim):
            nodes = (d_up[al], d_up[be], d_up[ga], d_up[mu])
            chain_edges = ((0, 1, 1), (1, 2, 1))
            lhs = np.zeros(pts.shape[0])
            mass = np.zeros(pts.shape[0])
            for i in range(3):
                v, m = ev(Diagram(nodes, chain_edges + ((3, i, 1),)))
                lhs += v
                mass = np.maximum(mass, m)
            star, star_mass = ev(Diagram(nodes, ((3, 0, 1), (3, 1, 1), (3, 2, 1))))
            col.add("wheel", lhs, star, mass, star_mass)

    # (v) constant-bracket relations among the four candidate loop diagrams
    for k in range(n):
        a_k = acts[k]
        zero = np.zeros(pts.shape[0])
        t1, t2, t3, t4 = zero.copy(), zero.copy(), zero.copy(), zero.copy()
        mass = zero.copy()
        for up, low in zip(d_up, d_low):
            p1, m1 = ev(Diagram((up, a_k, low), ((0, 1, 1), (1, 2, 2))))
            p2, m2 = ev(Diagram((a_k, up, low), ((0, 1, 1), (1, 2, 2))))
            p3, m3 = ev(Diagram((a_k, up, low), ((0, 1, 2), (1, 2, 1))))
            p4, m4 = ev(Diagram((up, a_k, low), ((0, 1, 1), (0, 2, 1), (2, 1, 1))))
            t1, t2, t3, t4 = t1 + p1, t2 + p2, t3 + p3, t4 + p4
            mass = np.maximum.reduce([mass, m1, m2, m3, m4])
        col.add("candidate_sum_a", 2.0 * (t3 + t4), zero, mass)
        col.add("candidate_sum_b", -t1 + 2.0 * t4 + t2, zero, mass)

        # (vi) the loop diagram rewritten: first by Leibniz against the composite,
        # then in terms of action-only and angle diagrams with chart derivatives.
        rhs1 = zero.copy()
        mass1 = mass.copy()
        for up, low in zip(d_up, d_low):
            q1, n1 = ev(Diagram((up, a_k, low), ((0, 1, 1), (1, 2, 2))))
            q2, n2 = ev(Diagram((up, a_k, low), ((0, 2, 1), (1, 2, 2))))
            q3, n3 = ev(Diagram((a_k, up, low), ((0, 1, 1), (0, 2, 1), (1, 2, 1))))
            rhs1 += q1 + q2 + q3
            mass1 = np.maximum.reduce([mass1, n1, n2, n3])
        col.add("loop_leibniz", t1, rhs1, mass1)

        rhs2 = zero.copy()
        mass2 = mass.copy()
        for l in range(n):
            d_aa = Diagram((a_k, acts[l]), ((0, 1, 2),))
            s1 = chart_coordinate_partial(chart, lambda q, d=d_aa: eval_diagram_batch(d, q), pts, n + l)
            d_aphi = Diagram((a_k, angles[l]), ((0, 1, 2),))
            s2 = chart_coordinate_partial(chart, lambda q, d=d_aphi: eval_diagram_batch(d, q), pts, l)
            s3v, s3m = ev(Diagram((a_k, angles[l], acts[l]), ((0, 1, 1), (0, 2, 1), (1, 2, 1))))
            rhs2 -= s1 + s2 + 2.0 * s3v
            mass2 = np.maximum.reduce([mass2, np.abs(s1), np.abs(s2), s3m])
        col.add("loop_chart_form", t1, rhs2, mass2)

    # (vii) an arrow from an action into any diagram is minus its angle derivative
    h_field = chart.h_field
    samples = {
        "actions": Diagram((acts[0], acts[0]), ((0, 1, 2),)),
        "hamiltonian": Diagram((h_field, h_field), ((0, 1, 2),)),
    }
    for sname, x in samples.items():
        x_mass = eval_diagram_abs_batch(x, pts, cache)
        for k in range(n):
            lhs = np.zeros(pts.shape[0])
            mass = x_mass.copy()
            for i in range(len(x.nodes)):
                aug = Diagram((acts[k],) + x.nodes,
                              tuple((t + 1, h + 1, mlt) for t, h, mlt in x.edges) + ((0, i + 1, 1),))
                v, m = ev(aug)
                lhs += v
                mass = np.maximum(mass, m)
            rhs = -chart_coordinate_partial(chart, lambda q, x=x: eval_diagram_batch(x, q), pts, k)
            col.add("action_into_diagram", lhs, rhs, mass)

    # (viii) action derivative of the closed three-action chain
    for kj in range(n):
        for kk in range(n):
            lhs = np.zeros(pts.shape[0])
            bval, bmass = ev(Diagram((acts[kj], acts[kk]), ((0, 1, 2),)))
            rhs = -bval
            mass = bmass.copy()
            for l in range(n):
                d_c = chain(acts[kj], acts[kk], acts[l])
                lhs += chart_coordinate_partial(chart, lambda q, d=d_c: eval_diagram_batch(d, q), pts, n + l)
                mass = np.maximum(mass, eval_diagram_abs_batch(d_c, pts, cache))
                d_p = chain(acts[kj], acts[kk], angles[l])
                rhs -= chart_coordinate_partial(chart, lambda q, d=d_p: eval_diagram_batch(d, q), pts, l)
                mass = np.maximum(mass, eval_diagram_abs_batch(d_p, pts, cache))
            col.add("bracket2_from_chain", lhs, rhs, mass)

    # Lagrange bracket: the chart preserves the components of the symplectic form
    grads = np.stack([cache.tensor(f, 1) for f in d_up], axis=1)       # (M, 2N, 2N): [m, mu, alpha]
    j_low = -poisson_matrix(n)
    lag = np.einsum("mia,ij,mjb->mab", grads, j_low, grads)
    col.add("lagrange_bracket", lag, np.broadcast_to(j_low, lag.shape), np.ones(1))

    # Sandwich-versus-loop: single node, two-node chain, split product
    for fname, x, in_n, out_n in (
        ("loop_single_action", Diagram((acts[0],)), 0, 0),
        ("loop_single_smooth", Diagram((h_field,)), 0, 0),
        ("loop_pair", chain(h_field, acts[0]), 0, 1),
        ("loop_split_product", Diagram((acts[0], h_field, acts[1] if n > 1 else h_field), ((1, 2, 2),)), 0, 2),
    ):
        lhs = sandwich_batch(x, d_low, d_up, in_n, out_n, pts, cache)
        rhs = closed_loop_batch(x, out_n, in_n, pts, cache)
        mass = eval_diagram_abs_batch(x.with_edge(out_n, in_n, 1), pts, cache)
        col.add(fname, lhs, rhs, np.maximum(mass, 1.0))

    return IdentityReport(col.results)


def _perm_sign(perm: tuple[int, ...]) -> int:
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j = i
        length = 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign
