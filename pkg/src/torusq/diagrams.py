"""Evaluation of arrow diagrams: J-contracted derivative networks.

A diagram is a directed multigraph whose nodes are scalar fields.  Every
single arrow from node X to node Y contributes one contraction
(d_mu X) J^{mu nu} (d_nu Y); an edge of multiplicity n contributes n parallel
contractions.  A node's derivative order is the total multiplicity of its
incident edges.  The n-th Moyal bracket {A, B}_n is the two-node diagram with
one edge of multiplicity n and carries no interior numerical prefactor.
"""

from __future__ import annotations

from dataclasses import dataclass
from string import ascii_letters
from typing import Sequence

import numpy as np

from .fields import (
    MAX_DERIVATIVE_ORDER,
    DerivativeOrderError,
    PhasePoint,
    ScalarField,
    derivative_tensor,
    poisson_matrix,
)

__all__ = [
    "Diagram",
    "DerivativeCache",
    "eval_diagram",
    "eval_diagram_batch",
    "moyal_bracket",
    "moyal_bracket_batch",
    "chain",
    "closed_loop_batch",
    "sandwich_batch",
    "resolution_of_identity_check",
]


class DerivativeCache:
    """Per-batch cache of node derivative tensors, keyed by field identity and order."""

    def __init__(self, pts: np.ndarray):
        self.pts = np.atleast_2d(np.asarray(pts, dtype=float))
        self._store: dict[tuple[int, int], np.ndarray] = {}

    def tensor(self, fld: ScalarField, order: int) -> np.ndarray:
        key = (id(fld), order)
        if key not in self._store:
            self._store[key] = derivative_tensor(fld, self.pts, order)
        return self._store[key]


@dataclass(frozen=True)
class Diagram:
    """Nodes plus directed edges (tail, head, multiplicity >= 1).

    Disconnected diagrams are allowed and evaluate to the product of their
    components; that is what the einsum contraction produces naturally.
    """

    nodes: tuple[ScalarField, ...]
    edges: tuple[tuple[int, int, int], ...] = ()

    def __post_init__(self):
        if not self.nodes:
            raise ValueError("diagram needs at least one node")
        dim_n = self.nodes[0].dim_n
        if any(f.dim_n != dim_n for f in self.nodes):
            raise ValueError("diagram nodes live on different phase spaces")
        for tail, head, mult in self.edges:
            if mult < 1:
                raise ValueError("edge multiplicity must be >= 1")
            if not (0 <= tail < len(self.nodes) and 0 <= head < len(self.nodes)):
                raise ValueError("edge endpoint out of range")

    @property
    def dim_n(self) -> int:
        return self.nodes[0].dim_n

    def node_orders(self) -> list[int]:
        orders = [0] * len(self.nodes)
        for tail, head, mult in self.edges:
            orders[tail] += mult
            orders[head] += mult
        return orders

    def with_edge(self, tail: int, head: int, mult: int = 1) -> "Diagram":
        return Diagram(self.nodes, self.edges + ((tail, head, mult),))

    def with_node(self, fld: ScalarField) -> "Diagram":
        return Diagram(self.nodes + (fld,), self.edges)


def chain(*nodes: ScalarField) -> Diagram:
    """Linear diagram X1 -> X2 -> ... -> Xk with single arrows."""
    edges = tuple((i, i + 1, 1) for i in range(len(nodes) - 1))
    return Diagram(tuple(nodes), edges)


def eval_diagram_batch(d: Diagram, pts: np.ndarray, cache: DerivativeCache | None = None) -> np.ndarray:
    """Evaluate the full contraction over a batch of points; shape (M,)."""
    if cache is None:
        cache = DerivativeCache(pts)
    orders = d.node_orders()
    for fld, order in zip(d.nodes, orders):
        if order > min(MAX_DERIVATIVE_ORDER, fld.max_order):
            raise DerivativeOrderError(
                f"node {fld.name!r} needs derivative order {order} > allowed "
                f"{min(MAX_DERIVATIVE_ORDER, fld.max_order)}"
            )

    j = poisson_matrix(d.dim_n)
    letters = iter(ascii_letters)
    node_slots: list[list[str]] = [[] for _ in d.nodes]
    operands: list[np.ndarray] = []
    subs: list[str] = []
    for tail, head, mult in d.edges:
        for _ in range(mult):
            a, b = next(letters), next(letters)
            node_slots[tail].append(a)
            node_slots[head].append(b)
            operands.append(j)
            subs.append(a + b)
    for i, fld in enumerate(d.nodes):
        operands.append(cache.tensor(fld, orders[i]))
        subs.append("..." + "".join(node_slots[i]))
    expr = ",".join(subs) + "->..."
    return np.einsum(expr, *operands, optimize=True)


def eval_diagram(d: Diagram, z: PhasePoint, cache: DerivativeCache | None = None) -> float:
    return float(eval_diagram_batch(d, z.coords[None, :], cache)[0])


def eval_diagram_abs_batch(d: Diagram, pts: np.ndarray, cache: DerivativeCache | None = None) -> np.ndarray:
    """Sum of |summand| over all index assignments of the contraction.

    This is the cancellation ceiling of the diagram value: identities among
    diagrams are meaningfully tested relative to this mass, not to the
    (possibly vanishing) net values.
    """
    if cache is None:
        cache = DerivativeCache(pts)
    orders = d.node_orders()
    j_abs = np.abs(poisson_matrix(d.dim_n))
    letters = iter(ascii_letters)
    node_slots: list[list[str]] = [[] for _ in d.nodes]
    operands: list[np.ndarray] = []
    subs: list[str] = []
    for tail, head, mult in d.edges:
        for _ in range(mult):
            a, b = next(letters), next(letters)
            node_slots[tail].append(a)
            node_slots[head].append(b)
            operands.append(j_abs)
            subs.append(a + b)
    for i, fld in enumerate(d.nodes):
        operands.append(np.abs(cache.tensor(fld, orders[i])))
        subs.append("..." + "".join(node_slots[i]))
    expr = ",".join(subs) + "->..."
    return np.einsum(expr, *operands, optimize=True)


def moyal_bracket_batch(a: ScalarField, b: ScalarField, n: int, pts: np.ndarray,
                        cache: DerivativeCache | None = None) -> np.ndarray:
    if not (1 <= n <= MAX_DERIVATIVE_ORDER):
        raise DerivativeOrderError(f"bracket order {n} outside 1..{MAX_DERIVATIVE_ORDER}")
    return eval_diagram_batch(Diagram((a, b), ((0, 1, n),)), pts, cache)


def moyal_bracket(a: ScalarField, b: ScalarField, n: int, z: PhasePoint) -> float:
    """n-fold contraction (d..d A) J^n (d..d B); n=1 is the Poisson bracket."""
    return float(moyal_bracket_batch(a, b, n, z.coords[None, :])[0])


def closed_loop_batch(d: Diagram, out_node: int, in_node: int, pts: np.ndarray,
                      cache: DerivativeCache | None = None) -> np.ndarray:
    """Contraction of the diagram with one extra arrow out_node -> in_node.

    This is the closed-loop form produced when a sandwich between the
    action-angle tuple and its index-lowered partner is collapsed; on a single
    node it contracts a symmetric Hessian with J and vanishes identically.
    """
    return eval_diagram_batch(d.with_edge(out_node, in_node, 1), pts, cache)


def sandwich_batch(d: Diagram, lowered: Sequence[ScalarField], raised: Sequence[ScalarField],
                   in_node: int, out_node: int, pts: np.ndarray,
                   cache: DerivativeCache | None = None) -> np.ndarray:
    """Sum over mu of (lowered_mu -> in_node) ... (out_node -> raised^mu)."""
    if cache is None:
        cache = DerivativeCache(pts)
    total = np.zeros(np.atleast_2d(pts).shape[0])
    n_nodes = len(d.nodes)
    for low, up in zip(lowered, raised):
        aug = Diagram(
            d.nodes + (low, up),
            d.edges + ((n_nodes, in_node, 1), (out_node, n_nodes + 1, 1)),
        )
        total = total + eval_diagram_batch(aug, pts, cache)
    return total


def resolution_of_identity_check(
    x: Diagram,
    chart,
    z: PhasePoint,
    in_node: int = 0,
    out_node: int | None = None,
) -> float:
    """Residual of the sandwich-versus-loop identity at one point.

    Evaluates | D_mu -> X -> D^mu  minus  the closed-loop contraction of X |
    and additionally checks that the chart preserves the components of the
    symplectic form (the Lagrange-bracket condition); the returned residual is
    the larger of the two.
    """
    if out_node is None:
        out_node = len(x.nodes) - 1
    pts = z.coords[None, :]
    cache = DerivativeCache(pts)
    lhs = sandwich_batch(x, chart.lowered_fields(), chart.raised_fields(), in_node, out_node, pts, cache)
    rhs = closed_loop_batch(x, out_node, in_node, pts, cache)
    residual = float(abs(lhs[0] - rhs[0]))

    # Lagrange bracket: (dD/dz)^T J_low (dD/dz) = J_low.
    grads = np.stack([cache.tensor(f, 1)[0] for f in chart.raised_fields()], axis=0)  # (2N, 2N): [mu, alpha]
    j_low = -poisson_matrix(x.dim_n)
    lag = grads.T @ j_low @ grads
    residual = max(residual, float(np.max(np.abs(lag - j_low))))
    return residual
