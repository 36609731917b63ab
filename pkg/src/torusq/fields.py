"""Phase-space geometry primitives.

Points live in R^{2N} with coordinates ordered (x_1..x_N, p_1..p_N).  Greek
indices are raised and lowered with the Poisson tensor J (block [[0, I], [-I, 0]])
and its inverse.  Scalar fields carry their own derivative source: closed-form
partials where the model provides them, central finite differences otherwise.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .poly import Poly

__all__ = [
    "PhasePoint",
    "PoissonTensor",
    "ScalarField",
    "FieldError",
    "DimensionMismatchError",
    "DerivativeOrderError",
    "RegionError",
    "evaluate",
    "partial",
    "partial_batch",
    "derivative_tensor",
    "polynomial_field",
    "numeric_field",
    "scaled_field",
    "sum_field",
]

MAX_DERIVATIVE_ORDER = 4

# Central-difference steps per finite-difference depth.  Chosen to balance
# truncation against roundoff for each order; overridable per field.
DEFAULT_FD_STEPS: dict[int, float] = {1: 1e-5, 2: 1e-4, 3: 1e-3, 4: 1e-2}


class FieldError(Exception):
    """Base class for field evaluation problems."""


class DimensionMismatchError(FieldError):
    pass


class DerivativeOrderError(FieldError):
    pass


class RegionError(FieldError):
    """Evaluation requested outside a chart's region of validity."""


@dataclass(frozen=True)
class PhasePoint:
    """A point z in R^{2N}, ordered (x_1..x_N, p_1..p_N)."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float).reshape(-1)
        if c.size == 0 or c.size % 2 != 0:
            raise DimensionMismatchError(f"phase point needs even length, got {c.size}")
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "coords", c)

    @property
    def dim_n(self) -> int:
        return self.coords.size // 2


@dataclass(frozen=True)
class PoissonTensor:
    """The canonical Poisson tensor J^{mu nu} and its inverse on R^{2N}."""

    dim_n: int

    def matrix(self) -> np.ndarray:
        n = self.dim_n
        j = np.zeros((2 * n, 2 * n))
        j[:n, n:] = np.eye(n)
        j[n:, :n] = -np.eye(n)
        return j

    def inverse(self) -> np.ndarray:
        return -self.matrix()

    def lower(self, vec: np.ndarray) -> np.ndarray:
        """X_mu = J_{mu nu} X^nu."""
        return self.inverse() @ np.asarray(vec, dtype=float)

    def raise_(self, vec: np.ndarray) -> np.ndarray:
        """X^mu = J^{mu nu} X_nu."""
        return self.matrix() @ np.asarray(vec, dtype=float)


def poisson_matrix(dim_n: int) -> np.ndarray:
    return PoissonTensor(dim_n).matrix()


@dataclass(frozen=True)
class ScalarField:
    """A scalar function on phase space with derivative access up to ``max_order``.

    ``evaluator`` maps an (M, 2N) array of points to an (M,) array of values.
    If ``analytic_partial`` is given it must handle any multi-index of length
    <= ``analytic_order``; higher orders are completed by nested central
    differences applied on top of the highest available analytic derivative.
    ``period`` marks angle-valued fields: finite differences then lift samples
    to the branch nearest the stencil center before differencing.
    """

    name: str
    dim_n: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    analytic_partial: Callable[[np.ndarray, tuple[int, ...]], np.ndarray] | None = None
    analytic_order: int = 0
    max_order: int = MAX_DERIVATIVE_ORDER
    period: float | None = None
    fd_steps: Mapping[int, float] | None = None
    fd_scale: float = 1.0
    richardson: bool = False

    def step(self, depth: int) -> float:
        steps = self.fd_steps if self.fd_steps is not None else DEFAULT_FD_STEPS
        if depth not in steps:
            raise DerivativeOrderError(f"no finite-difference step for depth {depth}")
        h = steps[depth] * self.fd_scale
        if h <= 0 or not np.isfinite(h):
            raise DerivativeOrderError(f"finite-difference step underflow at depth {depth}")
        return h

    def values(self, pts: np.ndarray) -> np.ndarray:
        pts = _check_pts(self, pts)
        return np.asarray(self.evaluator(pts), dtype=float).reshape(pts.shape[0])


def _check_pts(fld: ScalarField, pts: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if pts.shape[1] != 2 * fld.dim_n:
        raise DimensionMismatchError(
            f"field {fld.name!r} is defined on R^{2 * fld.dim_n}, points have dim {pts.shape[1]}"
        )
    return pts


def evaluate(fld: ScalarField, z: PhasePoint) -> float:
    """Value of the field at a single point."""
    if z.dim_n != fld.dim_n:
        raise DimensionMismatchError(f"point has N={z.dim_n}, field expects N={fld.dim_n}")
    return float(fld.values(z.coords[None, :])[0])


def _lifted_values(fld: ScalarField, samples: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Evaluate at stencil samples (M, S, 2N), unwrapping periodic values near ref (M,)."""
    m, s, d = samples.shape
    vals = fld.values(samples.reshape(m * s, d)).reshape(m, s)
    if fld.period is not None:
        p = fld.period
        vals = ref[:, None] + (vals - ref[:, None] + 0.5 * p) % p - 0.5 * p
    return vals


def _fd_stencil(fld: ScalarField, pts: np.ndarray, fd_idx: Sequence[int], h: float,
                base: Callable[[np.ndarray], np.ndarray], ref: np.ndarray | None) -> np.ndarray:
    """Nested central differences of ``base`` along coordinates ``fd_idx`` with step h."""
    depth = len(fd_idx)
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=depth)))  # (S, depth)
    offsets = np.zeros((signs.shape[0], pts.shape[1]))
    for col, idx in enumerate(fd_idx):
        offsets[:, idx] += signs[:, col] * h
    samples = pts[:, None, :] + offsets[None, :, :]  # (M, S, 2N)
    m, s, d = samples.shape
    if ref is not None:
        vals = _lifted_values(fld, samples, ref)
    else:
        vals = base(samples.reshape(m * s, d)).reshape(m, s)
    weights = np.prod(signs, axis=1) / (2.0 * h) ** depth
    return vals @ weights


def partial_batch(fld: ScalarField, pts: np.ndarray, multi_index: Sequence[int]) -> np.ndarray:
    """Mixed partial over a batch of points; shape (M,)."""
    pts = _check_pts(fld, pts)
    mi = tuple(sorted(int(i) for i in multi_index))
    order = len(mi)
    if order == 0:
        return fld.values(pts)
    if order > fld.max_order or order > MAX_DERIVATIVE_ORDER:
        raise DerivativeOrderError(
            f"order {order} exceeds max_order {fld.max_order} of field {fld.name!r}"
        )
    if any(i < 0 or i >= 2 * fld.dim_n for i in mi):
        raise DimensionMismatchError(f"coordinate index out of range in {mi}")

    if fld.analytic_partial is not None and order <= fld.analytic_order:
        return np.asarray(fld.analytic_partial(pts, mi), dtype=float).reshape(pts.shape[0])

    # Split off as many analytically-known derivatives as possible and finish
    # with finite differences in the remaining directions.
    n_analytic = min(fld.analytic_order, order) if fld.analytic_partial is not None else 0
    fd_idx = mi[: order - n_analytic]
    an_idx = mi[order - n_analytic:]
    depth = len(fd_idx)
    h = fld.step(depth)

    if n_analytic > 0:
        base = lambda q: np.asarray(fld.analytic_partial(q, an_idx), dtype=float).reshape(q.shape[0])
        ref = None
    else:
        base = fld.values
        ref = fld.values(pts) if fld.period is not None else None

    d1 = _fd_stencil(fld, pts, fd_idx, h, base, ref)
    if not fld.richardson:
        return d1
    d2 = _fd_stencil(fld, pts, fd_idx, 0.5 * h, base, ref)
    return (4.0 * d2 - d1) / 3.0


def partial(fld: ScalarField, z: PhasePoint, multi_index: Sequence[int]) -> float:
    """Mixed partial derivative at a single point; symmetric in the multi-index."""
    if z.dim_n != fld.dim_n:
        raise DimensionMismatchError(f"point has N={z.dim_n}, field expects N={fld.dim_n}")
    return float(partial_batch(fld, z.coords[None, :], multi_index)[0])


def derivative_tensor(fld: ScalarField, pts: np.ndarray, order: int) -> np.ndarray:
    """Full symmetric derivative tensor of the given order.

    Returns shape (M,) for order 0 and (M, 2N, ..., 2N) with ``order`` trailing
    axes otherwise.  Only distinct sorted multi-indices are computed; the rest
    is filled in by symmetry, so the result is exactly index-symmetric.
    """
    pts = _check_pts(fld, pts)
    m = pts.shape[0]
    dim = 2 * fld.dim_n
    if order == 0:
        return fld.values(pts)
    out = np.zeros((m,) + (dim,) * order)
    for mi in itertools.combinations_with_replacement(range(dim), order):
        vals = partial_batch(fld, pts, mi)
        for perm in set(itertools.permutations(mi)):
            out[(slice(None),) + perm] = vals
    return out


# ---------------------------------------------------------------------------
# Field constructors


def polynomial_field(p: Poly, name: str, max_order: int = MAX_DERIVATIVE_ORDER) -> ScalarField:
    """Field with exact partials of every order, backed by a Poly."""
    if p.nvars % 2 != 0:
        raise DimensionMismatchError("polynomial must live on an even-dimensional space")

    def _partial(pts: np.ndarray, mi: tuple[int, ...]) -> np.ndarray:
        return p.partial(mi)(pts)

    return ScalarField(
        name=name,
        dim_n=p.nvars // 2,
        evaluator=p,
        analytic_partial=_partial,
        analytic_order=MAX_DERIVATIVE_ORDER,
        max_order=max_order,
    )


def numeric_field(
    name: str,
    dim_n: int,
    evaluator: Callable[[np.ndarray], np.ndarray],
    gradient: Callable[[np.ndarray], np.ndarray] | None = None,
    period: float | None = None,
    max_order: int = MAX_DERIVATIVE_ORDER,
    fd_steps: Mapping[int, float] | None = None,
    fd_scale: float = 1.0,
    richardson: bool = False,
) -> ScalarField:
    """Field evaluated numerically; optional exact gradient (M, 2N) raises analytic_order to 1."""
    analytic_partial = None
    analytic_order = 0
    if gradient is not None:
        def analytic_partial(pts: np.ndarray, mi: tuple[int, ...]) -> np.ndarray:
            if len(mi) != 1:
                raise DerivativeOrderError("gradient source only supplies first derivatives")
            return np.asarray(gradient(pts))[:, mi[0]]
        analytic_order = 1
    return ScalarField(
        name=name,
        dim_n=dim_n,
        evaluator=evaluator,
        analytic_partial=analytic_partial,
        analytic_order=analytic_order,
        max_order=max_order,
        period=period,
        fd_steps=fd_steps,
        fd_scale=fd_scale,
        richardson=richardson,
    )


def scaled_field(fld: ScalarField, factor: float, name: str | None = None) -> ScalarField:
    """factor * field, preserving the derivative source (used for index lowering)."""
    ap = None
    if fld.analytic_partial is not None:
        ap = lambda pts, mi: factor * fld.analytic_partial(pts, mi)
    return ScalarField(
        name=name or f"{factor}*{fld.name}",
        dim_n=fld.dim_n,
        evaluator=lambda pts: factor * fld.values(pts),
        analytic_partial=ap,
        analytic_order=fld.analytic_order,
        max_order=fld.max_order,
        period=abs(factor) * fld.period if fld.period is not None else None,
        fd_steps=fld.fd_steps,
        fd_scale=fld.fd_scale,
        richardson=fld.richardson,
    )


def sum_field(fields: Sequence[ScalarField], coeffs: Sequence[float], name: str) -> ScalarField:
    """Linear combination of fields sharing a common dimension."""
    if not fields:
        raise ValueError("need at least one field")
    dim_n = fields[0].dim_n
    if any(f.dim_n != dim_n for f in fields):
        raise DimensionMismatchError("fields live on different spaces")
    coeffs = [float(c) for c in coeffs]

    def ev(pts: np.ndarray) -> np.ndarray:
        return sum(c * f.values(pts) for f, c in zip(fields, coeffs))

    analytic_order = min(f.analytic_order if f.analytic_partial else 0 for f in fields)
    ap = None
    if analytic_order > 0:
        def ap(pts, mi):
            return sum(c * f.analytic_partial(pts, mi) for f, c in zip(fields, coeffs))

    return ScalarField(
        name=name,
        dim_n=dim_n,
        evaluator=ev,
        analytic_partial=ap,
        analytic_order=analytic_order,
        max_order=min(f.max_order for f in fields),
        fd_steps=fields[0].fd_steps,
        fd_scale=fields[0].fd_scale,
        richardson=any(f.richardson for f in fields),
    )
