"""Torus quantization through second order in hbar.

The eigenvalue of observable j on the quantized torus A = (n + gamma/4) hbar
is f_j(A) plus hbar^2 times the torus average of four terms: an optional
symbol correction, the action-angle loop contraction weighted by -w_jk/48,
the second bracket of the actions weighted by +w_jkl/16, and the three-action
chain weighted by -w_jklm/24.  The frequency factors depend on the actions
only and are pulled out of the average.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .chart import ChartRegionError, TorusChart, quantized_actions
from .diagrams import Diagram, DerivativeCache, chain, eval_diagram_batch
from .fields import ScalarField, poisson_matrix
from .poly import Poly

__all__ = [
    "QuantizationRequest",
    "EigenRow",
    "EigenvalueTable",
    "torus_average",
    "correction_terms",
    "all_corrections",
    "second_order_correction",
    "ebk_eigenvalues",
    "chart_coordinate_partial",
    "hard_term_batch",
    "AngleShiftedChart",
    "angle_origin_invariance_test",
    "connection_coefficients",
    "gamma_raised",
    "hard_diagram_via_gamma",
    "reduce_1d",
]


# ---------------------------------------------------------------------------
# Torus averages


def _phi_grid(grid: Sequence[int]) -> np.ndarray:
    """Uniform angle grid offset by half a cell (avoids turning-point phases)."""
    axes = [(np.arange(g) + 0.5) * (2.0 * np.pi / g) for g in grid]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _grid_points(chart, a: np.ndarray, grid: Sequence[int]) -> np.ndarray:
    phis = _phi_grid(grid)
    acts = np.broadcast_to(np.asarray(a, dtype=float), phis.shape)
    return chart.torus_point(phis, acts)


def _as_callable(integrand) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(integrand, Diagram):
        return lambda pts: eval_diagram_batch(integrand, pts)
    if isinstance(integrand, ScalarField):
        return integrand.values
    return integrand


def torus_average(integrand, chart, a: np.ndarray, grid: Sequence[int] = (16, 16),
                  rtol: float = 1e-6, atol: float = 1e-9, max_doublings: int = 4) -> float:
    """Average of a phase-space function over the torus with actions ``a``.

    ``integrand`` may be a ScalarField, a Diagram, or a callable on (M, 2N)
    point arrays.  The grid doubles until the average changes by less than
    ``rtol`` relative (``atol`` absolute floors the test for vanishing
    averages, which otherwise sit at the derivative noise level).
    """
    fn = _as_callable(integrand)
    grid = tuple(int(g) for g in grid)
    prev = float(np.mean(fn(_grid_points(chart, a, grid))))
    for _ in range(max_doublings):
        grid = tuple(2 * g for g in grid)
        cur = float(np.mean(fn(_grid_points(chart, a, grid))))
        if abs(cur - prev) <= max(rtol * abs(cur), atol):
            return cur
        prev = cur
    raise RuntimeError(f"torus average did not converge to rtol={rtol}")


# ---------------------------------------------------------------------------
# The hbar^2 correction


def hard_term_batch(chart, k: int, pts: np.ndarray, cache: DerivativeCache | None = None) -> np.ndarray:
    """Loop contraction sum_mu D^mu -> A^k => D_mu (k is a 0-based action index)."""
    if cache is None:
        cache = DerivativeCache(pts)
    a_k = chart.action_fields()[k]
    total = np.zeros(np.atleast_2d(pts).shape[0])
    for up, low in zip(chart.raised_fields(), chart.lowered_fields()):
        d = Diagram((up, a_k, low), ((0, 1, 1), (1, 2, 2)))
        total = total + eval_diagram_batch(d, pts, cache)
    return total


def correction_terms(chart, pts: np.ndarray, h2_fields: Sequence[ScalarField] | None = None,
                     cache: DerivativeCache | None = None) -> dict:
    """Pointwise values of every angle-dependent piece of the correction."""
    if cache is None:
        cache = DerivativeCache(pts)
    n = chart.n_actions
    acts = chart.action_fields()
    m = np.atleast_2d(pts).shape[0]
    out = {
        "hard": np.zeros((n, m)),
        "bracket2": np.zeros((n, n, m)),
        "chain3": np.zeros((n, n, n, m)),
        "h2": np.zeros((len(h2_fields) if h2_fields else 0, m)),
    }
    for k in range(n):
        out["hard"][k] = hard_term_batch(chart, k, pts, cache)
    for k in range(n):
        for l in range(k, n):
            v = eval_diagram_batch(Diagram((acts[k], acts[l]), ((0, 1, 2),)), pts, cache)
            out["bracket2"][k, l] = v
            out["bracket2"][l, k] = v
    for k in range(n):
        for l in range(n):
            for mm in range(k, n):
                v = eval_diagram_batch(chain(acts[k], acts[l], acts[mm]), pts, cache)
                out["chain3"][k, l, mm] = v
                out["chain3"][mm, l, k] = v
    if h2_fields:
        for j, f in enumerate(h2_fields):
            out["h2"][j] = f.values(pts)
    return out


def _assemble_correction(terms: dict, w, w3, w4, j: int, h2_index: int | None) -> np.ndarray:
    val = (
        -np.einsum("k,km->m", w[j], terms["hard"]) / 48.0
        + np.einsum("kl,klm->m", w3[j], terms["bracket2"]) / 16.0
        - np.einsum("kls,klsm->m", w4[j], terms["chain3"]) / 24.0
    )
    if h2_index is not None and terms["h2"].shape[0]:
        val = val + terms["h2"][h2_index]
    return val


def all_corrections(chart, a: np.ndarray, grid: Sequence[int] = (16, 16),
                    h2_fields: Sequence[ScalarField] | None = None,
                    rtol: float = 1e-6, atol: float = 3e-7,
                    max_doublings: int = 4) -> np.ndarray:
    """Torus-averaged hbar^2 coefficients for every observable at actions ``a``.

    Returns shape (N,); multiply by hbar^2 for the eigenvalue shifts.  All
    observables share one set of term averages per grid level.  ``atol``
    floors the doubling test: corrections that vanish identically hover at
    the finite-difference noise level and never shrink relatively.
    """
    a = np.asarray(a, dtype=float)
    n = chart.n_actions
    w, w3, w4 = chart.frequency_data(a)

    def averaged(g: Sequence[int]) -> np.ndarray:
        pts = _grid_points(chart, a, g)
        terms = correction_terms(chart, pts, h2_fields)
        out = np.zeros(n)
        for j in range(n):
            h2_index = j if (h2_fields and j < len(h2_fields)) else None
            out[j] = float(np.mean(_assemble_correction(terms, w, w3, w4, j, h2_index)))
        return out

    grid = tuple(int(g) for g in grid)
    prev = averaged(grid)
    for _ in range(max_doublings):
        grid = tuple(2 * g for g in grid)
        cur = averaged(grid)
        if np.all(np.abs(cur - prev) <= np.maximum(rtol * np.abs(cur), atol)):
            return cur
        prev = cur
    raise RuntimeError("second-order correction average did not converge")


def second_order_correction(chart, a: np.ndarray, j: int, grid: Sequence[int] = (16, 16),
                            h2_fields: Sequence[ScalarField] | None = None,
                            rtol: float = 1e-6, atol: float = 3e-7,
                            max_doublings: int = 4) -> float:
    """Torus-averaged hbar^2 coefficient for observable ``j`` (0-based) at actions ``a``."""
    return float(all_corrections(chart, a, grid=grid, h2_fields=h2_fields,
                                 rtol=rtol, atol=atol, max_doublings=max_doublings)[j])


# ---------------------------------------------------------------------------
# Eigenvalue tables


@dataclass(frozen=True)
class QuantizationRequest:
    chart: TorusChart
    hbar: float
    quantum_numbers: tuple[tuple[int, int], ...]
    averaging_grid: tuple[int, int] = (16, 16)
    include_h2: bool = True
    h2_fields: tuple[ScalarField, ...] = ()

    def __post_init__(self):
        if self.hbar <= 0:
            raise ValueError("hbar must be positive")
        for n_r, m in self.quantum_numbers:
            if n_r < 0 or m == 0:
                raise ValueError(f"invalid quantum numbers ({n_r}, {m}): need n_r >= 0, m != 0")


@dataclass
class EigenRow:
    n_r: int
    m: int
    a_r: float
    l: float
    e0_h: float
    e0_l: float
    corr_h: float
    corr_l: float
    e_h: float
    e_l: float
    oracle: float | None = None
    error: float | None = None
    flagged: str = ""


@dataclass
class EigenvalueTable:
    rows: list[EigenRow] = field(default_factory=list)

    def attach_oracle(self, values: dict[tuple[int, int], float]) -> None:
        for row in self.rows:
            v = values.get((row.n_r, row.m))
            if v is not None:
                row.oracle = v
                row.error = row.e_h - v

    def row(self, n_r: int, m: int) -> EigenRow:
        for r in self.rows:
            if r.n_r == n_r and r.m == m:
                return r
        raise KeyError((n_r, m))


def ebk_eigenvalues(req: QuantizationRequest) -> EigenvalueTable:
    """Quantized eigenvalues of both observables, with the hbar^2 shift if requested."""
    table = EigenvalueTable()
    charts = {+1: req.chart.with_sector(+1), -1: req.chart.with_sector(-1)}
    for n_r, m in req.quantum_numbers:
        a_r, l = quantized_actions(n_r, m, req.hbar)
        ch = charts[+1 if m > 0 else -1]
        row = EigenRow(n_r=n_r, m=m, a_r=a_r, l=l,
                       e0_h=np.nan, e0_l=l, corr_h=0.0, corr_l=0.0,
                       e_h=np.nan, e_l=l)
        try:
            row.e0_h = float(ch.energy_from_actions(np.asarray([a_r]), np.asarray([l]))[0])
            if req.include_h2:
                corr = all_corrections(ch, np.array([a_r, l]), grid=req.averaging_grid,
                                       h2_fields=req.h2_fields or None)
                row.corr_h = req.hbar ** 2 * corr[0]
                row.corr_l = req.hbar ** 2 * corr[1]
            row.e_h = row.e0_h + row.corr_h
            row.e_l = row.e0_l + row.corr_l
        except ChartRegionError as exc:
            row.flagged = f"outside region: {exc}"
        table.rows.append(row)
    return table


# ---------------------------------------------------------------------------
# Derivatives along chart coordinates


def chart_coordinate_partial(chart, fn: Callable[[np.ndarray], np.ndarray], pts: np.ndarray,
                             coord: int, h: float = 0.03, richardson: bool = True) -> np.ndarray:
    """d(fn)/d(D^coord) at the given points, via the inverse chart.

    ``coord`` indexes the collective coordinates (angles first, then actions).
    The default wide step plus Richardson extrapolation keeps the quotient
    stable when ``fn`` itself carries finite-difference noise (diagram values
    built from chart derivatives).
    """
    d0 = chart.forward(pts)
    n = chart.n_actions

    def central(step: float) -> np.ndarray:
        dp = d0.copy()
        dm = d0.copy()
        dp[:, coord] += step
        dm[:, coord] -= step
        zp = chart.torus_point(dp[:, :n], dp[:, n:])
        zm = chart.torus_point(dm[:, :n], dm[:, n:])
        return (fn(zp) - fn(zm)) / (2.0 * step)

    if not richardson:
        return central(h)
    return (4.0 * central(0.5 * h) - central(h)) / 3.0


# ---------------------------------------------------------------------------
# Angle-origin shifts


class AngleShiftedChart:
    """Chart with angles displaced by the action gradient of a polynomial F(A).

    The new angle origin is phi' = phi + dF/dA; actions are unchanged.  Valid
    chart for the quantizer: the averaged correction must not move.
    """

    def __init__(self, base, f_poly: Poly):
        if f_poly.nvars != base.n_actions:
            raise ValueError("F must be a polynomial in the actions")
        self.base = base
        self.n_actions = base.n_actions
        self.f_poly = f_poly
        self._grads = [f_poly.diff(i) for i in range(base.n_actions)]
        self.omega0 = base.omega0
        self._build_fields()

    def _grad_f(self, acts: np.ndarray) -> np.ndarray:
        acts = np.atleast_2d(acts)
        return np.stack([g(acts) for g in self._grads], axis=1)

    def forward(self, pts: np.ndarray) -> np.ndarray:
        d = self.base.forward(pts)
        n = self.n_actions
        shifted = d.copy()
        shifted[:, :n] = np.mod(d[:, :n] + self._grad_f(d[:, n:]), 2.0 * np.pi)
        return shifted

    def torus_point(self, phis: np.ndarray, actions: np.ndarray) -> np.ndarray:
        phis = np.atleast_2d(np.asarray(phis, dtype=float))
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        return self.base.torus_point(phis - self._grad_f(actions), actions)

    def energy_from_actions(self, *args, **kwargs):
        return self.base.energy_from_actions(*args, **kwargs)

    def frequency_data(self, a: np.ndarray):
        return self.base.frequency_data(a)

    def _build_fields(self) -> None:
        base = self.base

        def angle_eval(idx: int):
            return lambda pts: self.forward(pts)[:, idx]

        shifted_angles = tuple(
            ScalarField(
                name=f"{f.name}+shift",
                dim_n=f.dim_n,
                evaluator=angle_eval(i),
                period=2.0 * np.pi,
                max_order=f.max_order,
                fd_steps=f.fd_steps,
                fd_scale=f.fd_scale,
                richardson=f.richardson,
            )
            for i, f in enumerate(base.angle_fields())
        )
        acts = base.action_fields()
        self._angles = shifted_angles
        self._raised = shifted_angles + tuple(acts)
        lowered_actions = base.lowered_fields()[: self.n_actions]
        self._lowered = tuple(lowered_actions) + shifted_angles

    def action_fields(self):
        return self.base.action_fields()

    def angle_fields(self):
        return self._angles

    def raised_fields(self):
        return self._raised

    def lowered_fields(self):
        return self._lowered


def angle_origin_invariance_test(chart, a: np.ndarray, f_coeffs: dict[tuple[int, ...], float],
                                 tol: float = 1e-5, grid: Sequence[int] = (16, 16),
                                 j: int = 0) -> float:
    """|averaged correction with shifted angle origin - unshifted|; must be < tol.

    ``f_coeffs`` are monomial coefficients of F in the actions, e.g.
    {(2, 0): 0.3, (1, 1): 0.2} for F = 0.3 A_r^2 + 0.2 A_r L.
    """
    base_val = second_order_correction(chart, a, j, grid=grid)
    shifted = AngleShiftedChart(chart, Poly(chart.n_actions, f_coeffs))
    shifted_val = second_order_correction(shifted, a, j, grid=grid)
    return abs(shifted_val - base_val)


# ---------------------------------------------------------------------------
# Connection coefficients


def _inverse_chart_derivatives(chart, d0: np.ndarray, h1: float, h2: float,
                               h3: float = 0.0, phi_coord: int | None = None):
    """FD derivatives of the inverse map z(D) around chart coordinates ``d0``.

    Returns (dz1, dz2) and, when ``phi_coord`` is given, also the mixed third
    derivatives d^3 z / dD^a dD^b dD^{phi_coord}.  Every stencil point goes
    through one batched inverse-map call.
    """
    dim = d0.size
    n = chart.n_actions
    coords: list[np.ndarray] = []

    for alpha in range(dim):
        for s in (+1.0, -1.0):
            d = d0.copy()
            d[alpha] += s * h1
            coords.append(d)
    pairs = [(al, be) for al in range(dim) for be in range(al, dim)]
    pair_start = len(coords)
    for al, be in pairs:
        for s1 in (+1.0, -1.0):
            for s2 in (+1.0, -1.0):
                d = d0.copy()
                d[al] += s1 * h2
                d[be] += s2 * h2
                coords.append(d)
    triple_start = len(coords)
    if phi_coord is not None:
        for al, be in pairs:
            for s1 in (+1.0, -1.0):
                for s2 in (+1.0, -1.0):
                    for s3 in (+1.0, -1.0):
                        d = d0.copy()
                        d[al] += s1 * h3
                        d[be] += s2 * h3
                        d[phi_coord] += s3 * h3
                        coords.append(d)

    arr = np.asarray(coords)
    zs = chart.torus_point(arr[:, :n], arr[:, n:])

    dz1 = np.zeros((dim, dim))
    for alpha in range(dim):
        dz1[:, alpha] = (zs[2 * alpha] - zs[2 * alpha + 1]) / (2.0 * h1)

    dz2 = np.zeros((dim, dim, dim))
    for idx, (al, be) in enumerate(pairs):
        base = pair_start + 4 * idx
        val = (zs[base] - zs[base + 1] - zs[base + 2] + zs[base + 3]) / (4.0 * h2 * h2)
        dz2[:, al, be] = val
        dz2[:, be, al] = val

    if phi_coord is None:
        return dz1, dz2

    dz3 = np.zeros((dim, dim, dim))      # d^3 z^nu / dD^a dD^b dphi
    for idx, (al, be) in enumerate(pairs):
        base = triple_start + 8 * idx
        s = zs[base] - zs[base + 1] - zs[base + 2] + zs[base + 3] \
            - zs[base + 4] + zs[base + 5] + zs[base + 6] - zs[base + 7]
        val = s / (8.0 * h3 ** 3)
        dz3[:, al, be] = val
        dz3[:, be, al] = val
    return dz1, dz2, dz3


def connection_coefficients(chart, z: np.ndarray, h1: float = 5e-5, h2: float = 6e-4) -> np.ndarray:
    """Fully symmetric Gamma_{mu alpha beta} = -(dz_nu/dD^mu)(d^2 z^nu / dD^alpha dD^beta).

    Computed by central differences on the inverse chart around the chart
    image of ``z``; the flat connection vanishes in the original coordinates
    and takes these values in collective action-angle coordinates.  The
    overall sign is fixed so that the three-node chain of collective
    coordinates equals the fully raised tensor (the index conventions here
    give dD^mu/dz^nu = -J^{mu sigma} dz_nu/dD^sigma, as one checks on the
    identity chart); the loop-term cross-check is quadratic in Gamma and
    cannot see this sign.
    """
    z = np.asarray(z, dtype=float).reshape(1, -1)
    d0 = chart.forward(z)[0]
    dz1, dz2 = _inverse_chart_derivatives(chart, d0, h1, h2)
    j_low = -poisson_matrix(z.shape[1] // 2)
    low1 = j_low @ dz1                  # dz_nu / dD^mu
    return -np.einsum("nm,nab->mab", low1, dz2)


def gamma_raised(gamma_lower: np.ndarray) -> np.ndarray:
    dim = gamma_lower.shape[0]
    j_up = poisson_matrix(dim // 2)
    return np.einsum("ma,nb,sc,abc->mns", j_up, j_up, j_up, gamma_lower)


def hard_diagram_via_gamma(chart, z: np.ndarray, k: int, h1: float = 5e-5,
                           h2: float = 6e-4, h3: float = 3e-3) -> float:
    """Loop term for action index k from the connection-coefficient route.

    Evaluates Gamma^{mu nu sigma} d(Gamma_{mu nu sigma})/d(phi^k), with the
    angle derivative expanded by the product rule into second and mixed third
    derivatives of the inverse map: an independent finite-difference pipeline
    cross-checking the diagram-engine evaluation.
    """
    z = np.asarray(z, dtype=float).reshape(1, -1)
    d0 = chart.forward(z)[0]
    dz1, dz2, dz3 = _inverse_chart_derivatives(chart, d0, h1, h2, h3, phi_coord=k)

    # d(dz1)/dphi_k is the second-derivative tensor sliced along the angle.
    dz1_phi = dz2[:, :, k]
    j_low = -poisson_matrix(z.shape[1] // 2)
    low1 = j_low @ dz1
    low1_phi = j_low @ dz1_phi

    gamma0 = -np.einsum("nm,nab->mab", low1, dz2)
    dgamma = -(np.einsum("nm,nab->mab", low1_phi, dz2) + np.einsum("nm,nab->mab", low1, dz3))
    return float(np.einsum("mns,mns->", gamma_raised(gamma0), dgamma))


# ---------------------------------------------------------------------------
# One-dimensional reduction


@dataclass
class OneDRow:
    n: int
    a: float
    e0: float
    corr_pipeline: float
    corr_closed: float
    e_pipeline: float
    e_closed: float
    oracle: float | None = None


def reduce_1d(chart1d, hbar: float, n_range: Sequence[int], grid: int = 64,
              h_a: float = 1e-4) -> list[OneDRow]:
    """Run the N=1 pipeline and the collapsed closed form side by side.

    The closed form for the hbar^2 coefficient is (1/48) d/dA of
    (1/omega) <{H, H}_2>_phi, with the average taken over the orbit.
    """
    h_field = chart1d.h_field
    bracket = Diagram((h_field, h_field), ((0, 1, 2),))

    def g_of_a(a_val: float) -> float:
        avg = torus_average(bracket, chart1d, np.array([a_val]), grid=(grid,))
        return avg / float(chart1d.omega_of_action(np.array([a_val]))[0])

    rows: list[OneDRow] = []
    for n in n_range:
        a = (n + 0.5) * hbar
        e0 = float(chart1d.energy_from_actions(np.array([a]))[0])
        corr_p = hbar ** 2 * second_order_correction(chart1d, np.array([a]), 0, grid=(grid,))
        step = min(h_a * max(1.0, a), 0.25 * a)
        corr_c = hbar ** 2 * (g_of_a(a + step) - g_of_a(a - step)) / (2.0 * step) / 48.0
        rows.append(OneDRow(n=n, a=a, e0=e0,
                            corr_pipeline=corr_p, corr_closed=corr_c,
                            e_pipeline=e0 + corr_p, e_closed=e0 + corr_c))
    return rows
