"""Normal form for commuting quadratic Hamiltonians.

Given N real symmetric 2N x 2N Hessians Q^j that pairwise commute in the
sense [J Q^j, J Q^k] = 0, with Q^1 positive definite, produce a symplectic
matrix S and a nonsingular N x N matrix ``a`` such that

    S^T Q^j S = sum_k a[j, k] Delta^k,

where Delta^k is the matrix of the k-th unit-frequency oscillator action,
with ones at positions (k, k) and (N+k, N+k) and zeros elsewhere.  The first
row of ``a`` holds the positive frequencies lambda_k of Q^1.

The construction: symplectically diagonalize Q^1 (Schur form of
Q1^{-1/2} J Q1^{-1/2}), cluster equal frequencies, then within each
degenerate frequency block jointly diagonalize the remaining Q^j through the
unitary subgroup that fixes Q^1 there.  The residual freedom in S (per-block
rotations commuting with every Q^j) cancels in S^T Q^j S, so only those
products are contract-stable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm, schur

from .fields import poisson_matrix

__all__ = [
    "QuadraticHamiltonianSet",
    "QuadraticNormalForm",
    "NormalFormError",
    "delta_matrix",
    "validate",
    "compute_normal_form",
    "random_symplectic",
    "random_commuting_set",
]


class NormalFormError(Exception):
    pass


def delta_matrix(k: int, dim_n: int) -> np.ndarray:
    """Quadratic-form matrix of the k-th oscillator action (0-based k)."""
    d = np.zeros((2 * dim_n, 2 * dim_n))
    d[k, k] = 1.0
    d[dim_n + k, dim_n + k] = 1.0
    return d


@dataclass(frozen=True)
class QuadraticHamiltonianSet:
    """Hessians of the commuting observables at their common fixed point."""

    hessians: tuple[np.ndarray, ...]
    fixed_point: np.ndarray | None = None

    def __post_init__(self):
        qs = tuple(np.asarray(q, dtype=float) for q in self.hessians)
        if not qs:
            raise NormalFormError("need at least one Hessian")
        dim = qs[0].shape[0]
        if dim % 2 != 0 or len(qs) != dim // 2:
            raise NormalFormError(
                f"need N Hessians of shape 2Nx2N, got {len(qs)} of shape {qs[0].shape}"
            )
        for q in qs:
            if q.shape != (dim, dim):
                raise NormalFormError("all Hessians must share the same shape")
        object.__setattr__(self, "hessians", qs)

    @property
    def dim_n(self) -> int:
        return self.hessians[0].shape[0] // 2


@dataclass(frozen=True)
class QuadraticNormalForm:
    S: np.ndarray
    a: np.ndarray
    lambdas: np.ndarray
    blocks: tuple[tuple[float, int], ...]       # (lambda_k, multiplicity n_k)
    negated_q1: bool
    residual_symplectic: float
    residual_normal_form: float


def validate(qset: QuadraticHamiltonianSet, tol: float = 1e-10) -> list[str]:
    """Check the preconditions; returns a list of violations (empty means ok)."""
    n = qset.dim_n
    j = poisson_matrix(n)
    violations: list[str] = []
    for idx, q in enumerate(qset.hessians):
        sym = np.max(np.abs(q - q.T))
        if sym > tol:
            violations.append(f"Q^{idx + 1} not symmetric (max asymmetry {sym:.3e})")
    q1 = qset.hessians[0]
    evals = np.linalg.eigvalsh(0.5 * (q1 + q1.T))
    if not (np.all(evals > tol) or np.all(evals < -tol)):
        violations.append(
            f"Q^1 not definite (eigenvalue range [{evals.min():.3e}, {evals.max():.3e}])"
        )
    scale = max(np.max(np.abs(q)) for q in qset.hessians)
    for ja in range(n):
        for jb in range(ja + 1, n):
            qa, qb = qset.hessians[ja], qset.hessians[jb]
            comm = j @ qa @ j @ qb - j @ qb @ j @ qa
            r = np.max(np.abs(comm))
            if r > tol * max(scale ** 2, 1.0):
                violations.append(f"[JQ^{ja + 1}, JQ^{jb + 1}] != 0 (residual {r:.3e})")
            anti = qa @ j @ qb + (qa @ j @ qb).T
            r2 = np.max(np.abs(anti))
            if r2 > tol * max(scale ** 2, 1.0):
                violations.append(f"Q^{ja + 1} J Q^{jb + 1} not antisymmetric (residual {r2:.3e})")
    stacked = np.stack([q.reshape(-1) for q in qset.hessians])
    rank = np.linalg.matrix_rank(stacked, tol=tol * max(scale, 1.0))
    if rank < n:
        violations.append(f"Hessians linearly dependent (rank {rank} < {n})")
    return violations


def _williamson(q1: np.ndarray, dim_n: int) -> tuple[np.ndarray, np.ndarray]:
    """Symplectic S0 and frequencies lam with S0^T Q1 S0 = diag(lam, lam)."""
    evals, evecs = np.linalg.eigh(q1)
    if np.any(evals <= 0):
        raise NormalFormError("eigenvalues of JQ^1 not purely imaginary: Q^1 not positive definite")
    b = evecs @ np.diag(1.0 / np.sqrt(evals)) @ evecs.T        # Q1^{-1/2}
    j = poisson_matrix(dim_n)
    psi = b @ j @ b                                            # antisymmetric
    t, o = schur(psi, output="real")

    lam_int = np.zeros(dim_n)
    for k in range(dim_n):
        tk = t[2 * k, 2 * k + 1]
        if tk < 0:
            # flip the 2x2 block orientation
            o[:, [2 * k, 2 * k + 1]] = o[:, [2 * k + 1, 2 * k]]
            tk = -tk
        if tk == 0:
            raise NormalFormError("degenerate Schur block: Q^1 numerically singular")
        lam_int[k] = 1.0 / tk

    scale = np.repeat(np.sqrt(lam_int), 2)
    s_int = b @ o * scale[None, :]                             # interleaved (q1,p1,q2,p2,...)
    perm = list(range(0, 2 * dim_n, 2)) + list(range(1, 2 * dim_n, 2))
    s0 = s_int[:, perm]
    return s0, lam_int


def _complex_block(qt: np.ndarray, q_idx: np.ndarray, p_idx: np.ndarray) -> np.ndarray:
    """Hermitian matrix representing a J-commuting symmetric block in complex form."""
    x = qt[np.ix_(q_idx, q_idx)]
    y = qt[np.ix_(q_idx, p_idx)]
    return x - 1j * y


def compute_normal_form(qset: QuadraticHamiltonianSet, tol: float = 1e-10,
                        cluster_rtol: float = 1e-8) -> QuadraticNormalForm:
    """Run the full construction; raises NormalFormError on precondition failure."""
    violations = validate(qset, tol=max(tol, 1e-12))
    if violations:
        raise NormalFormError("invalid input set: " + "; ".join(violations))

    n = qset.dim_n
    qs = [np.asarray(q, dtype=float).copy() for q in qset.hessians]
    negated = False
    if np.linalg.eigvalsh(qs[0])[0] < 0:
        qs[0] = -qs[0]     # stable motion with the opposite sign convention
        negated = True

    s, lam = _williamson(qs[0], n)

    # Cluster equal frequencies; refuse ambiguous spacing.
    order = np.argsort(-lam)
    lam_sorted = lam[order]
    ctol = cluster_rtol * lam_sorted[0]
    clusters: list[list[int]] = [[0]]
    for i in range(1, n):
        gap = lam_sorted[i - 1] - lam_sorted[i]
        if gap <= ctol:
            clusters[-1].append(i)
        elif gap < 10 * ctol:
            raise NormalFormError(
                f"frequency clustering ambiguous: gap {gap:.3e} within 10x tolerance {ctol:.3e}"
            )
        else:
            clusters.append([i])

    # Reorder columns (paired q/p) by descending frequency.
    col_perm = np.concatenate([order, order + n])
    s = s[:, col_perm]
    lam = lam_sorted

    qt = [s.T @ q @ s for q in qs]

    # Jointly diagonalize the remaining observables inside each frequency block.
    rng = np.random.default_rng(7)
    a = np.zeros((n, n))
    a[0] = lam
    blocks: list[tuple[float, int]] = []
    g = np.eye(2 * n)
    for cl in clusters:
        members = np.asarray(cl)
        blocks.append((float(lam[members[0]]), len(members)))
        q_idx, p_idx = members, members + n
        if len(members) == 1 or n == 1:
            for jj in range(1, n):
                a[jj, members[0]] = qt[jj][q_idx[0], q_idx[0]]
            continue
        herms = [_complex_block(qt[jj], q_idx, p_idx) for jj in range(1, n)]
        weights = rng.normal(size=len(herms))
        combo = sum(w * h for w, h in zip(weights, herms))
        combo = 0.5 * (combo + combo.conj().T)
        _, u = np.linalg.eigh(combo)
        scale = max(np.max(np.abs(h)) for h in herms) if herms else 1.0
        for jj, h in enumerate(herms, start=1):
            diag = u.conj().T @ h @ u
            off = np.max(np.abs(diag - np.diag(np.diag(diag))))
            if off > max(tol, 1e-12) * max(scale, 1.0) * 100:
                raise NormalFormError(
                    f"joint diagonalization residual {off:.3e} in a degenerate block: "
                    "input matrices do not commute to working precision"
                )
            a[jj, members] = np.real(np.diag(diag))
        ur, ui = np.real(u), np.imag(u)
        g[np.ix_(q_idx, q_idx)] = ur
        g[np.ix_(q_idx, p_idx)] = -ui
        g[np.ix_(p_idx, q_idx)] = ui
        g[np.ix_(p_idx, p_idx)] = ur

    s = s @ g

    # Deterministic ordering inside blocks: descending a_{2k}, then a_{3k}, ...
    keys = np.zeros((n, n))
    keys[0] = -np.round(lam / max(ctol, 1e-300))   # frequency first (descending)
    keys[1:] = -a[1:]
    perm = np.lexsort(keys[::-1])
    s = s[:, np.concatenate([perm, perm + n])]
    a = a[:, perm]
    lam = lam[perm]

    j = poisson_matrix(n)
    omega = -j
    res_symp = float(np.max(np.abs(s.T @ omega @ s - omega)))
    res_nf = 0.0
    for jj, q in enumerate(qs):
        target = sum(a[jj, k] * delta_matrix(k, n) for k in range(n))
        res_nf = max(res_nf, float(np.max(np.abs(s.T @ q @ s - target))))

    return QuadraticNormalForm(
        S=s,
        a=a,
        lambdas=lam,
        blocks=tuple(blocks),
        negated_q1=negated,
        residual_symplectic=res_symp,
        residual_normal_form=res_nf,
    )


# ---------------------------------------------------------------------------
# Constructions used as oracles in tests and by the CLI demo path


def random_symplectic(dim_n: int, rng: np.random.Generator, scale: float = 0.7) -> np.ndarray:
    """exp(J Sym) with a random symmetric generator; exactly symplectic up to roundoff."""
    sym = rng.normal(size=(2 * dim_n, 2 * dim_n))
    sym = 0.5 * scale * (sym + sym.T)
    return expm(poisson_matrix(dim_n) @ sym)


def random_commuting_set(
    dim_n: int,
    rng: np.random.Generator,
    min_gap: float = 0.15,
) -> tuple[QuadraticHamiltonianSet, np.ndarray, np.ndarray]:
    """Build Q^j = (T^{-1})^T (sum_k c[j,k] Delta^k) T^{-1} with known coefficients.

    Returns (set, c, T).  The first row of c is positive with well-separated
    values so that frequency clustering is unambiguous.
    """
    while True:
        c = rng.uniform(-1.5, 1.5, size=(dim_n, dim_n))
        c[0] = np.sort(rng.uniform(0.4, 2.5, size=dim_n))[::-1]
        if dim_n > 1 and np.min(np.abs(np.diff(c[0]))) < min_gap:
            continue
        if abs(np.linalg.det(c)) > 0.05:
            break
    t = random_symplectic(dim_n, rng)
    t_inv = np.linalg.inv(t)
    qs = []
    for jj in range(dim_n):
        d = sum(c[jj, k] * delta_matrix(k, dim_n) for k in range(dim_n))
        q = t_inv.T @ d @ t_inv
        qs.append(0.5 * (q + q.T))
    return QuadraticHamiltonianSet(tuple(qs)), c, t
