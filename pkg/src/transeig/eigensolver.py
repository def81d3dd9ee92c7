"""Shift-free Arnoldi solver for the smallest transmission eigenvalues.

The pencil K x = lambda M x is attacked through the real operator
v -> K^{-1} (M v), whose dominant eigenvalues mu = 1/lambda correspond to
the wanted smallest-magnitude lambda.  K is factored once (banded
Cholesky); the Arnoldi basis is built with two-pass modified Gram-Schmidt
in plain real arithmetic from the fixed all-ones start vector, so repeated
runs are bit-identical.  Ritz pairs are accepted once their true relative
residual ||K x - lambda M x||_2 / ||x||_2 drops below the tolerance; if
the smallest ``nev`` values have not all converged the iteration restarts
from a combination of the current best Ritz vectors (a tiny seeded
perturbation is mixed in, which lets repeated eigenvalues surface: a
single Krylov space only ever carries one copy of a multiple eigenvalue,
so the second copy has to grow from the injected component across
restarts).

The dual problem K y = lambda M^T y runs through the identical pipeline
and supplies the left eigenvectors needed by the two-grid correction.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .assembly import BlockPencil
from .errors import ConvergenceError, PairingError
from .linalg import cholesky, hessenberg_eigenvalues

__all__ = [
    "SolverOptions",
    "EigenPair",
    "DualPair",
    "SpectrumResult",
    "estimate_clusters",
    "solve_primal",
    "solve_dual",
]

# relative distance below which primal and dual eigenvalues are considered
# the same eigenvalue
PAIRING_TOL = 1e-6


@dataclass
class SolverOptions:
    """Knobs of the Arnoldi iteration.

    tol is the relative residual target per eigenpair.  krylov_dim, when
    given, must be at least 3*nev + 20 (the default is that bound, but no
    less than 80); it is always capped at the system size.  deterministic
    documents the reduction mode: this implementation is serial and
    bit-reproducible, and the flag records that callers rely on it (a
    parallel build would have to keep deterministic reductions unless it
    is set to False).
    """

    tol: float = 1e-9
    krylov_dim: int | None = None
    max_restarts: int = 10
    cluster_tol: float = 1e-6
    deterministic: bool = True
    seed: int = 20240901


@dataclass(eq=False)
class EigenPair:
    """A converged primal eigenpair; x is A-normalized (x^H K x = 1)."""

    lam: complex
    k: complex
    x: np.ndarray
    residual: float


@dataclass(eq=False)
class DualPair:
    """A converged dual (left) eigenpair in raw transpose convention.

    y_raw solves K y = lambda M^T y and is A-normalized.  primal_index
    points at the matching primal pair when the pairing was requested.
    """

    lam: complex
    y_raw: np.ndarray
    residual: float
    primal_index: int | None = None


@dataclass(eq=False)
class SpectrumResult:
    """Sorted converged spectrum plus cluster bookkeeping."""

    pairs: list
    clusters: list
    restarts: int = 0
    wall_time_s: float = 0.0

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([p.lam for p in self.pairs])

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.array([p.k for p in self.pairs])


def estimate_clusters(values, cluster_tol: float = 1e-6):
    """Group eigenvalues into clusters by transitive relative closeness.

    Two values belong together when |a - b| <= cluster_tol * max(|a|,|b|);
    the relation is closed transitively.  Returns lists of indices into
    ``values``, each sorted, ordered by first member.
    """
    vals = [complex(v) for v in values]
    n = len(vals)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(n):
        for j in range(i + 1, n):
            scale = max(abs(vals[i]), abs(vals[j]))
            if abs(vals[i] - vals[j]) <= cluster_tol * scale:
                ra, rb = find(i), find(j)
                if ra != rb:
                    parent[rb] = ra
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return sorted((sorted(g) for g in groups.values()), key=lambda g: g[0])


def _orthogonal_direction(basis: np.ndarray, rng: np.random.Generator):
    """A fresh unit vector orthogonal to the given orthonormal columns."""
    n = basis.shape[0]
    for _ in range(5):
        cand = rng.standard_normal(n)
        for _ in range(2):
            cand -= basis @ (basis.T @ cand)
        norm = np.linalg.norm(cand)
        if norm > 1e-8 * np.sqrt(n):
            return cand / norm
    return None


def _arnoldi(apply_op, start: np.ndarray, m: int, rng: np.random.Generator):
    """Build an m-step Arnoldi decomposition with two-pass MGS.

    On breakdown (invariant subspace hit) the basis is continued with a
    seeded random orthogonal direction, leaving a zero subdiagonal in H;
    if the whole space is exhausted the decomposition is truncated.
    """
    n = start.shape[0]
    V = np.zeros((n, m + 1))
    H = np.zeros((m + 1, m))
    V[:, 0] = start / np.linalg.norm(start)
    for j in range(m):
        w = apply_op(V[:, j])
        norm_before = np.linalg.norm(w)
        for _ in range(2):
            for i in range(j + 1):
                c = V[:, i] @ w
                H[i, j] += c
                w -= c * V[:, i]
        hnext = np.linalg.norm(w)
        if hnext > 1e-10 * max(norm_before, 1e-300):
            H[j + 1, j] = hnext
            V[:, j + 1] = w / hnext
        else:
            fresh = _orthogonal_direction(V[:, : j + 1], rng)
            if fresh is None:
                return V, H, j + 1
            H[j + 1, j] = 0.0
            V[:, j + 1] = fresh
    return V, H, m


def _ritz_candidates(V, H, meff, K, m_side, nev, tol):
    """Ritz pairs sorted by |lambda|, with true residuals for the head.

    Only the first nev + 8 candidates get the (matvec-priced) residual
    check; later ones cannot enter the returned prefix.
    """
    heig = hessenberg_eigenvalues(H[:meff, :meff], compute_vectors=True)
    mu = heig.values
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.where(mu == 0, np.inf, 1.0 / mu)
    finite = np.isfinite(lam)
    order = [i for i in np.argsort(np.abs(lam), kind="stable") if finite[i]]
    basis = V[:, :meff]
    out = []
    for idx in order[: nev + 8]:
        x = basis @ heig.vectors[:, idx]
        x /= np.linalg.norm(x)
        res = np.linalg.norm(K @ x - lam[idx] * (m_side @ x))
        out.append((complex(lam[idx]), x, float(res)))
    return out


def _restart_vector(cands, nev, rng, n):
    """Real restart direction from the current best Ritz vectors."""
    v = np.zeros(n)
    for lam, x, res in cands[:nev]:
        v += x.real + x.imag
    noise = rng.standard_normal(n)
    noise /= np.linalg.norm(noise)
    norm = np.linalg.norm(v)
    if norm <= 1e-12:
        return noise
    return v / norm + 1e-6 * noise


def _conjugate_order(pairs):
    """Within a conjugate pair, put the positive-imaginary member first."""
    for i in range(len(pairs) - 1):
        a, b = pairs[i], pairs[i + 1]
        scale = max(abs(a.lam), abs(b.lam), 1e-300)
        if (
            abs(abs(a.lam) - abs(b.lam)) <= 1e-10 * scale
            and abs(b.lam - np.conj(a.lam)) <= 1e-8 * scale
            and a.lam.imag < b.lam.imag
        ):
            pairs[i], pairs[i + 1] = b, a
    return pairs


def _solve(pencil: BlockPencil, nev: int, opts: SolverOptions, transpose: bool):
    t0 = time.perf_counter()
    n = pencil.K.shape[0]
    if nev < 1:
        raise ValueError(f"nev must be >= 1, got {nev}")
    if nev > n:
        raise ValueError(f"nev={nev} exceeds the system size {n}")
    floor = 3 * nev + 20
    if opts.krylov_dim is not None:
        if opts.krylov_dim < floor:
            raise ValueError(
                f"krylov_dim must be >= 3*nev + 20 = {floor}, got {opts.krylov_dim}"
            )
        m = min(opts.krylov_dim, n)
    else:
        m = min(max(80, floor), n)

    factor = cholesky(pencil.K)
    K = pencil.K.tocsr()
    m_side = (pencil.M.T if transpose else pencil.M).tocsr()

    def apply_op(v):
        return factor.solve(m_side @ v)

    rng = np.random.default_rng(opts.seed)
    start = np.ones(n)
    start /= np.sqrt(start @ (K @ start))

    selected = None
    last_converged = []
    restarts = 0
    for attempt in range(opts.max_restarts + 1):
        V, H, meff = _arnoldi(apply_op, start, m, rng)
        cands = _ritz_candidates(V, H, meff, K, m_side, nev, opts.tol)
        last_converged = [c for c in cands if c[2] <= opts.tol][:nev]
        if len(cands) >= nev and all(c[2] <= opts.tol for c in cands[:nev]):
            if len(cands) > nev:
                # a conjugate pair split by the nev cut: report the
                # positive-imaginary member
                last, nxt = cands[nev - 1], cands[nev]
                scale = max(abs(last[0]), abs(nxt[0]), 1e-300)
                if (
                    last[0].imag < 0
                    and abs(nxt[0] - last[0].conjugate()) <= 1e-8 * scale
                    and nxt[2] <= opts.tol
                ):
                    cands[nev - 1] = nxt
            selected = cands[:nev]
            restarts = attempt
            break
        if attempt < opts.max_restarts:
            start = _restart_vector(cands, nev, rng, n)
    if selected is None:
        partial = _finalize(last_converged, K, m_side, opts, transpose,
                            opts.max_restarts, t0)
        raise ConvergenceError(
            f"only {len(last_converged)} of {nev} pairs converged within "
            f"{opts.max_restarts} restarts (tol {opts.tol:g})",
            partial=partial,
        )
    return _finalize(selected, K, m_side, opts, transpose, restarts, t0)


def _finalize(selected, K, m_side, opts, transpose, restarts, t0):
    pairs = []
    for lam, x, _ in selected:
        anorm = np.sqrt(np.real(np.conj(x) @ (K @ x)))
        x = x / anorm
        top = int(np.argmax(np.abs(x)))
        phase = x[top] / abs(x[top])
        x = x * np.conj(phase)
        res = float(
            np.linalg.norm(K @ x - lam * (m_side @ x)) / np.linalg.norm(x)
        )
        if transpose:
            pairs.append(DualPair(lam=lam, y_raw=x, residual=res))
        else:
            pairs.append(
                EigenPair(lam=lam, k=complex(np.sqrt(complex(lam))), x=x, residual=res)
            )
    pairs.sort(key=lambda p: abs(p.lam))
    _conjugate_order(pairs)
    clusters = estimate_clusters([p.lam for p in pairs], opts.cluster_tol)
    return SpectrumResult(
        pairs=pairs,
        clusters=clusters,
        restarts=restarts,
        wall_time_s=time.perf_counter() - t0,
    )


def solve_primal(pencil: BlockPencil, nev: int, opts: SolverOptions | None = None) -> SpectrumResult:
    """Smallest ``nev`` eigenpairs of K x = lambda M x.

    Pairs come back sorted by |lambda| (positive-imaginary first within a
    conjugate pair), A-normalized, with the phase rotated so the largest
    component is real positive.  Raises ConvergenceError (carrying the
    converged subset) when restarts are exhausted.
    """
    return _solve(pencil, nev, opts or SolverOptions(), transpose=False)


def solve_dual(
    pencil: BlockPencil,
    nev: int,
    opts: SolverOptions | None = None,
    primal: SpectrumResult | None = None,
) -> list:
    """Smallest ``nev`` dual pairs, solving K y = lambda M^T y.

    When ``primal`` is given, every primal eigenvalue is matched to a
    distinct dual one by nearest relative distance (must be below 1e-6,
    else PairingError) and each returned DualPair carries the index of
    its primal partner.
    """
    result = _solve(pencil, nev, opts or SolverOptions(), transpose=True)
    duals = result.pairs
    if primal is not None:
        _pair_with_primal(primal, duals)
    return duals


def _pair_with_primal(primal: SpectrumResult, duals) -> None:
    edges = []
    for i, p in enumerate(primal.pairs):
        for j, d in enumerate(duals):
            scale = max(abs(p.lam), abs(d.lam), 1e-300)
            dist = abs(p.lam - d.lam) / scale
            if dist <= PAIRING_TOL:
                edges.append((dist, i, j))
    edges.sort(key=lambda e: e[0])
    primal_match = {}
    dual_used = set()
    for dist, i, j in edges:
        if i in primal_match or j in dual_used:
            continue
        primal_match[i] = j
        dual_used.add(j)
    for i, p in enumerate(primal.pairs):
        if i not in primal_match:
            raise PairingError(
                f"primal eigenvalue {p.lam:.12g} has no dual partner within "
                f"relative distance {PAIRING_TOL:g}"
            )
        duals[primal_match[i]].primal_index = i
