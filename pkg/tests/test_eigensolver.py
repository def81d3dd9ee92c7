"""Arnoldi eigensolver tests against a dense generalized-eig oracle.

The oracle inverts K densely and takes the full spectrum of K^{-1} M with
scipy, so it is only usable on the coarsest meshes; everything the sparse
path reports there has to match it.  On top of that the suite pins the
N = 8 unit-square wavenumbers, the invariants every reported pair must
satisfy (A-normalization, residual, conjugate ordering), determinism, and
the failure modes (restart exhaustion, bad krylov_dim, pairing mismatch).
"""
import functools

import numpy as np
import pytest
import scipy.linalg
from numpy.testing import assert_allclose

from transeig import (
    Domain,
    EigenPair,
    SolverOptions,
    SpectrumResult,
    estimate_clusters,
    solve_dual,
    solve_primal,
)
from transeig.errors import ConvergenceError, PairingError
from conftest import AFFINE, N16, cached_pencil

# Wavenumbers of the unit square with n = 16 on the N = 8 mesh; the second
# and third coincide because the square is symmetric under x <-> y.
SQUARE_N8_K = [1.8800518272, 2.4462555154, 2.4462555154, 2.8681931483]


@functools.lru_cache(maxsize=16)
def cached_primal(domain, n_subdiv, refraction, nev, identity_trick=True):
    pencil = cached_pencil(domain, n_subdiv, refraction, identity_trick)
    return solve_primal(pencil, nev)


def dense_eigenvalues(pencil, nev):
    """Smallest-|lambda| eigenvalues via a dense full-spectrum solve."""
    K = pencil.K.toarray()
    M = pencil.M.toarray()
    mu = scipy.linalg.eig(np.linalg.solve(K, M), right=False)
    mu = mu[np.abs(mu) > 1e-12]
    lam = 1.0 / mu
    return lam[np.argsort(np.abs(lam), kind="stable")][:nev]


def match_multisets(got, expected, rtol):
    """Greedy nearest-neighbour matching of two eigenvalue lists."""
    pool = list(expected)
    for lam in got:
        dists = [abs(lam - e) / max(abs(lam), abs(e)) for e in pool]
        best = int(np.argmin(dists))
        assert dists[best] <= rtol, (
            f"eigenvalue {lam} has no partner within rtol={rtol}, "
            f"closest miss {dists[best]:.3e}"
        )
        pool.pop(best)


# ---------------------------------------------------------------------------
# dense oracle on the coarsest meshes


@pytest.mark.parametrize("n_subdiv,nev", [(2, 3), (4, 6)])
def test_matches_dense_oracle_square(n_subdiv, nev):
    pencil = cached_pencil(Domain.UNIT_SQUARE, n_subdiv, N16)
    result = solve_primal(pencil, nev)
    match_multisets(result.eigenvalues, dense_eigenvalues(pencil, nev), 1e-9)


def test_matches_dense_oracle_lshape_affine():
    pencil = cached_pencil(Domain.L_SHAPE, 2, AFFINE)
    result = solve_primal(pencil, 4)
    match_multisets(result.eigenvalues, dense_eigenvalues(pencil, 4), 1e-9)


def test_dense_oracle_both_trick_settings():
    # same mesh, same spectrum, with and without the identity blocks
    for trick in (True, False):
        pencil = cached_pencil(Domain.UNIT_SQUARE, 4, N16, trick)
        result = solve_primal(pencil, 4)
        match_multisets(result.eigenvalues, dense_eigenvalues(pencil, 4), 1e-9)


# ---------------------------------------------------------------------------
# reference values and ordering


def test_square_n8_wavenumbers():
    result = cached_primal(Domain.UNIT_SQUARE, 8, N16, 4)
    assert_allclose(result.wavenumbers.real, SQUARE_N8_K, rtol=5e-6)
    assert_allclose(result.wavenumbers.imag, 0.0, atol=1e-8)


def test_square_n8_cluster_structure():
    result = cached_primal(Domain.UNIT_SQUARE, 8, N16, 4)
    assert result.clusters == [[0], [1, 2], [3]]


def test_sorted_by_magnitude_and_away_from_zero():
    result = cached_primal(Domain.UNIT_SQUARE, 8, N16, 4)
    mags = np.abs(result.eigenvalues)
    assert np.all(np.diff(mags) >= -1e-12 * mags[:-1])
    assert mags[0] > 1.0  # lambda_1 = k_1^2 ~ 3.5, nowhere near zero


def test_affine_conjugate_pair_ordering():
    # positions 6 and 7 hold a complex-conjugate pair on this mesh
    result = cached_primal(Domain.UNIT_SQUARE, 8, AFFINE, 7)
    a, b = result.pairs[5].lam, result.pairs[6].lam
    assert a.imag > 0.0
    assert_allclose(b, np.conj(a), rtol=1e-10)


def test_split_conjugate_pair_at_nev_boundary():
    # cutting the pair in half must keep the positive-imaginary member
    result = cached_primal(Domain.UNIT_SQUARE, 8, AFFINE, 6)
    k_last = result.pairs[5].k
    assert k_last.imag > 0.0
    assert_allclose(
        [k_last.real, k_last.imag], [4.4971031375, 0.8770188489], rtol=1e-9
    )


# ---------------------------------------------------------------------------
# per-pair invariants


def test_reported_pairs_invariants():
    pencil = cached_pencil(Domain.UNIT_SQUARE, 8, N16)
    result = cached_primal(Domain.UNIT_SQUARE, 8, N16, 4)
    opts = SolverOptions()
    for pair in result.pairs:
        anorm = np.conj(pair.x) @ (pencil.K @ pair.x)
        assert abs(anorm - 1.0) <= 1e-12
        assert_allclose(pair.k**2, pair.lam, rtol=1e-12)
        res = np.linalg.norm(
            pencil.K @ pair.x - pair.lam * (pencil.M @ pair.x)
        ) / np.linalg.norm(pair.x)
        assert pair.residual <= opts.tol
        assert_allclose(res, pair.residual, rtol=1e-6, atol=1e-15)
        # phase fixed: largest component real positive
        top = np.abs(pair.x).argmax()
        assert abs(pair.x[top].imag) <= 1e-12 * abs(pair.x[top])
        assert pair.x[top].real > 0


def test_deterministic_repeat():
    pencil = cached_pencil(Domain.UNIT_SQUARE, 4, N16)
    r1 = solve_primal(pencil, 4)
    r2 = solve_primal(pencil, 4)
    assert np.array_equal(r1.eigenvalues, r2.eigenvalues)
    for p1, p2 in zip(r1.pairs, r2.pairs):
        assert np.array_equal(p1.x, p2.x)


# ---------------------------------------------------------------------------
# cluster detection


def test_estimate_clusters_relative_tolerance():
    lam = 3.5341
    values = [lam, lam * (1 + 1e-8), lam * (1 + 1e-3)]
    assert estimate_clusters(values, 1e-6) == [[0, 1], [2]]


def test_estimate_clusters_distinct_singletons():
    values = [1.0, 2.0, 4.0, 8.0]
    assert estimate_clusters(values, 1e-6) == [[0], [1], [2], [3]]


def test_estimate_clusters_transitive_chain():
    # a-b close and b-c close merges all three even if a-c alone is not
    values = [1.0, 1.0 + 0.9e-6, 1.0 + 1.8e-6]
    assert estimate_clusters(values, 1e-6) == [[0, 1, 2]]


def test_estimate_clusters_empty():
    assert estimate_clusters([], 1e-6) == []


# ---------------------------------------------------------------------------
# dual problem and pairing


def test_dual_matches_primal_spectrum():
    pencil = cached_pencil(Domain.UNIT_SQUARE, 8, N16, False)
    primal = solve_primal(pencil, 4)
    duals = solve_dual(pencil, 4, primal=primal)
    match_multisets(
        [d.lam for d in duals], list(primal.eigenvalues), 1e-8
    )
    # pairing is a bijection onto the primal indices
    assert sorted(d.primal_index for d in duals) == [0, 1, 2, 3]


def test_dual_smallest_wavenumber():
    pencil = cached_pencil(Domain.UNIT_SQUARE, 8, N16, False)
    duals = solve_dual(pencil, 4)
    k1 = np.sqrt(min(duals, key=lambda d: abs(d.lam)).lam)
    assert_allclose(k1.real, 1.8800518272, rtol=5e-6)


def test_dual_bilinear_pairing_nonzero():
    # the matched left/right vectors must not be M-orthogonal, otherwise
    # they would be useless for the two-grid Rayleigh quotient
    pencil = cached_pencil(Domain.UNIT_SQUARE, 8, N16, False)
    primal = solve_primal(pencil, 4)
    duals = solve_dual(pencil, 4, primal=primal)
    by_primal = {d.primal_index: d for d in duals}
    x = primal.pairs[0].x
    y = by_primal[0].y_raw
    assert abs(y @ (pencil.M @ x)) > 1e-3


def test_dual_without_primal_leaves_index_unset():
    pencil = cached_pencil(Domain.UNIT_SQUARE, 4, N16, False)
    duals = solve_dual(pencil, 3)
    assert all(d.primal_index is None for d in duals)


def test_pairing_error_on_foreign_primal():
    pencil = cached_pencil(Domain.UNIT_SQUARE, 4, N16, False)
    primal = solve_primal(pencil, 3)
    shifted = [
        EigenPair(lam=p.lam * 1.5, k=p.k, x=p.x, residual=p.residual)
        for p in primal.pairs
    ]
    fake = SpectrumResult(pairs=shifted, clusters=primal.clusters)
    with pytest.raises(PairingError):
        solve_dual(pencil, 3, primal=fake)


# ---------------------------------------------------------------------------
# options validation and failure modes


def test_nev_out_of_range():
    pencil = cached_pencil(Domain.UNIT_SQUARE, 2, N16)
    with pytest.raises(ValueError):
        solve_primal(pencil, 0)
    with pytest.raises(ValueError):
        solve_primal(pencil, pencil.K.shape[0] + 1)


def test_krylov_dim_floor():
    pencil = cached_pencil(Domain.UNIT_SQUARE, 4, N16)
    with pytest.raises(ValueError):
        solve_primal(pencil, 4, SolverOptions(krylov_dim=31))


def test_convergence_error_carries_partial():
    pencil = cached_pencil(Domain.UNIT_SQUARE, 4, N16)
    opts = SolverOptions(tol=1e-300, max_restarts=1)
    with pytest.raises(ConvergenceError) as excinfo:
        solve_primal(pencil, 4, opts)
    partial = excinfo.value.partial
    assert isinstance(partial, SpectrumResult)
    assert len(partial.pairs) < 4
    assert partial.restarts == 1
