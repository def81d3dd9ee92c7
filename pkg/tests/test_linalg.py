"""Banded Cholesky, Hessenberg eigenvalue and small dense solve tests."""
import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_allclose

from transeig import Domain, RefractionIndex, assemble_matrices, build_mesh
from transeig.errors import NotSpdError, SingularSystemError
from transeig.linalg import SpdFactor, cholesky, dense_solve_complex, hessenberg_eigenvalues


def test_cholesky_2x2_hand_value():
    factor = cholesky(sp.csc_matrix([[4.0, 1.0], [1.0, 3.0]]))
    assert_allclose(factor.solve(np.array([1.0, 0.0])), [3 / 11, -1 / 11],
                    rtol=1e-14)


def test_cholesky_identity():
    rng = np.random.default_rng(0)
    b = rng.standard_normal(7)
    factor = cholesky(sp.identity(7, format="csc"))
    assert_allclose(factor.solve(b), b, rtol=1e-15)


def test_cholesky_rejects_asymmetric():
    with pytest.raises(NotSpdError):
        cholesky(sp.csc_matrix([[4.0, 1.0], [2.0, 3.0]]))


def test_cholesky_rejects_indefinite():
    with pytest.raises(NotSpdError):
        cholesky(sp.csc_matrix([[1.0, 2.0], [2.0, 1.0]]))


def test_cholesky_residual_on_assembled_stiffness():
    forms = assemble_matrices(
        build_mesh(Domain.UNIT_SQUARE, 4), RefractionIndex.constant(16.0)
    )
    factor = cholesky(forms.stiffness)
    rng = np.random.default_rng(2)
    a = forms.stiffness
    for _ in range(20):
        b = rng.standard_normal(a.shape[0])
        x = factor.solve(b)
        assert np.linalg.norm(a @ x - b) <= 1e-11 * np.linalg.norm(b)


def test_cholesky_recovers_random_solution():
    rng = np.random.default_rng(3)
    n = 40
    q = rng.standard_normal((n, n))
    a = sp.csc_matrix(np.eye(n) + 0.05 * (q + q.T) + np.diag(np.arange(n) * 0.1))
    factor = cholesky(a)
    x = rng.standard_normal(n)
    assert_allclose(factor.solve(a @ x), x, rtol=1e-9, atol=1e-10)


def test_cholesky_complex_rhs():
    rng = np.random.default_rng(4)
    a = sp.csc_matrix([[4.0, 1.0], [1.0, 3.0]])
    factor = cholesky(a)
    b = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    x = factor.solve(b)
    assert np.iscomplexobj(x)
    assert_allclose(a @ x, b, rtol=1e-13)
    # matrix of right-hand sides solves column-wise
    B = rng.standard_normal((2, 3)) + 1j * rng.standard_normal((2, 3))
    X = factor.solve(B)
    assert_allclose(a @ X, B, rtol=1e-13)


def test_solve_length_check():
    factor = cholesky(sp.identity(4, format="csc"))
    with pytest.raises(ValueError):
        factor.solve(np.ones(5))


def test_hessenberg_rotation_pair():
    eig = hessenberg_eigenvalues(np.array([[0.0, -1.0], [1.0, 0.0]]))
    got = np.sort_complex(eig.values)
    assert_allclose(got, [-1j, 1j], atol=1e-14)


def test_hessenberg_triangular_gives_diagonal():
    h = np.triu(np.arange(1.0, 17.0).reshape(4, 4)) + np.diag([10, 20, 30, 40])
    eig = hessenberg_eigenvalues(h)
    assert_allclose(np.sort(eig.values.real), np.sort(np.diag(h)), rtol=1e-12)
    assert_allclose(eig.values.imag, 0.0, atol=1e-12)


def _random_hessenberg(rng, m):
    h = rng.standard_normal((m, m))
    return np.triu(h, k=-1)


def test_hessenberg_matches_companion_oracle():
    """Compare against roots of the characteristic polynomial."""
    rng = np.random.default_rng(8)
    h = _random_hessenberg(rng, 8)
    eig = hessenberg_eigenvalues(h)
    charpoly = np.poly(h)           # coefficients via LAPACK-free recursion
    roots = np.roots(charpoly)      # companion-matrix eigenvalues
    got = np.sort_complex(eig.values)
    want = np.sort_complex(roots)
    assert_allclose(got, want, rtol=1e-8, atol=1e-8)


def test_hessenberg_conjugate_pairs_and_trace():
    rng = np.random.default_rng(13)
    for _ in range(5):
        h = _random_hessenberg(rng, 6)
        eig = hessenberg_eigenvalues(h)
        vals = eig.values
        assert_allclose(vals.sum(), np.trace(h), rtol=1e-10, atol=1e-10)
        complex_vals = vals[np.abs(vals.imag) > 1e-14]
        matched = complex_vals.copy()
        assert len(matched) % 2 == 0
        assert_allclose(
            np.sort_complex(matched), np.sort_complex(np.conj(matched)),
            rtol=1e-12,
        )


def test_hessenberg_transpose_same_spectrum():
    rng = np.random.default_rng(21)
    h = _random_hessenberg(rng, 6)
    a = np.sort_complex(hessenberg_eigenvalues(h).values)
    b = np.sort_complex(np.linalg.eigvals(h.T))
    assert_allclose(a, b, rtol=1e-9, atol=1e-9)


def test_hessenberg_vectors():
    rng = np.random.default_rng(34)
    h = _random_hessenberg(rng, 7)
    eig = hessenberg_eigenvalues(h, compute_vectors=True)
    for i in range(7):
        v = eig.vectors[:, i]
        assert_allclose(h @ v, eig.values[i] * v, atol=1e-10)


def test_hessenberg_rejects_nonsquare():
    with pytest.raises(ValueError):
        hessenberg_eigenvalues(np.ones((2, 3)))


def test_dense_solve_identity_and_diag():
    rhs = np.array([2.0, 1j])
    assert_allclose(dense_solve_complex(np.eye(2), rhs), rhs)
    g = np.array([[2.0, 0.0], [0.0, 1j]])
    assert_allclose(dense_solve_complex(g, rhs), [1.0, 1.0])


def test_dense_solve_random_residual():
    rng = np.random.default_rng(6)
    g = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    rhs = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    x = dense_solve_complex(g, rhs)
    assert np.linalg.norm(g @ x - rhs) <= 1e-12 * np.linalg.norm(rhs)


def test_dense_solve_singular():
    g = np.array([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(SingularSystemError):
        dense_solve_complex(g, np.array([1.0, 0.0]))


def test_dense_solve_size_cap():
    with pytest.raises(ValueError):
        dense_solve_complex(np.eye(21), np.ones(21))


def test_spd_factor_is_reusable():
    # one factorization, many solves; results independent of call order
    a = sp.csc_matrix([[4.0, 1.0], [1.0, 3.0]])
    factor = cholesky(a)
    assert isinstance(factor, SpdFactor)
    b1 = np.array([1.0, 0.0])
    b2 = np.array([0.0, 1.0])
    x1a = factor.solve(b1)
    x2 = factor.solve(b2)
    x1b = factor.solve(b1)
    assert_allclose(x1a, x1b, rtol=0, atol=0)
    assert_allclose(a @ x2, b2, rtol=1e-14)
