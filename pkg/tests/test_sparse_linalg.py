import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from blochlab.sparse_linalg import (
    ConvergenceError,
    cg_solve,
    dense_oracle,
    is_hermitian,
    largest_geneig,
    smallest_eigpair,
)


def periodic_laplacian(n, h=1.0):
    main = np.full(n, 2.0)
    off = np.full(n - 1, -1.0)
    A = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    A[0, -1] = -1.0
    A[-1, 0] = -1.0
    return (A / h**2).tocsr()


def random_spd(n, seed):
    rng = np.random.default_rng(seed)
    Q = rng.standard_normal((n, n))
    A = Q @ Q.T + n * np.eye(n)
    return sp.csr_matrix(A)


def test_cg_matches_direct_solve():
    A = random_spd(20, seed=1)
    rng = np.random.default_rng(2)
    b = rng.standard_normal(20)
    x = cg_solve(A, b, tol=1e-13)
    assert_allclose(x, np.linalg.solve(A.toarray(), b), rtol=1e-10, atol=1e-12)


def test_cg_complex_hermitian():
    rng = np.random.default_rng(5)
    Q = rng.standard_normal((12, 12)) + 1j * rng.standard_normal((12, 12))
    A = sp.csr_matrix(Q @ Q.conj().T + 12 * np.eye(12))
    b = rng.standard_normal(12) + 1j * rng.standard_normal(12)
    x = cg_solve(A, b, tol=1e-13)
    assert_allclose(A @ x, b, atol=1e-9)


def test_cg_deflated_laplacian():
    A = periodic_laplacian(16)
    rng = np.random.default_rng(3)
    b = rng.standard_normal(16)
    b -= b.mean()
    x = cg_solve(A, b, tol=1e-12, deflate_constants=True)
    assert abs(x.mean()) < 1e-12
    r = b - A @ x
    assert np.linalg.norm(r - r.mean()) < 1e-10


def test_cg_incompatible_rhs():
    A = periodic_laplacian(8)
    with pytest.raises(ValueError, match="incompatible right-hand side"):
        cg_solve(A, np.ones(8), deflate_constants=True)


def test_cg_budget_error_has_history():
    A = random_spd(30, seed=7)
    b = np.ones(30)
    with pytest.raises(ConvergenceError) as exc:
        cg_solve(A, b, tol=1e-15, maxit=2)
    assert len(exc.value.residual_history) > 0
    assert all(r >= 0 for r in exc.value.residual_history)


def test_cg_warm_start_exact():
    A = random_spd(10, seed=11)
    b = np.arange(10, dtype=float)
    x = np.linalg.solve(A.toarray(), b)
    out = cg_solve(A, b, tol=1e-12, x0=x)
    assert_allclose(out, x, rtol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=2, max_value=12), st.integers(min_value=0, max_value=10**6))
def test_cg_random_spd_property(n, seed):
    A = random_spd(n, seed=seed)
    b = np.random.default_rng(seed + 1).standard_normal(n)
    x = cg_solve(A, b, tol=1e-12)
    assert np.linalg.norm(A @ x - b) <= 1e-8 * max(np.linalg.norm(b), 1.0)


# ---------------------------------------------------------------------------
# eigenvalue solves


def test_smallest_eigpair_diagonal():
    B = sp.diags([3.0, 1.0, 2.0]).tocsr()
    rep = smallest_eigpair(B, np.ones(3), k=2, tol=1e-12)
    assert rep.converged
    assert_allclose(rep.eigenvalues, [1.0, 2.0], atol=1e-10)
    # M-orthonormal columns
    assert_allclose(rep.vectors.T @ rep.vectors, np.eye(2), atol=1e-10)


def test_smallest_eigpair_mass_identity():
    """B == diag(M) makes every eigenvalue exactly 1."""
    m = np.array([0.5, 1.5, 2.0, 4.0])
    B = sp.diags(m).tocsr()
    rep = smallest_eigpair(B, m, k=2, tol=1e-12)
    assert_allclose(rep.eigenvalues, 1.0, atol=1e-10)


def test_smallest_eigpair_vs_dense_oracle():
    A = random_spd(24, seed=17)
    rng = np.random.default_rng(18)
    m = np.exp(rng.standard_normal(24))
    rep = smallest_eigpair(A, m, k=3, tol=1e-11)
    spectrum = dense_oracle(A, m)
    assert_allclose(rep.eigenvalues, spectrum[:3], rtol=1e-8)


def test_smallest_eigpair_deterministic():
    A = random_spd(16, seed=23)
    m = np.ones(16)
    r1 = smallest_eigpair(A, m, k=2, tol=1e-11)
    r2 = smallest_eigpair(A, m, k=2, tol=1e-11)
    assert np.array_equal(r1.eigenvalues, r2.eigenvalues)
    assert np.array_equal(r1.vectors, r2.vectors)
    assert r1.iterations == r2.iterations


def test_smallest_eigpair_bad_start_recovers():
    # a start block aligned with an excited state must not trap the
    # iteration on the wrong branch
    B = sp.diags([5.0, 1.0, 3.0, 4.0]).tocsr()
    X0 = np.zeros((4, 1))
    X0[0, 0] = 1.0  # exact eigenvector of the largest eigenvalue
    rep = smallest_eigpair(B, np.ones(4), k=1, tol=1e-12, X0=X0)
    assert_allclose(rep.eigenvalues[0], 1.0, atol=1e-10)


def test_smallest_eigpair_validation():
    B = sp.eye(4, format="csr")
    with pytest.raises(ValueError, match="need 1 <= k"):
        smallest_eigpair(B, np.ones(4), k=0)
    with pytest.raises(ValueError, match="positive"):
        smallest_eigpair(B, np.zeros(4), k=1)


def test_smallest_eigpair_singular_pencil():
    # graph Laplacian: lambda_1 = 0 with the constant vector
    A = periodic_laplacian(12)
    rep = smallest_eigpair(A, np.ones(12), k=2, tol=1e-10)
    assert abs(rep.eigenvalues[0]) < 1e-10
    assert_allclose(rep.eigenvalues[1], 4 * math.sin(math.pi / 12) ** 2, rtol=1e-8)


def test_smallest_eigpair_residual_report():
    A = random_spd(12, seed=29)
    rep = smallest_eigpair(A, np.ones(12), k=1, tol=1e-12)
    x = rep.vectors[:, 0]
    lam = rep.eigenvalues[0]
    r = np.linalg.norm(A @ x - lam * x)
    assert_allclose(rep.residuals[0], r, rtol=1e-6, atol=1e-12)
    assert rep.rel_residuals[0] <= 1e-11


# ---------------------------------------------------------------------------
# dense oracle


def test_dense_oracle_diagonal_sorted():
    vals = dense_oracle(np.diag([3.0, -1.0, 2.0]))
    assert_allclose(vals, [-1.0, 2.0, 3.0], atol=1e-13)


def test_dense_oracle_two_by_two():
    vals = dense_oracle(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert_allclose(vals, [1.0, 3.0], atol=1e-13)


def test_dense_oracle_matches_lapack():
    rng = np.random.default_rng(31)
    Q = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
    A = Q + Q.conj().T
    vals = dense_oracle(A)
    assert_allclose(vals, np.linalg.eigvalsh(A), atol=1e-10)
    assert_allclose(vals.sum(), np.trace(A).real, atol=1e-10)


def test_dense_oracle_pencil():
    rng = np.random.default_rng(37)
    Q = rng.standard_normal((10, 10))
    A = Q + Q.T + 10 * np.eye(10)
    m = np.exp(rng.standard_normal(10))
    vals = dense_oracle(A, m)
    s = 1.0 / np.sqrt(m)
    ref = np.linalg.eigvalsh(A * s[:, None] * s[None, :])
    assert_allclose(vals, ref, atol=1e-10)


def test_dense_oracle_rejects():
    with pytest.raises(ValueError, match="not Hermitian"):
        dense_oracle(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ValueError, match="square"):
        dense_oracle(np.ones((2, 3)))
    with pytest.raises(ValueError, match="positive"):
        dense_oracle(np.eye(2), np.array([1.0, 0.0]))


def test_is_hermitian():
    assert is_hermitian(sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 5.0]])))
    assert not is_hermitian(sp.csr_matrix(np.array([[1.0, 2.0], [0.0, 5.0]])))
    H = sp.csr_matrix(np.array([[1.0, 1j], [-1j, 2.0]]))
    assert is_hermitian(H)


# ---------------------------------------------------------------------------
# largest generalized eigenvalue on the mean-free subspace


def test_largest_geneig_circulant_oracle():
    # max x*Wx / x*Kx over mean-free x, W = I, K the periodic second
    # difference: the optimum is 1 / (4 sin^2(pi/n)); at n = 12 that is
    # 1 / (2 - sqrt(3)) = 2 + sqrt(3)
    n = 12
    K = periodic_laplacian(n)
    val = largest_geneig(np.ones(n), K, tol=1e-10, cg_tol=1e-12)
    assert_allclose(val, 2.0 + math.sqrt(3.0), rtol=1e-8)


def test_largest_geneig_matches_pencil_route():
    n = 20
    rng = np.random.default_rng(41)
    d = np.exp(rng.standard_normal(n))
    main = np.r_[d[1:] + d[:-1]]  # conductances d_i between cells i, i+1
    A = sp.lil_matrix((n, n))
    for i in range(n):
        j = (i + 1) % n
        A[i, i] += d[i]
        A[j, j] += d[i]
        A[i, j] -= d[i]
        A[j, i] -= d[i]
    K = A.tocsr()
    assert main.shape == (n - 1,)
    w = np.exp(rng.standard_normal(n))
    val = largest_geneig(w, K, tol=1e-10, cg_tol=1e-13)
    mu = smallest_eigpair(K, w, k=2, tol=1e-12).eigenvalues[1]
    assert_allclose(val, 1.0 / mu, rtol=1e-7)


def test_largest_geneig_zero_weight():
    K = periodic_laplacian(8)
    assert largest_geneig(np.zeros(8), K) == 0.0


def test_largest_geneig_negative_weight_rejected():
    K = periodic_laplacian(8)
    with pytest.raises(ValueError, match="nonnegative"):
        largest_geneig(-np.ones(8), K)
