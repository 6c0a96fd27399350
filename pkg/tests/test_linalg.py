import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsessn.errors import ArgumentError, DefinitenessError, NonconvergenceError
from sparsessn.linalg import SparseMatrix, cg_solve, spmv, spmv_transpose

A22 = SparseMatrix.from_dense([[2.0, 0.0], [1.0, 3.0]])


@pytest.mark.parametrize("A, x, expected", [
    (SparseMatrix.identity(3), [1.0, 2.0, 3.0], [1.0, 2.0, 3.0]),
    (A22, [1.0, 1.0], [2.0, 4.0]),
    (A22, [0.0, 0.0], [0.0, 0.0]),
])
def test_spmv_examples(A, x, expected):
    assert np.array_equal(spmv(A, x), expected)


def test_spmv_transpose_example():
    assert np.array_equal(spmv_transpose(A22, [1.0, 1.0]), [3.0, 3.0])


def test_csr_arrays():
    assert list(A22.row_offsets) == [0, 1, 3]
    assert list(A22.col_indices) == [0, 0, 1]
    assert list(A22.values) == [2.0, 1.0, 3.0]
    assert (A22.rows, A22.cols, A22.nnz) == (2, 2, 3)
    assert np.array_equal(A22.diagonal(), [2.0, 3.0])


@pytest.mark.parametrize("fn, x", [(spmv, [1.0, 2.0, 3.0]), (spmv_transpose, [1.0])])
def test_dimension_mismatch(fn, x):
    with pytest.raises(ArgumentError):
        fn(A22, x)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2 ** 31 - 1))
def test_adjoint_identity(m, n, seed):
    rng = np.random.default_rng(seed)
    A = SparseMatrix.from_scipy(sp.random_array((m, n), density=0.4, rng=rng, format="csr"))
    x, y = rng.standard_normal(n), rng.standard_normal(m)
    assert np.dot(spmv(A, x), y) == pytest.approx(np.dot(x, spmv_transpose(A, y)), abs=1e-12)
    assert np.allclose(spmv(A, x), A.toarray() @ x)


def test_cg_scaled_identity():
    res = cg_solve(lambda v: 2.0 * v, np.array([2.0, 4.0]), tol=1e-14)
    assert np.allclose(res.x, [1.0, 2.0]) and res.iters <= 2 and res.converged


def test_cg_two_by_two():
    res = cg_solve(np.array([[4.0, 1.0], [1.0, 3.0]]), np.array([1.0, 2.0]), tol=1e-14)
    assert np.allclose(res.x, [1 / 11, 7 / 11], rtol=1e-13)


def test_cg_negative_curvature():
    with pytest.raises(DefinitenessError) as info:
        cg_solve(lambda v: -v, np.array([1.0, 0.5]))
    assert info.value.curvature < 0
    assert info.value.direction.shape == (2,)


def test_cg_zero_rhs():
    res = cg_solve(lambda v: v, np.zeros(4))
    assert res.iters == 0 and np.all(res.x == 0)


def test_cg_maxiter():
    D = np.diag(np.arange(1.0, 30.0))
    res = cg_solve(D, np.ones(29), tol=1e-14, max_iter=3)
    assert not res.converged and res.iters == 3
    with pytest.raises(NonconvergenceError):
        cg_solve(D, np.ones(29), tol=1e-14, max_iter=3, raise_on_maxiter=True)


def _spd(n, seed):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return Q @ np.diag(rng.uniform(1.0, 4.0, n)) @ Q.T


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 20), st.integers(0, 2 ** 31 - 1))
def test_cg_terminates_within_n(n, seed):
    A = _spd(n, seed)
    b = np.random.default_rng(seed + 1).standard_normal(n)
    res = cg_solve(A, b, tol=1e-14, max_iter=n)
    assert res.converged and res.iters <= n
    assert np.allclose(res.x, np.linalg.solve(A, b), rtol=1e-10, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 20), st.integers(0, 2 ** 31 - 1))
def test_jacobi_and_plain_agree(n, seed):
    A = _spd(n, seed) + np.diag(np.linspace(1.0, 50.0, n))
    b = np.random.default_rng(seed + 1).standard_normal(n)
    tol = 1e-13
    plain = cg_solve(A, b, tol=tol).x
    jac = cg_solve(A, b, tol=tol, precond=np.diag(A)).x
    assert np.linalg.norm(plain - jac) <= 10 * tol * np.linalg.norm(np.linalg.solve(A, b)) * np.linalg.cond(A)


def test_weighted_inner_product():
    # W^{-1} S is self-adjoint in the W-product for symmetric S
    rng = np.random.default_rng(3)
    w = rng.uniform(0.5, 2.0, 6)
    S = _spd(6, 4)
    b = rng.standard_normal(6)
    res = cg_solve(lambda v: (S @ v) / w, b, tol=1e-14, weights=w)
    assert np.allclose(S @ res.x / w, b, atol=1e-12)
