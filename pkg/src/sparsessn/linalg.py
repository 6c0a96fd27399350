"""Compressed-row matrices and preconditioned conjugate gradients."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ArgumentError, DefinitenessError, NonconvergenceError

CG_TOL = 5e-14


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Compressed-row matrix.

    Backed by a ``scipy.sparse.csr_array`` with sorted, duplicate-free
    column indices; its row-wise products add entries in ascending column
    order, which keeps results bit-reproducible.
    """

    csr: sp.csr_array

    @classmethod
    def from_scipy(cls, mat):
        csr = sp.csr_array(mat, dtype=float)
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(csr)

    @classmethod
    def from_dense(cls, dense):
        return cls.from_scipy(sp.csr_array(np.asarray(dense, dtype=float)))

    @classmethod
    def identity(cls, n):
        return cls.from_scipy(sp.identity(n, format="csr"))

    @property
    def shape(self):
        return self.csr.shape

    @property
    def rows(self):
        return self.csr.shape[0]

    @property
    def cols(self):
        return self.csr.shape[1]

    @property
    def row_offsets(self):
        return self.csr.indptr

    @property
    def col_indices(self):
        return self.csr.indices

    @property
    def values(self):
        return self.csr.data

    @property
    def nnz(self):
        return self.csr.nnz

    def diagonal(self):
        return self.csr.diagonal()

    def toarray(self):
        return self.csr.toarray()

    def __add__(self, other):
        if isinstance(other, SparseMatrix):
            other = other.csr
        return SparseMatrix.from_scipy(self.csr + other)

    def __matmul__(self, x):
        return spmv(self, x)


def spmv(A, x):
    """``A @ x``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (A.cols,):
        raise ArgumentError(f"spmv: vector of shape {x.shape}, matrix has {A.cols} columns")
    return A.csr @ x


def spmv_transpose(A, x):
    """``A.T @ x`` without forming the transpose."""
    x = np.asarray(x, dtype=float)
    if x.shape != (A.rows,):
        raise ArgumentError(f"spmv_transpose: vector of shape {x.shape}, matrix has {A.rows} rows")
    # the CSC view of the transpose shares A's arrays
    return A.csr.T @ x


def diag_operator(d):
    d = np.asarray(d, dtype=float)
    return lambda v: d * v


def as_operator(op):
    """Turn a SparseMatrix, dense array or callable into ``v -> op(v)``."""
    if isinstance(op, SparseMatrix):
        return lambda v: spmv(op, v)
    if callable(op):
        return op
    arr = np.asarray(op, dtype=float)
    return lambda v: arr @ v


@dataclass
class CGResult:
    x: np.ndarray
    iters: int
    converged: bool
    residual: float


def cg_solve(op, b, tol=CG_TOL, max_iter=None, precond=None, weights=None,
             x0=None, raise_on_maxiter=False):
    """Preconditioned conjugate gradients.

    Parameters
    ----------
    op : SparseMatrix, ndarray or callable
        Operator, self-adjoint and positive definite in the inner product
        ``(x, y) = sum(weights * x * y)``.
    b : ndarray
        Right-hand side.
    tol : float
        Stop once the (recursively updated) residual satisfies
        ``||r|| <= tol * ||b||`` in the weighted norm.
    max_iter : int, optional
        Defaults to ``max(2 * len(b), 100)``.
    precond : ndarray, optional
        Diagonal ``D`` of a Jacobi preconditioner; ``D**-1`` is applied.
    weights : ndarray, optional
        Positive weights of the inner product; Euclidean when omitted.
    x0 : ndarray, optional
        Starting guess (zero by default).

    Returns
    -------
    CGResult
        Solution, iteration count, convergence flag, relative residual.

    Raises
    ------
    DefinitenessError
        If a search direction with ``(p, op(p)) <= 0`` is encountered.
    NonconvergenceError
        If ``raise_on_maxiter`` and the cap is reached.
    """
    if tol <= 0:
        raise ArgumentError("tol must be positive")
    apply = as_operator(op)
    b = np.asarray(b, dtype=float)
    n = len(b)
    if max_iter is None:
        max_iter = max(2 * n, 100)
    if weights is None:
        dot = np.dot
    else:
        w = np.asarray(weights, dtype=float)
        dot = lambda a, c: np.dot(w * a, c)
    if precond is None:
        prec = lambda r: r
    else:
        inv = 1.0 / np.asarray(precond, dtype=float)
        prec = lambda r: inv * r

    bnorm = np.sqrt(dot(b, b))
    if bnorm == 0.0:
        return CGResult(np.zeros(n), 0, True, 0.0)

    if x0 is None:
        x = np.zeros(n)
        r = b.copy()
    else:
        x = np.array(x0, dtype=float)
        r = b - apply(x)
    rnorm = np.sqrt(dot(r, r))
    if rnorm <= tol * bnorm:
        return CGResult(x, 0, True, rnorm / bnorm)
    z = prec(r)
    p = z.copy()
    rz = dot(r, z)
    for k in range(1, max_iter + 1):
        q = apply(p)
        curv = dot(p, q)
        if not curv > 0:
            raise DefinitenessError(p, curv)
        alpha = rz / curv
        x += alpha * p
        r -= alpha * q
        rnorm = np.sqrt(dot(r, r))
        if rnorm <= tol * bnorm:
            return CGResult(x, k, True, rnorm / bnorm)
        z = prec(r)
        rz_new = dot(r, z)
        p *= rz_new / rz
        p += z
        rz = rz_new
    if raise_on_maxiter:
        raise NonconvergenceError(
            f"CG did not reach tol {tol:.1e} in {max_iter} iterations "
            f"(relative residual {rnorm / bnorm:.2e})",
            residual=rnorm / bnorm,
        )
    return CGResult(x, max_iter, False, rnorm / bnorm)
