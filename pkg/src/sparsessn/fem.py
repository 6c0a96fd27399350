"""P1 finite elements with trapezoid-rule lumping and Dirichlet elimination."""

from dataclasses import dataclass
from math import factorial

import numpy as np
import scipy.sparse as sp

from .errors import ArgumentError, AssemblyError
from .linalg import SparseMatrix

MIN_CELL_VOLUME = 1e-14


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Discretization of ``A = -Laplace + a0`` with homogeneous Dirichlet data.

    Attributes
    ----------
    K : SparseMatrix
        Stiffness plus lumped ``a0`` mass on interior nodes.
    M : ndarray
        Lumped mass diagonal over all nodes.
    interior : ndarray of int
        Full-mesh indices of the interior nodes, in increasing order.
    Mc : SparseMatrix
        Consistent mass matrix over all nodes.
    """

    K: SparseMatrix
    M: np.ndarray
    interior: np.ndarray
    num_nodes: int
    Mc: SparseMatrix

    @property
    def M_interior(self):
        return self.M[self.interior]

    def restrict(self, values):
        return np.asarray(values, dtype=float)[self.interior]

    def extend(self, values):
        """Embed interior values into a full nodal field, zero on the boundary."""
        out = np.zeros(self.num_nodes)
        out[self.interior] = values
        return out


def p1_gradients(mesh):
    """Barycentric gradients, shape ``(cells, dim+1, dim)``, and signed volumes."""
    d = mesh.dim
    p = mesh.nodes[mesh.cells]                      # (M, d+1, d)
    B = np.transpose(p[:, 1:, :] - p[:, :1, :], (0, 2, 1))  # columns p_k - p_0
    vol = np.linalg.det(B) / factorial(d)
    bad = np.flatnonzero(np.abs(vol) < MIN_CELL_VOLUME)
    if len(bad):
        raise AssemblyError(f"degenerate cell {bad[0]} (volume {vol[bad[0]]:.3e})")
    Binv = np.linalg.inv(B)                          # rows = grad lambda_1..d
    grads = np.concatenate([-Binv.sum(axis=1, keepdims=True), Binv], axis=1)
    return grads, vol


def stiffness_matrix(mesh):
    """Full (all-node) P1 stiffness matrix as ``scipy.sparse.csr_array``."""
    grads, vol = p1_gradients(mesh)
    local = np.abs(vol)[:, None, None] * np.einsum("cik,cjk->cij", grads, grads)
    nloc = mesh.dim + 1
    rows = np.repeat(mesh.cells, nloc, axis=1).ravel()
    cols = np.tile(mesh.cells, (1, nloc)).ravel()
    K = sp.coo_array((local.ravel(), (rows, cols)), shape=(mesh.num_nodes,) * 2)
    K = K.tocsr()
    K.sum_duplicates()
    K.sort_indices()
    return K


def assemble(mesh, a0=0.0):
    """Assemble the interior stiffness operator and the lumped mass.

    Boundary degrees of freedom are removed, not penalized.
    """
    if a0 < 0:
        raise ArgumentError("a0 must be nonnegative")
    K = stiffness_matrix(mesh)
    M = mesh.lumped_measure.copy()
    interior = np.flatnonzero(~mesh.boundary)
    K_ii = K[interior][:, interior]
    if a0:
        K_ii = K_ii + sp.diags_array(a0 * M[interior]).tocsr()
    M.setflags(write=False)
    interior.setflags(write=False)
    return DiscreteOperator(SparseMatrix.from_scipy(K_ii), M, interior, mesh.num_nodes,
                            consistent_mass(mesh))


def lumped_weighted_diagonal(mesh, c):
    """Diagonal ``M_ii * c_i`` of the lumped reaction matrix for coefficient ``c``."""
    c = np.asarray(c, dtype=float)
    if c.shape != (mesh.num_nodes,):
        raise ArgumentError(f"coefficient has shape {c.shape}, expected ({mesh.num_nodes},)")
    return mesh.lumped_measure * c


def integrate_nodal(mesh, values):
    """Trapezoid-rule integral of a nodal field."""
    values = np.asarray(values, dtype=float)
    if values.shape != (mesh.num_nodes,):
        raise ArgumentError(f"field has shape {values.shape}, expected ({mesh.num_nodes},)")
    return float(np.dot(mesh.lumped_measure, values))


def l2_norm(M, values):
    """Lumped L2 norm with nodal weights ``M``."""
    return float(np.sqrt(np.dot(M, values * values)))


def consistent_mass(mesh):
    """Full (all-node) P1 mass matrix ``int phi_i phi_j``."""
    d = mesh.dim
    vol = np.abs(mesh.cell_volumes())
    local = (np.ones((d + 1, d + 1)) + np.eye(d + 1)) / ((d + 1) * (d + 2))
    nloc = d + 1
    rows = np.repeat(mesh.cells, nloc, axis=1).ravel()
    cols = np.tile(mesh.cells, (1, nloc)).ravel()
    vals = (vol[:, None, None] * local).ravel()
    Mc = sp.coo_array((vals, (rows, cols)), shape=(mesh.num_nodes,) * 2).tocsr()
    Mc.sum_duplicates()
    Mc.sort_indices()
    return SparseMatrix.from_scipy(Mc)


# Degree-2 rules on the reference simplex: barycentric points, weights
# summing to one.
_A3, _B3 = 2.0 / 3.0, 1.0 / 6.0
_A4, _B4 = 0.5854101966249685, 0.1381966011250105
QUADRATURE = {
    2: (np.array([[_A3, _B3, _B3], [_B3, _A3, _B3], [_B3, _B3, _A3]]), np.full(3, 1.0 / 3.0)),
    3: (np.array([[_A4, _B4, _B4, _B4], [_B4, _A4, _B4, _B4],
                  [_B4, _B4, _A4, _B4], [_B4, _B4, _B4, _A4]]), np.full(4, 0.25)),
}


@dataclass(frozen=True, eq=False)
class QuadratureData:
    """Quadrature points of every cell, flattened cell-major."""

    points: np.ndarray        # (cells * q, dim)
    weights: np.ndarray       # (cells * q,)  physical weights
    basis: np.ndarray         # (q, dim + 1)  barycentric values
    cells: np.ndarray

    def interpolate(self, values):
        """P1 field ``values`` evaluated at the quadrature points."""
        return np.einsum("qk,ck->cq", self.basis, values[self.cells]).ravel()

    def integrate_against_basis(self, g, num_nodes):
        """Covector ``int g phi_i`` from values of ``g`` at the points."""
        q = len(self.basis)
        local = g.reshape(-1, q)[:, :, None] * self.basis[None, :, :]
        contrib = (self.weights.reshape(-1, q)[:, :, None] * local).sum(axis=1)
        out = np.zeros(num_nodes)
        np.add.at(out, self.cells.ravel(), contrib.ravel())
        return out


def quadrature(mesh):
    basis, w = QUADRATURE[mesh.dim]
    vol = np.abs(mesh.cell_volumes())
    points = np.einsum("qk,ckd->cqd", basis, mesh.nodes[mesh.cells]).reshape(-1, mesh.dim)
    weights = (vol[:, None] * w[None, :]).ravel()
    return QuadratureData(points, weights, basis, mesh.cells)
