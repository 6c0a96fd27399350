"""Discrete state, adjoint and linearized equations.

Every equation lives on interior nodes; returned fields are full nodal
vectors that vanish on the Dirichlet boundary. The semilinear term
``f(x, y)`` is always lumped, so the Newton and adjoint matrices are the
stiffness matrix plus a diagonal. The control enters the state equation
through a *source mass* ``S`` and the tracking integral is discretized to
match:

``mass="consistent"`` (default)
    ``S`` is the consistent P1 mass matrix; ``int L(x, y_h)`` uses the
    consistent mass for tracking-type ``L`` and a degree-2 element rule
    otherwise.
``mass="lumped"``
    ``S`` is the lumped mass and ``int L`` the trapezoid rule.

In both cases the functions below are exact derivatives of the discrete
objective. Gradients and Hessian-vector products are returned as Riesz
representatives in the lumped L2 product, i.e. ``M^{-1}`` times the
covector, so that the nodal projection formula applies verbatim.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, NonconvergenceError
from .fem import assemble, quadrature
from .linalg import CG_TOL, cg_solve, spmv, spmv_transpose

NEWTON_TOL = 5e-14
# Newton steps below this relative size are at the rounding floor of the
# linear solves; stop once they no longer halve.
NEWTON_NOISE_FLOOR = 1e-11
MASS_CHOICES = ("consistent", "lumped")


class LumpedCost:
    """Trapezoid rule ``sum_i M_i L(x_i, y_i)``."""

    def __init__(self, mesh, problem):
        self.x = mesh.nodes
        self.M = mesh.lumped_measure
        self.problem = problem

    def value(self, y):
        return float(np.dot(self.M, self.problem.L(self.x, y)))

    def gradient(self, y):
        return self.M * self.problem.L_y(self.x, y)

    def hessian_apply(self, y, z):
        return self.M * self.problem.L_yy(self.x, y) * z


class ConsistentTrackingCost:
    """``(y - I_h y_d)^T Mc (y - I_h y_d) / 2`` for ``L = (y - y_d)**2 / 2``."""

    def __init__(self, mesh, problem, Mc):
        self.target = problem.y_d(mesh.nodes)
        self.Mc = Mc

    def value(self, y):
        e = y - self.target
        return 0.5 * float(np.dot(e, spmv(self.Mc, e)))

    def gradient(self, y):
        return spmv(self.Mc, y - self.target)

    def hessian_apply(self, y, z):
        return spmv(self.Mc, z)


class QuadratureCost:
    """Degree-2 element quadrature of ``L(x, y_h(x))`` for general ``L``."""

    def __init__(self, mesh, problem):
        self.quad = quadrature(mesh)
        self.problem = problem
        self.n = mesh.num_nodes

    def value(self, y):
        q = self.quad
        return float(np.dot(q.weights, self.problem.L(q.points, q.interpolate(y))))

    def gradient(self, y):
        q = self.quad
        g = self.problem.L_y(q.points, q.interpolate(y))
        return q.integrate_against_basis(g, self.n)

    def hessian_apply(self, y, z):
        q = self.quad
        g = self.problem.L_yy(q.points, q.interpolate(y)) * q.interpolate(z)
        return q.integrate_against_basis(g, self.n)


@dataclass
class PdeContext:
    """Mesh, discrete operator and problem data shared by all solves."""

    mesh: object
    ops: object
    problem: object
    mass: str = "consistent"
    newton_tol: float = NEWTON_TOL
    newton_max: int = 50
    cg_tol: float = CG_TOL
    cg_max: int = 20000
    x_interior: np.ndarray = field(init=False, repr=False)
    cost: object = field(init=False, repr=False)

    def __post_init__(self):
        if not (self.newton_tol > 0 and self.cg_tol > 0):
            raise ArgumentError("tolerances must be positive")
        if self.mass not in MASS_CHOICES:
            raise ArgumentError(f"mass must be one of {MASS_CHOICES}, got {self.mass!r}")
        self.x_interior = self.mesh.nodes[self.ops.interior]
        if self.mass == "lumped":
            self.cost = LumpedCost(self.mesh, self.problem)
        elif self.problem.tracking and self.problem.y_d is not None:
            self.cost = ConsistentTrackingCost(self.mesh, self.problem, self.ops.Mc)
        else:
            self.cost = QuadratureCost(self.mesh, self.problem)

    @classmethod
    def build(cls, mesh, problem, a0=0.0, **kwargs):
        return cls(mesh, assemble(mesh, a0), problem, **kwargs)

    @property
    def params(self):
        return self.problem.params

    @property
    def M(self):
        return self.ops.M

    def source(self, v):
        """Covector ``S v`` of a nodal field (all nodes)."""
        if self.mass == "lumped":
            return self.ops.M * v
        return spmv(self.ops.Mc, v)

    def density(self, covector_field):
        """Lumped Riesz representative ``M^{-1} S^T p`` of a P1 field ``p``."""
        if self.mass == "lumped":
            return np.asarray(covector_field, dtype=float).copy()
        return spmv_transpose(self.ops.Mc, covector_field) / self.ops.M


def _check_field(ctx, v, name):
    v = np.asarray(v, dtype=float)
    if v.shape != (ctx.ops.num_nodes,):
        raise ArgumentError(f"{name} has shape {v.shape}, expected ({ctx.ops.num_nodes},)")
    return v


class LinearizedSystem:
    """``K + diag(M f_y(y))`` frozen at a state ``y``, plus its transpose.

    Caches the reaction diagonal so that the solves sharing one coefficient
    matrix (adjoint, linearized state, linearized adjoint) do not
    re-evaluate the problem data. ``cg_iters`` accumulates inner iterations.
    """

    def __init__(self, ctx, y):
        self.ctx = ctx
        self.y = y
        y_i = ctx.ops.restrict(y)
        self.reaction = ctx.ops.M_interior * ctx.problem.f_y(ctx.x_interior, y_i)
        self.precond = ctx.ops.K.diagonal() + self.reaction
        self.cg_iters = 0

    def solve_interior(self, rhs_i, transpose=False):
        K = self.ctx.ops.K
        d = self.reaction
        if transpose:
            apply = lambda v: spmv_transpose(K, v) + d * v
        else:
            apply = lambda v: spmv(K, v) + d * v
        res = cg_solve(apply, rhs_i, tol=self.ctx.cg_tol, max_iter=self.ctx.cg_max,
                       precond=self.precond)
        if not res.converged:
            raise NonconvergenceError(
                f"pde: linear solve stalled at relative residual {res.residual:.2e} "
                f"after {res.iters} CG iterations",
                residual=res.residual,
            )
        self.cg_iters += res.iters
        return res.x

    def solve(self, covector):
        """Solve with the interior part of the full-node ``covector``."""
        ops = self.ctx.ops
        return ops.extend(self.solve_interior(ops.restrict(covector)))

    def solve_transpose(self, covector):
        ops = self.ctx.ops
        return ops.extend(self.solve_interior(ops.restrict(covector), transpose=True))


def state_residual(ctx, u, y):
    """Interior residual ``K y + M f(y) - S u``."""
    ops = ctx.ops
    y_i = ops.restrict(y)
    return (spmv(ops.K, y_i) + ops.M_interior * ctx.problem.f(ctx.x_interior, y_i)
            - ops.restrict(ctx.source(u)))


def solve_state(ctx, u, y_init=None):
    """Newton's method for the semilinear state equation.

    Each step solves ``(K + diag(M f_y(y_k))) d = -residual`` and sets
    ``y_{k+1} = y_k + d``. Iteration stops when the step is small relative
    to the iterate, ``||d|| <= newton_tol * ||y_{k+1}||``, or once the steps
    are at the rounding floor of the linear solves and stop contracting.

    Returns
    -------
    y : ndarray
        State, zero on the boundary.
    iters : int
        Number of Newton steps (linear solves) taken.
    """
    u = _check_field(ctx, u, "u")
    ops = ctx.ops
    if y_init is None:
        y_i = np.zeros(len(ops.interior))
    else:
        y_i = ops.restrict(_check_field(ctx, y_init, "y_init")).copy()
    prev = np.inf
    for k in range(1, ctx.newton_max + 1):
        y = ops.extend(y_i)
        res = state_residual(ctx, u, y)
        step = LinearizedSystem(ctx, y).solve_interior(-res)
        y_i = y_i + step
        snorm = np.linalg.norm(step)
        ynorm = np.linalg.norm(y_i)
        if snorm <= ctx.newton_tol * ynorm or snorm == 0.0:
            return ops.extend(y_i), k
        if snorm <= NEWTON_NOISE_FLOOR * ynorm and snorm > 0.5 * prev:
            return ops.extend(y_i), k
        prev = snorm
    rhs = np.linalg.norm(ops.restrict(ctx.source(u)))
    rel = np.linalg.norm(state_residual(ctx, u, ops.extend(y_i))) / max(rhs, 1e-300)
    raise NonconvergenceError(
        f"pde: state Newton did not converge in {ctx.newton_max} steps "
        f"(relative residual {rel:.2e})",
        residual=rel,
    )


def solve_adjoint(ctx, y, lin=None):
    """Adjoint state: ``(K^T + diag(M f_y(y))) phi = dQ/dy``.

    ``Q`` is the discrete tracking integral, so the source is ``M L_y(y)``
    under lumping. Use :func:`PdeContext.density` to obtain the nodal field
    entering the projection formula.
    """
    y = _check_field(ctx, y, "y")
    lin = lin or LinearizedSystem(ctx, y)
    return lin.solve_transpose(ctx.cost.gradient(y))


def solve_linearized(ctx, y, v, lin=None):
    """Linearized state ``z = S'(u) v``: ``(K + diag(M f_y(y))) z = S v``."""
    y = _check_field(ctx, y, "y")
    v = _check_field(ctx, v, "v")
    lin = lin or LinearizedSystem(ctx, y)
    return lin.solve(ctx.source(v))


def linearized_adjoint_source(ctx, y, phi, z):
    """Covector ``Q''(y) z - M (phi f_yy(y)) z``."""
    x = ctx.mesh.nodes
    return ctx.cost.hessian_apply(y, z) - ctx.ops.M * phi * ctx.problem.f_yy(x, y) * z


def solve_linearized_adjoint(ctx, y, phi, z, lin=None):
    """Linearized adjoint ``eta = G'(u) v`` given ``z = S'(u) v``.

    Solves ``(K^T + diag(M f_y(y))) eta = Q''(y) z - M phi f_yy(y) z``,
    which under lumping is ``M (L_yy(y) - phi f_yy(y)) z``.
    """
    y = _check_field(ctx, y, "y")
    z = _check_field(ctx, z, "z")
    lin = lin or LinearizedSystem(ctx, y)
    return lin.solve_transpose(linearized_adjoint_source(ctx, y, phi, z))


def smooth_objective(ctx, u, y):
    """``F(u) = int L(x, y) + kappa/2 ||u||^2``; the Tikhonov term is lumped."""
    return ctx.cost.value(y) + 0.5 * ctx.params.kappa * float(np.dot(ctx.ops.M, u * u))


def sparsity_term(ctx, u):
    """``j(u) = ||u||_L1`` with the trapezoid rule."""
    return float(np.dot(ctx.ops.M, np.abs(u)))


def objective(ctx, u, y):
    """``J(u) = F(u) + gamma j(u)``."""
    return smooth_objective(ctx, u, y) + ctx.params.gamma * sparsity_term(ctx, u)


def reduced_objective(ctx, u):
    """``F(u)`` with a cold-started state solve; used by finite-difference checks."""
    y, _ = solve_state(ctx, u)
    return smooth_objective(ctx, u, y)


def gradient(ctx, u, y=None):
    """Lumped Riesz representative ``M^{-1} S phi_u + kappa u`` of ``F'(u)``."""
    u = _check_field(ctx, u, "u")
    if y is None:
        y, _ = solve_state(ctx, u)
    phi = solve_adjoint(ctx, y)
    return ctx.density(phi) + ctx.params.kappa * u
