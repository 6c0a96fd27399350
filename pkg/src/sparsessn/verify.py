"""Independent oracles for the discrete derivatives and the reduced QP.

Gradients and Hessians are compared against central differences of the
discrete reduced objective; the CG solution of the reduced QP against a
dense direct solve. All of these are meant for coarse meshes.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ArgumentError, DefinitenessError
from .fem import l2_norm
from .pde import LinearizedSystem, gradient, reduced_objective, solve_adjoint, solve_state
from .ssn import hessian_apply

MAX_ORACLE_DOFS = 5000
MAX_DENSE_DOFS = 300


@dataclass
class FdReport:
    """Outcome of a finite-difference check.

    ``errors[h]`` is the largest relative error over all probes at step
    ``h``; ``order`` is the observed convergence order between the two
    ``order_steps``. Those default to steps large enough that truncation,
    not rounding, dominates the error.
    """

    probes: int
    steps: tuple
    max_rel_error: float
    errors: dict
    order: float


PROBE_MODES = 8


def _probe_directions(ctx, probes, seed):
    """Random smooth directions: sums of low-frequency cosines with normal
    amplitudes. Nodal white noise is mostly invisible to the smooth
    gradient, which makes relative errors meaningless."""
    rng = np.random.default_rng(seed)
    x = ctx.mesh.nodes
    out = []
    for _ in range(probes):
        k = rng.integers(0, 3, size=(PROBE_MODES, x.shape[1]))
        a = rng.standard_normal(PROBE_MODES)
        out.append(np.cos(np.pi * x @ k.T) @ a)
    return out


def _guard(ctx):
    if ctx.ops.num_nodes > MAX_ORACLE_DOFS:
        raise ArgumentError(
            f"finite-difference oracles are limited to {MAX_ORACLE_DOFS} nodes "
            f"(mesh has {ctx.ops.num_nodes})"
        )


def _order(errors, steps):
    h1, h2 = steps
    e1, e2 = errors[h1], errors[h2]
    if e2 == 0.0 or e1 == 0.0:
        return float("inf")
    return float(np.log(e1 / e2) / np.log(h1 / h2))


def check_gradient(ctx, u, probes=10, h=1e-5, order_steps=(1.0, 0.1), seed=0):
    """Compare ``int (phi_u + kappa u) v`` with central differences of ``F``.

    The differences use cold-started state solves so that the two sides
    share no intermediate results.
    """
    _guard(ctx)
    if not 1e-7 <= h <= 1e-3:
        raise ArgumentError("h must lie in [1e-7, 1e-3]")
    u = np.asarray(u, dtype=float)
    M = ctx.ops.M
    g = gradient(ctx, u)
    dirs = _probe_directions(ctx, probes, seed)
    steps = (h,) + tuple(order_steps)
    errors = {}
    for step in steps:
        worst = 0.0
        for v in dirs:
            exact = float(np.dot(M, g * v))
            fd = (reduced_objective(ctx, u + step * v) - reduced_objective(ctx, u - step * v)) / (2 * step)
            worst = max(worst, abs(fd - exact) / max(abs(exact), 1e-300))
        errors[step] = worst
    return FdReport(probes, steps, errors[h], errors, _order(errors, order_steps))


def check_hessian(ctx, u, probes=5, h=1e-4, order_steps=(1.0, 0.1), seed=1):
    """Compare the Hessian-vector product (inactive set = all nodes) with
    central differences of the gradient map, in the lumped L2 norm."""
    _guard(ctx)
    u = np.asarray(u, dtype=float)
    M = ctx.ops.M
    y, _ = solve_state(ctx, u)
    lin = LinearizedSystem(ctx, y)
    phi = solve_adjoint(ctx, y, lin)
    everything = np.ones(ctx.ops.num_nodes, dtype=bool)
    dirs = _probe_directions(ctx, probes, seed)
    steps = (h,) + tuple(order_steps)
    errors = {step: 0.0 for step in steps}
    for v in dirs:
        Hv = hessian_apply(ctx, y, phi, everything, v, lin)
        ref = max(l2_norm(M, Hv), 1e-300)
        for step in steps:
            fd = (gradient(ctx, u + step * v) - gradient(ctx, u - step * v)) / (2 * step)
            errors[step] = max(errors[step], l2_norm(M, fd - Hv) / ref)
    return FdReport(probes, steps, errors[h], errors, _order(errors, order_steps))


def dense_reduced_hessian(ctx, y, phi, part):
    """Matrix of ``A_j`` on the inactive dofs, one column per unit vector.

    Returns ``(A, idx)``; ``A`` is self-adjoint in the lumped product, so
    ``diag(M[idx]) @ A`` is symmetric.
    """
    jmask = part.inactive
    idx = np.flatnonzero(jmask)
    if len(idx) > MAX_DENSE_DOFS:
        raise ArgumentError(f"dense oracle limited to {MAX_DENSE_DOFS} inactive dofs, got {len(idx)}")
    lin = LinearizedSystem(ctx, y)
    A = np.empty((len(idx), len(idx)))
    e = np.zeros(ctx.ops.num_nodes)
    for k, i in enumerate(idx):
        e[i] = 1.0
        A[:, k] = hessian_apply(ctx, y, phi, jmask, e, lin)[idx]
        e[i] = 0.0
    return A, idx


def dense_qp_oracle(ctx, y, phi, part, b):
    """Reduced QP solved by Cholesky on the symmetrized dense matrix."""
    A, idx = dense_reduced_hessian(ctx, y, phi, part)
    out = np.zeros(ctx.ops.num_nodes)
    if len(idx) == 0:
        return out
    Mj = ctx.ops.M[idx]
    W = Mj[:, None] * A
    W = 0.5 * (W + W.T)
    try:
        c = scipy.linalg.cho_factor(W)
    except np.linalg.LinAlgError:
        raise DefinitenessError(np.zeros(len(idx)), float("nan"),
                                "dense reduced Hessian is not positive definite") from None
    out[idx] = scipy.linalg.cho_solve(c, Mj * np.asarray(b, dtype=float)[idx])
    return out


def symmetry_defect(ctx, A, idx):
    """``max |W - W^T| / max |W|`` for ``W = diag(M) A``."""
    W = ctx.ops.M[idx][:, None] * A
    return float(np.max(np.abs(W - W.T)) / np.max(np.abs(W)))
