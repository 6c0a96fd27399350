"""Semismooth Newton method for sparse, box-constrained semilinear control.

The optimality system is written as the nonsmooth fixed-point equation
``u = psi(phi_u)`` nodally, where ``phi_u`` is the adjoint state. Each
Newton step fixes the control on the active set explicitly and solves a
reduced quadratic problem on the inactive set by conjugate gradients, with
Hessian-vector products from one linearized state and one linearized
adjoint solve.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ArgumentError, DefinitenessError, ModelError, NonconvergenceError, \
    SecondOrderConditionError
from .fem import l2_norm
from .linalg import CG_TOL, cg_solve
from .mesh import node_fraction_measure, set_measure
from .pde import LinearizedSystem, linearized_adjoint_source, objective, smooth_objective, \
    solve_adjoint, solve_state, sparsity_term

# Node labels. With gamma > 0 the five sets below partition the nodes; with
# gamma = 0 only A_BETA, J and A_ALPHA occur.
A_BETA, J_PLUS, A_ZERO, J_MINUS, A_ALPHA, J = range(6)
LABEL_NAMES = ("A_beta", "J_plus", "A_zero", "J_minus", "A_alpha", "J")


def _clip(x, lo, hi):
    return np.minimum(np.maximum(x, lo), hi)


def psi(t, p):
    """Nodal solution map ``phi -> u`` of the optimality system."""
    t = np.asarray(t, dtype=float)
    if p.gamma > 0:
        # soft threshold; exactly zero on the dead zone
        inner = t - _clip(t, -p.gamma, p.gamma)
        out = _clip(-inner / p.kappa, p.alpha, p.beta)
    else:
        out = _clip(-t / p.kappa, p.alpha, p.beta)
    return out if out.ndim else float(out)


def breakpoints(p):
    """Kinks of ``psi`` as ``(lower, upper)`` pairs of the inactive intervals."""
    if p.gamma > 0:
        return [(-p.gamma - p.kappa * p.beta, -p.gamma), (p.gamma, p.gamma - p.kappa * p.alpha)]
    return [(-p.kappa * p.beta, -p.kappa * p.alpha)]


def g_select(t, p):
    """Element of the Clarke derivative of ``psi``; zero at every kink."""
    t = np.asarray(t, dtype=float)
    inside = np.zeros(t.shape, dtype=bool)
    for lo, hi in breakpoints(p):
        inside |= (lo < t) & (t < hi)
    out = np.where(inside, -1.0 / p.kappa, 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class SetPartition:
    """Active/inactive classification of the nodes.

    ``labels`` holds one of the module-level label codes per node.
    """

    labels: np.ndarray
    sparse: bool

    @property
    def inactive(self):
        if self.sparse:
            return (self.labels == J_PLUS) | (self.labels == J_MINUS)
        return self.labels == J

    @property
    def active(self):
        return ~self.inactive

    def mask(self, label):
        return self.labels == label

    def label_names(self):
        if self.sparse:
            return [LABEL_NAMES[k] for k in (A_BETA, J_PLUS, A_ZERO, J_MINUS, A_ALPHA)]
        return [LABEL_NAMES[k] for k in (A_BETA, J, A_ALPHA)]

    def measures(self, mesh, rule="lumped"):
        """Measure of every label plus the unions ``A`` and ``J``.

        ``rule="lumped"`` sums trapezoid weights; ``rule="nodes"`` scales
        the fraction of nodes carrying the label by the mesh volume.
        """
        measure = set_measure if rule == "lumped" else node_fraction_measure
        out = {name: measure(mesh, self.labels == LABEL_NAMES.index(name))
               for name in self.label_names()}
        out["A"] = measure(mesh, self.active)
        out["J"] = measure(mesh, self.inactive)
        return out


def classify(phi, p):
    """Label each node from the adjoint value (closed active, open inactive sets)."""
    phi = np.asarray(phi, dtype=float)
    k, g = p.kappa, p.gamma
    if g > 0:
        labels = np.full(phi.shape, A_ZERO, dtype=np.int8)
        labels[phi <= -g - k * p.beta] = A_BETA
        labels[(-g - k * p.beta < phi) & (phi < -g)] = J_PLUS
        labels[(g < phi) & (phi < g - k * p.alpha)] = J_MINUS
        labels[phi >= g - k * p.alpha] = A_ALPHA
        return SetPartition(labels, True)
    labels = np.full(phi.shape, J, dtype=np.int8)
    labels[phi <= -k * p.beta] = A_BETA
    labels[phi >= -k * p.alpha] = A_ALPHA
    return SetPartition(labels, False)


def residual_w(u, phi, part, p):
    """Newton right-hand side ``w = psi(phi) - u``, evaluated set by set."""
    u = np.asarray(u, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if u.shape != phi.shape or u.shape != part.labels.shape:
        raise ArgumentError("u, phi and the partition must have equal length")
    lab = part.labels
    w = -u.copy()
    for label, bound in ((A_BETA, p.beta), (A_ALPHA, p.alpha)):
        sel = lab == label
        if sel.any():
            if not np.isfinite(bound):
                raise ModelError(f"{LABEL_NAMES[label]} is nonempty but its bound is infinite")
            w[sel] += bound
    if part.sparse:
        sel = lab == J_PLUS
        w[sel] -= (phi[sel] + p.gamma) / p.kappa
        sel = lab == J_MINUS
        w[sel] -= (phi[sel] - p.gamma) / p.kappa
    else:
        sel = lab == J
        w[sel] -= phi[sel] / p.kappa
    return w


def linearized_adjoint_density(ctx, y, phi, v, lin):
    """Riesz representative of ``G'(u) v``: one linearized state and one
    linearized adjoint solve."""
    z = lin.solve(ctx.source(v))
    eta = lin.solve_transpose(linearized_adjoint_source(ctx, y, phi, z))
    return ctx.density(eta)


def hessian_apply(ctx, y, phi, jmask, v, lin=None):
    """Reduced Hessian-vector product ``chi_J (eta + kappa v)``.

    ``phi`` is the adjoint state at ``y``; ``eta`` is the linearized adjoint
    for the direction ``chi_J v``.
    """
    lin = lin or LinearizedSystem(ctx, y)
    vj = np.where(jmask, v, 0.0)
    eta = linearized_adjoint_density(ctx, y, phi, vj, lin)
    return np.where(jmask, eta + ctx.params.kappa * vj, 0.0)


def solve_qp(ctx, y, phi, part, b, opts=None, lin=None, iteration=None):
    """Solve ``A_j v = b`` on the inactive set by CG in the lumped L2 product.

    Returns the full-length solution (zero off the inactive set) and the
    number of CG iterations.
    """
    opts = opts or SsnOptions()
    jmask = part.inactive
    idx = np.flatnonzero(jmask)
    n = ctx.ops.num_nodes
    if len(idx) == 0:
        return np.zeros(n), 0
    lin = lin or LinearizedSystem(ctx, y)

    def apply(vc):
        full = np.zeros(n)
        full[idx] = vc
        return hessian_apply(ctx, y, phi, jmask, full, lin)[idx]

    try:
        res = cg_solve(apply, np.asarray(b, dtype=float)[idx], tol=opts.cg_tol,
                       max_iter=opts.cg_max, weights=ctx.ops.M[idx])
    except DefinitenessError as err:
        direction = np.zeros(n)
        direction[idx] = err.direction
        raise SecondOrderConditionError(direction, err.curvature, iteration) from None
    if not res.converged:
        raise NonconvergenceError(
            f"ssn: reduced QP CG stalled at relative residual {res.residual:.2e} "
            f"after {res.iters} iterations",
            residual=res.residual, iteration=iteration,
        )
    out = np.zeros(n)
    out[idx] = res.x
    return out, res.iters


@dataclass
class SsnOptions:
    tol: float = 5e-14
    max_outer: int = 30
    cg_tol: float = CG_TOL
    cg_max: int = 500
    sigma_eps: float = 1e-8

    def __post_init__(self):
        for name in ("tol", "cg_tol", "sigma_eps"):
            if not getattr(self, name) > 0:
                raise ArgumentError(f"ssn.{name} must be positive")
        for name in ("max_outer", "cg_max"):
            if getattr(self, name) < 1:
                raise ArgumentError(f"ssn.{name} must be at least 1")


@dataclass
class SsnRow:
    j: int
    J: float
    delta: Optional[float]
    newton_iters: int
    cg_iters: Optional[int]


@dataclass
class Diagnostics:
    """Optimality diagnostics at a (converged) control."""

    lam: Optional[np.ndarray]
    kkt_residual: float
    measures: dict
    node_measures: dict
    sigma_measure: float
    sparsity_violation: float
    labels: np.ndarray


@dataclass
class SsnRecord:
    """Convergence history, one row per iterate ``u_0, ..., u_N``.

    The last row carries the objective and Newton count of the final
    iterate; it has no step, so ``delta`` and ``cg_iters`` are None.
    """

    rows: list = field(default_factory=list)
    converged: bool = False
    stop_reason: str = ""
    measures: dict = field(default_factory=dict)
    node_measures: dict = field(default_factory=dict)
    sigma_measure: float = float("nan")
    kkt_residual: float = float("nan")
    F: float = float("nan")
    sparsity: float = float("nan")

    @property
    def outer_iterations(self):
        """Number of Newton steps taken."""
        return len(self.rows) - 1

    @property
    def deltas(self):
        return [r.delta for r in self.rows if r.delta is not None]

    @property
    def final_J(self):
        return self.rows[-1].J


@dataclass
class SsnResult:
    """Final control, state, adjoint state ``phi`` and its nodal density
    ``phi_density`` (the field entering the projection formula)."""

    u: np.ndarray
    y: np.ndarray
    phi: np.ndarray
    phi_density: np.ndarray
    record: SsnRecord
    diagnostics: Diagnostics


def ssn_solve(ctx, u0, opts=None, y0=None, log=None):
    """Run the semismooth Newton iteration from ``u0``.

    Stops when ``delta_j = ||v_j|| / max(1, ||u_{j+1}||) < opts.tol`` (lumped
    L2 norms), when ``J(u_{j+1})`` equals ``J(u_j)`` bit for bit, or after
    ``opts.max_outer`` steps with ``record.converged = False``.

    Parameters
    ----------
    log : callable, optional
        Called with each finished :class:`SsnRow`.
    """
    opts = opts or SsnOptions()
    p = ctx.params
    M = ctx.ops.M
    u = np.array(u0, dtype=float)
    if u.shape != (ctx.ops.num_nodes,) or not np.all(np.isfinite(u)):
        raise ArgumentError("u0 must be a finite nodal field")
    record = SsnRecord()

    def emit(row):
        record.rows.append(row)
        if log is not None:
            log(row)

    j = 0
    y, newton = _state(ctx, u, y0, j)
    J_cur = objective(ctx, u, y)
    while True:
        try:
            lin = LinearizedSystem(ctx, y)
            phi = solve_adjoint(ctx, y, lin)
            phi_d = ctx.density(phi)
            part = classify(phi_d, p)
            w = residual_w(u, phi_d, part, p)
            w_act = np.where(part.active, w, 0.0)
            eta = linearized_adjoint_density(ctx, y, phi, w_act, lin)
            b = np.where(part.inactive, p.kappa * w - eta, 0.0)
            v_in, cg = solve_qp(ctx, y, phi, part, b, opts, lin, iteration=j)
        except NonconvergenceError as err:
            err.iteration = j
            raise
        v = w_act + v_in
        u_next = u + v
        delta = l2_norm(M, v) / max(1.0, l2_norm(M, u_next))
        emit(SsnRow(j, J_cur, delta, newton, cg))

        y, newton = _state(ctx, u_next, y, j + 1)
        J_next = objective(ctx, u_next, y)
        u = u_next
        j += 1
        if delta < opts.tol:
            record.converged, record.stop_reason = True, "delta"
        elif J_next == J_cur:
            record.converged, record.stop_reason = True, "objective"
        elif j >= opts.max_outer:
            record.stop_reason = "max_outer"
        J_cur = J_next
        if record.stop_reason:
            emit(SsnRow(j, J_cur, None, newton, None))
            break

    phi = solve_adjoint(ctx, y)
    phi_d = ctx.density(phi)
    diag = diagnostics(ctx, u, phi_d, p, opts.sigma_eps)
    record.measures = diag.measures
    record.node_measures = diag.node_measures
    record.sigma_measure = diag.sigma_measure
    record.kkt_residual = diag.kkt_residual
    record.F = smooth_objective(ctx, u, y)
    record.sparsity = p.gamma * sparsity_term(ctx, u)
    return SsnResult(u, y, phi, phi_d, record, diag)


def _state(ctx, u, y_prev, j):
    try:
        return solve_state(ctx, u, y_prev)
    except NonconvergenceError as err:
        err.iteration = j
        err.args = (f"ssn iteration {j}: {err.args[0]}",)
        raise


def diagnostics(ctx, u, phi, p, eps=1e-8):
    """Fixed-point residual, set measures and strict-complementarity surrogate.

    ``phi`` is the nodal adjoint density (see :meth:`PdeContext.density`).

    ``sigma_measure`` is the lumped measure of the nodes where the control
    sits at a bound while its multiplier vanishes, or where ``|phi| = gamma``,
    both up to ``eps``.
    """
    mesh = ctx.mesh
    u = np.asarray(u, dtype=float)
    phi = np.asarray(phi, dtype=float)
    part = classify(phi, p)
    kkt = float(np.max(np.abs(u - psi(phi, p)))) if len(u) else 0.0
    at_bound = (np.abs(u - p.alpha) <= eps) | (np.abs(u - p.beta) <= eps)
    if p.gamma > 0:
        lam = _clip(-phi / p.gamma, -1.0, 1.0)
        mult = phi + p.kappa * u + p.gamma * lam
        sigma = (at_bound & (np.abs(mult) <= eps)) | (np.abs(np.abs(phi) - p.gamma) <= eps)
        zero_zone = np.abs(phi) <= p.gamma - eps
        violation = float(np.max(np.abs(u[zero_zone]))) if zero_zone.any() else 0.0
    else:
        lam = None
        sigma = at_bound & (np.abs(phi + p.kappa * u) <= eps)
        violation = 0.0
    return Diagnostics(
        lam=lam,
        kkt_residual=kkt,
        measures=part.measures(mesh),
        node_measures=part.measures(mesh, rule="nodes"),
        sigma_measure=set_measure(mesh, sigma),
        sparsity_violation=violation,
        labels=part.labels,
    )
