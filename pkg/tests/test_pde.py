import math
from dataclasses import replace

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from sparsessn.errors import ArgumentError, NonconvergenceError
from sparsessn.fem import assemble
from sparsessn.mesh import build_box_mesh
from sparsessn.pde import (LinearizedSystem, PdeContext, gradient, objective, reduced_objective,
                           smooth_objective, solve_adjoint, solve_linearized, solve_linearized_adjoint,
                           solve_state, sparsity_term, state_residual)
from sparsessn.problem import Params, example2, linear_quadratic

from conftest import zero_problem

MASSES = ["consistent", "lumped"]


def direct(ops, rhs_full):
    """Sparse direct solve with the interior stiffness matrix."""
    K = sp.csc_array(ops.K.csr)
    return ops.extend(spla.spsolve(K, ops.restrict(rhs_full)))


@pytest.fixture(params=MASSES)
def linear_ctx(request, square8):
    p = Params(kappa=0.1, gamma=0.0)
    y_d = lambda x: np.sin(np.pi * x[:, 0]) * x[:, 1]
    return PdeContext.build(square8, linear_quadratic(p, y_d), mass=request.param)


def test_linear_state_matches_direct(linear_ctx):
    ops = linear_ctx.ops
    u = np.ones(ops.num_nodes)
    y, _ = solve_state(linear_ctx, u)
    assert np.allclose(y, direct(ops, linear_ctx.source(u)), atol=1e-12)
    assert np.all(y[linear_ctx.mesh.boundary] == 0.0)


@pytest.mark.parametrize("mass", MASSES)
def test_zero_control_zero_state(ex2_ctx8, mass):
    ctx = PdeContext(ex2_ctx8.mesh, ex2_ctx8.ops, ex2_ctx8.problem, mass=mass)
    y, iters = solve_state(ctx, np.zeros(ctx.ops.num_nodes))
    assert np.all(y == 0.0) and iters == 1


def test_example2_state_newton_steps(ex2_ctx8):
    u = ex2_ctx8.problem.y_d(ex2_ctx8.mesh.nodes)
    y, iters = solve_state(ex2_ctx8, u)
    assert iters <= 6
    rel = np.linalg.norm(state_residual(ex2_ctx8, u, y)) / np.linalg.norm(ex2_ctx8.ops.restrict(ex2_ctx8.source(u)))
    assert rel < 1e-12


def test_warm_start_matches_cold(ex2_ctx8):
    rng = np.random.default_rng(0)
    u = ex2_ctx8.problem.y_d(ex2_ctx8.mesh.nodes)
    y_cold, _ = solve_state(ex2_ctx8, u)
    u2 = u + 0.1 * rng.standard_normal(len(u))
    y_warm, _ = solve_state(ex2_ctx8, u2, y_init=y_cold)
    y_ref, _ = solve_state(ex2_ctx8, u2)
    assert np.max(np.abs(y_warm - y_ref)) <= 1e-12 * max(1.0, np.max(np.abs(y_ref)))


def test_newton_cap_reports_residual(ex2_ctx8):
    ctx = PdeContext(ex2_ctx8.mesh, ex2_ctx8.ops, ex2_ctx8.problem, newton_max=1)
    with pytest.raises(NonconvergenceError) as info:
        solve_state(ctx, 5 * ctx.problem.y_d(ctx.mesh.nodes))
    assert info.value.residual > 0


def test_state_rejects_wrong_length(ex2_ctx8):
    with pytest.raises(ArgumentError):
        solve_state(ex2_ctx8, np.zeros(3))


def test_adjoint_zero_for_zero_cost(square8):
    ctx = PdeContext.build(square8, zero_problem())
    y = np.zeros(square8.num_nodes)
    assert np.all(solve_adjoint(ctx, y) == 0.0)


def test_linear_adjoint_matches_direct(linear_ctx):
    u = np.linspace(-1, 1, linear_ctx.ops.num_nodes)
    y, _ = solve_state(linear_ctx, u)
    phi = solve_adjoint(linear_ctx, y)
    assert np.allclose(phi, direct(linear_ctx.ops, linear_ctx.cost.gradient(y)), atol=1e-12)


@pytest.mark.parametrize("mass", MASSES)
def test_adjoint_identity(ex2_ctx8, mass):
    ctx = PdeContext(ex2_ctx8.mesh, ex2_ctx8.ops, ex2_ctx8.problem, mass=mass)
    rng = np.random.default_rng(1)
    u = ctx.problem.y_d(ctx.mesh.nodes)
    y, _ = solve_state(ctx, u)
    phi = solve_adjoint(ctx, y)
    for _ in range(3):
        v = rng.standard_normal(len(u))
        z = solve_linearized(ctx, y, v)
        lhs = np.dot(phi, ctx.source(v))
        rhs = np.dot(ctx.cost.gradient(y), z)
        assert lhs == pytest.approx(rhs, rel=1e-10)


def test_linearized_zero_direction(ex2_ctx8):
    y, _ = solve_state(ex2_ctx8, ex2_ctx8.problem.y_d(ex2_ctx8.mesh.nodes))
    n = ex2_ctx8.ops.num_nodes
    assert np.all(solve_linearized(ex2_ctx8, y, np.zeros(n)) == 0.0)
    phi = solve_adjoint(ex2_ctx8, y)
    assert np.all(solve_linearized_adjoint(ex2_ctx8, y, phi, np.zeros(n)) == 0.0)


def test_linearized_poisson(linear_ctx):
    v = np.cos(linear_ctx.mesh.nodes[:, 0])
    y = np.zeros(linear_ctx.ops.num_nodes)
    z = solve_linearized(linear_ctx, y, v)
    assert np.allclose(z, direct(linear_ctx.ops, linear_ctx.source(v)), atol=1e-12)


def test_linearized_adjoint_linear_case(linear_ctx):
    z = np.sin(3 * linear_ctx.mesh.nodes[:, 1])
    y = np.zeros(linear_ctx.ops.num_nodes)
    eta = solve_linearized_adjoint(linear_ctx, y, np.ones_like(y), z)
    assert np.allclose(eta, direct(linear_ctx.ops, linear_ctx.cost.hessian_apply(y, z)), atol=1e-12)


def test_state_directional_derivative(ex2_ctx8):
    ctx = ex2_ctx8
    rng = np.random.default_rng(2)
    u = ctx.problem.y_d(ctx.mesh.nodes)
    v = rng.standard_normal(len(u))
    y, _ = solve_state(ctx, u)
    z = solve_linearized(ctx, y, v)
    err = []
    for h in (1e-1, 1e-2):
        yh, _ = solve_state(ctx, u + h * v)
        err.append(np.linalg.norm(yh - y - h * z))
    assert math.log10(err[0] / err[1]) >= 1.9


def test_hessian_symmetry_identity(ex2_ctx8):
    """int (eta_v1 + kappa v1) v2 is symmetric in (v1, v2)."""
    ctx = ex2_ctx8
    rng = np.random.default_rng(3)
    u = ctx.problem.y_d(ctx.mesh.nodes)
    y, _ = solve_state(ctx, u)
    lin = LinearizedSystem(ctx, y)
    phi = solve_adjoint(ctx, y, lin)
    v1, v2 = rng.standard_normal((2, len(u)))
    k = ctx.params.kappa
    e1 = solve_linearized_adjoint(ctx, y, phi, solve_linearized(ctx, y, v1, lin), lin)
    e2 = solve_linearized_adjoint(ctx, y, phi, solve_linearized(ctx, y, v2, lin), lin)
    a = np.dot(ctx.source(v2), e1) + k * np.dot(ctx.M, v1 * v2)
    b = np.dot(ctx.source(v1), e2) + k * np.dot(ctx.M, v1 * v2)
    assert a == pytest.approx(b, rel=1e-10)


def test_reaction_diagonal_nonnegative(ex2_ctx8):
    rng = np.random.default_rng(4)
    y = rng.standard_normal(ex2_ctx8.ops.num_nodes) * 3
    assert np.all(LinearizedSystem(ex2_ctx8, y).reaction >= 0)


@pytest.mark.parametrize("mass", MASSES)
def test_gradient_matches_finite_differences(ex2_ctx8, mass):
    ctx = PdeContext(ex2_ctx8.mesh, ex2_ctx8.ops, ex2_ctx8.problem, mass=mass)
    rng = np.random.default_rng(5)
    u = rng.uniform(-1, 1, ctx.ops.num_nodes)
    g = gradient(ctx, u)
    for _ in range(3):
        v = rng.standard_normal(len(u))
        h = 1e-5
        fd = (reduced_objective(ctx, u + h * v) - reduced_objective(ctx, u - h * v)) / (2 * h)
        assert fd == pytest.approx(np.dot(ctx.M, g * v), rel=1e-6)


def test_objective_terms(square8):
    ctx = PdeContext.build(square8, zero_problem(Params(kappa=2.0, gamma=0.5, alpha=-5, beta=5)))
    u = np.full(square8.num_nodes, -3.0)
    y = np.zeros_like(u)
    assert smooth_objective(ctx, u, y) == pytest.approx(0.5 * 2.0 * 9.0)
    assert sparsity_term(ctx, u) == pytest.approx(3.0)
    assert objective(ctx, u, y) == pytest.approx(9.0 + 1.5)


def test_lumped_cost_is_trapezoid(square8):
    p = Params(kappa=0.1, gamma=0.0)
    ctx = PdeContext.build(square8, linear_quadratic(p), mass="lumped")
    y = square8.nodes[:, 0]
    assert ctx.cost.value(y) == pytest.approx(0.5 * np.dot(square8.lumped_measure, y ** 2))


def test_quadrature_cost_matches_consistent_tracking(square8):
    """For a linear target the element rule and the consistent mass agree exactly."""
    p = Params(kappa=0.1, gamma=0.0)
    y_d = lambda x: x[:, 0] + 2 * x[:, 1]
    data = linear_quadratic(p, y_d)
    tracking = PdeContext.build(square8, data)
    generic = PdeContext.build(square8, replace(data, tracking=False))
    assert type(generic.cost).__name__ == "QuadratureCost"
    y = np.sin(square8.nodes[:, 0])
    z = np.cos(square8.nodes[:, 1])
    assert generic.cost.value(y) == pytest.approx(tracking.cost.value(y), rel=1e-13)
    assert np.allclose(generic.cost.gradient(y), tracking.cost.gradient(y), atol=1e-15)
    assert np.allclose(generic.cost.hessian_apply(y, z), tracking.cost.hessian_apply(y, z), atol=1e-15)


def test_context_validation(square8):
    ops = assemble(square8)
    with pytest.raises(ArgumentError):
        PdeContext(square8, ops, zero_problem(), mass="exact")
    with pytest.raises(ArgumentError):
        PdeContext(square8, ops, zero_problem(), newton_tol=0.0)
