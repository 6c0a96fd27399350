import numpy as np
import pytest

from sparsessn.mesh import build_box_mesh
from sparsessn.pde import PdeContext
from sparsessn.problem import Params, ProblemData, example2, linear_quadratic


def zero_problem(params=None):
    """f = 0 and L = 0: the reduced Hessian is kappa times the identity."""
    params = params or Params(kappa=0.1, gamma=0.05, alpha=-1.0, beta=1.0)
    z = lambda x, y: np.zeros_like(y)
    return ProblemData(params, f=z, f_y=z, f_yy=z, L=z, L_y=z, L_yy=z)


@pytest.fixture(scope="session")
def cube4():
    return build_box_mesh(3, 4)


@pytest.fixture(scope="session")
def cube8():
    return build_box_mesh(3, 8)


@pytest.fixture(scope="session")
def square8():
    return build_box_mesh(2, 8)


@pytest.fixture(scope="session")
def ex2_ctx8(cube8):
    return PdeContext.build(cube8, example2()[0])


@pytest.fixture(scope="session")
def ex2_ctx4(cube4):
    return PdeContext.build(cube4, example2()[0])


@pytest.fixture(scope="session")
def poisson_ctx(square8):
    """f = 0 with tracking of a smooth target on the unit square."""
    p = Params(kappa=0.1, gamma=0.0)
    y_d = lambda x: np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])
    return PdeContext.build(square8, linear_quadratic(p, y_d))
