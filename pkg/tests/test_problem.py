import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsessn.errors import ModelError
from sparsessn.mesh import build_disk_mesh
from sparsessn.problem import (EXAMPLE1_AMPLITUDE, EXAMPLE1_PRINTED_AMPLITUDE, Params, example1,
                               example1_target, example2, linear_quadratic)

EXAMPLES = [example1()[0], example2()[0], linear_quadratic(Params(0.1, 0.0), reaction=2.0)]


def test_example1_data():
    data, spec = example1()
    p = data.params
    assert (p.kappa, p.gamma, p.alpha, p.beta) == (0.002, 0.03, -12.0, 12.0)
    assert data.f_y(np.zeros((1, 2)), np.array([2.0]))[0] == 12.0
    assert data.y_d(np.array([[0.5, 0.0]]))[0] == pytest.approx(0.0, abs=1e-15)
    assert spec.kind == "disk" and spec.levels == 7


def test_example2_data():
    data, spec = example2()
    p = data.params
    assert (p.kappa, p.gamma, p.alpha, p.beta) == (0.1, 0.05, -1.0, 1.0)
    assert data.y_d(np.array([[0.5, 0.5, 0.5]]))[0] == pytest.approx(8.0)
    x, y = np.zeros((1, 3)), np.array([-1.0])
    assert data.f_y(x, y)[0] == 4.0 and data.f_yy(x, y)[0] == -12.0
    assert spec.kind == "box3" and spec.n == 32


def test_example2_fyy_continuous_at_zero():
    f_yy = example2()[0].f_yy
    vals = f_yy(np.zeros((3, 3)), np.array([-1e-8, 0.0, 1e-8]))
    assert np.all(np.abs(vals) < 1e-14)


@pytest.mark.parametrize("data", EXAMPLES, ids=["example1", "example2", "linear"])
def test_fd_consistency(data):
    rng = np.random.default_rng(7)
    dim = 2 if data.name == "example1" else 3
    x = rng.uniform(0, 1, (100, dim))
    y = rng.uniform(-10, 10, 100)
    h = 1e-5
    for F, dF in ((data.f, data.f_y), (data.f_y, data.f_yy), (data.L, data.L_y), (data.L_y, data.L_yy)):
        fd = (F(x, y + h) - F(x, y - h)) / (2 * h)
        exact = dF(x, y)
        assert np.all(np.abs(fd - exact) <= 1e-6 * np.maximum(np.abs(exact), 1.0))


@pytest.mark.parametrize("data", EXAMPLES[:2], ids=["example1", "example2"])
@settings(max_examples=50, deadline=None)
@given(y1=st.floats(-10, 10), y2=st.floats(-10, 10))
def test_monotone_nonlinearity(data, y1, y2):
    x = np.zeros((1, 3))
    a, b = sorted((y1, y2))
    assert data.f(x, np.array([a]))[0] <= data.f(x, np.array([b]))[0]
    assert data.f_y(x, np.array([y1]))[0] >= 0


@pytest.mark.parametrize("kwargs, message", [
    (dict(kappa=0.0, gamma=0.1, alpha=-1, beta=1), "kappa > 0"),
    (dict(kappa=0.1, gamma=-0.1, alpha=-1, beta=1), "gamma >= 0"),
    (dict(kappa=0.1, gamma=0.0, alpha=1, beta=1), "alpha < beta violated"),
    (dict(kappa=0.1, gamma=0.1, alpha=0.5, beta=1), "alpha < 0 < beta"),
])
def test_params_invariants(kwargs, message):
    with pytest.raises(ModelError, match=message):
        Params(**kwargs)


def test_params_gamma_zero_allows_positive_box():
    assert Params(kappa=0.1, gamma=0.0, alpha=0.5, beta=1.0).alpha == 0.5


def test_with_params_override():
    data = example2()[0].with_params(gamma=0.0)
    assert data.params.gamma == 0.0 and data.params.kappa == 0.1
    with pytest.raises(ModelError):
        data.with_params(alpha=1.0, beta=1.0)


def test_printed_example1_amplitude_is_below_table():
    # with u = 0 the state vanishes, so J(0) = ||y_d||^2 / 2 bounds the optimum from above
    mesh = build_disk_mesh(6)
    J0 = {}
    for amplitude, expected in ((EXAMPLE1_PRINTED_AMPLITUDE, 6.44), (EXAMPLE1_AMPLITUDE, 11.46)):
        yd = example1_target(mesh.nodes, amplitude)
        J0[amplitude] = 0.5 * np.dot(mesh.lumped_measure, yd ** 2)
        assert J0[amplitude] == pytest.approx(expected, abs=0.02)
    assert J0[EXAMPLE1_PRINTED_AMPLITUDE] < 11.1416869 < J0[EXAMPLE1_AMPLITUDE]
