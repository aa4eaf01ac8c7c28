import numpy as np
import pytest

from fiocalc import DomainError
from fiocalc.expressions import metric_hamiltonian, scalar_in, vector_field_with_derivatives


def test_vector_field_derivatives():
    f, jac, hess = vector_field_with_derivatives(["y1 + 0.2*sin(y2)", "y2 + 0.1*y1^2"])
    x = np.array([[0.3, -0.4]])
    assert np.allclose(f(x), [[0.3 + 0.2 * np.sin(-0.4), -0.4 + 0.009]])
    assert np.allclose(jac(x), [[[1.0, 0.2 * np.cos(-0.4)], [0.06, 1.0]]])
    H = hess(x)[0]
    assert np.isclose(H[0, 1, 1], -0.2 * np.sin(-0.4)) and np.isclose(H[1, 0, 0], 0.2)


def test_bare_variable_in_one_dimension():
    f, jac, _ = vector_field_with_derivatives("2*y")
    assert np.allclose(f(np.array([[1.5]])), [[3.0]])
    assert np.allclose(jac(np.array([[1.5]])), [[[2.0]]])


@pytest.mark.parametrize("text", ["y0 + 1", "z1", "__import__('os')", "sin(", "foo(y1)"])
def test_rejects_unknown_names_and_garbage(text):
    with pytest.raises(DomainError):
        vector_field_with_derivatives([text, "y2"])


def test_numeric_literals_allowed():
    g = scalar_in("1e-3*y1 + 2j + 1.5", [("y", 1)])
    assert np.isclose(g(np.array([2.0])), 1.502 + 2j)


def test_metric_hamiltonian_one_dimensional_is_smooth():
    xs, ps, h = metric_hamiltonian([["1 + x1^2"]])
    assert "Abs" not in str(h)
