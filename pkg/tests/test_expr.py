import numpy as np
import pytest

from devrate.errors import ExpressionError
from devrate.expr import default_variables, field_from_expression


def test_derivatives_are_exact():
    V = field_from_expression("x^4/4", 1)
    assert float(V.gradient(2.0)[0]) == 8.0
    assert float(V.hessian(2.0)[0, 0]) == 12.0


def test_two_dimensional():
    f = field_from_expression("x*y + exp(y)", 2)
    g = f.gradient(np.array([1.0, 0.0]))
    assert np.allclose(g, [0.0, 2.0])


def test_unknown_names_rejected():
    with pytest.raises(ExpressionError):
        field_from_expression("x + z", 1)
    with pytest.raises(ExpressionError):
        field_from_expression("foo(x)", 1)
    with pytest.raises(ExpressionError):
        field_from_expression("x +* 2", 1)


def test_default_variables():
    assert default_variables(1) == ["x"]
    assert default_variables(3) == ["x0", "x1", "x2"]
