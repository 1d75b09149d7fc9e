import math

import numpy as np
import pytest

from genfrac.errors import ExpressionError
from genfrac.expr import Expression


def test_power_and_functions():
    f = Expression("2^3 + exp(0) + cos(pi) + gamma(5)", ())
    assert f() == pytest.approx(8.0 + 1.0 - 1.0 + 24.0)


def test_positional_and_keyword_calls():
    f = Expression("(u + v)^2", ("t", "y", "u", "v", "w"))
    assert f(0.0, 0.0, 1.0, 2.0, 0.0) == 9.0
    assert f(t=0, y=0, u=1.0, v=1.0, w=0) == 4.0


def test_constants_broadcast_over_arrays():
    f = Expression("1", ("t",))
    out = f(t=np.linspace(0.0, 1.0, 5))
    assert out.shape == (5,)
    assert np.all(out == 1.0)


def test_vectorized_gamma():
    f = Expression("gamma(t)", ("t",))
    assert np.allclose(f(t=np.array([1.0, 2.0, 0.5])), [1.0, 1.0, math.sqrt(math.pi)])


@pytest.mark.parametrize(
    "source",
    ["__import__('os')", "t.real", "[t]", "lambda: 1", "t if t else 1", "unknown(t)", "q + 1", "'s'", ""],
)
def test_rejects_unsafe_or_unknown(source):
    with pytest.raises(ExpressionError):
        Expression(source, ("t",))


def test_wrong_argument_count():
    with pytest.raises(ExpressionError):
        Expression("t", ("t",))(1.0, 2.0)


def test_variable_cannot_shadow_function():
    with pytest.raises(ExpressionError):
        Expression("exp", ("exp",))
