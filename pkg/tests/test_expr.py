import numpy as np
import pytest

from diffuse_sd.expr import ExpressionError, compile_expression, parse


def test_grammar_and_broadcasting():
    f = compile_expression("2*x^2 - sin(pi*y) + exp(0) / 4", ("x", "y"))
    x = np.linspace(0, 1, 5)
    assert np.allclose(f(x, 0.5), 2 * x ** 2 - 1 + 0.25)
    assert np.shape(compile_expression("3", ("x", "y"))(x, x)) == x.shape


def test_time_variable():
    f = compile_expression("cos(2*pi*t) * y", ("x", "y", "t"))
    assert f(0.0, 2.0, 0.5) == pytest.approx(-2.0)


def test_surrounding_whitespace_is_ignored():
    assert float(parse("  4 ", variables=())) == 4.0


@pytest.mark.parametrize("text", ["__import__('os')", "x.real", "lambda: 1", "z + 1", "'a'", "sqrt(x)",
                                  "x if y else 1", "[x]", "True", "sin(x, y)"])
def test_rejects_anything_outside_the_grammar(text):
    with pytest.raises(ExpressionError):
        parse(text)


def test_syntax_error():
    with pytest.raises(ExpressionError):
        parse("x +* y")


@pytest.mark.parametrize("text", ["1 / (x - x)", "1 / 0", "x + 1 / (y - y)"])
def test_non_finite_expressions_are_rejected(text):
    with pytest.raises(ExpressionError, match="not finite"):
        parse(text, variables=("x", "y"))
