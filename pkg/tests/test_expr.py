import math
from fractions import Fraction

import numpy as np
import pytest
import sympy

from src.errors import ExpressionError, MissingVariableError, ParseError
from src.expr import Expression, parse_sexpr, symbol


def test_parse_collects_variables():
    f = Expression.parse('(+ (* z1 (^ z0 2)) (exp z0))')
    assert f.variables == {'z0', 'z1'}
    assert not f.is_polynomial()


def test_written_form_parses_back_to_the_same_tree():
    f = Expression.parse('(+ (* 3/4 z1 (^ z0 2)) (- (exp (* 2 z0))) 5)')
    assert Expression.parse(f.to_sexpr()) == f


def test_rational_constant_is_written_as_fraction():
    assert Expression.constant(Fraction(3, 4)).to_sexpr() == '3/4'
    assert Expression.constant(sympy.E).to_sexpr() == '(exp 1)'


def test_arithmetic_operators():
    z0 = Expression.variable('z0')
    assert (z0 * 2 + 1).evaluate({'z0': 3}) == 7
    assert (1 - z0).evaluate({'z0': 3}) == -2
    assert (z0 ** 3).evaluate({'z0': Fraction(1, 2)}) == sympy.Rational(1, 8)


def test_negative_power_rejected():
    with pytest.raises(ExpressionError):
        Expression.variable('z0') ** -1
    with pytest.raises(ExpressionError):
        Expression(symbol('z0') ** sympy.Rational(1, 2))


def test_unknown_symbol_rejected():
    with pytest.raises(ExpressionError):
        symbol('y')


def test_differentiation():
    f = Expression.parse('(* z1 (^ z0 2))')
    assert f.differentiate('z0').evaluate({'z0': 3, 'z1': 2}) == 12
    assert f.multi_partial(['z0', 'z1', 'z0']).evaluate({}) == 2
    assert f.multi_partial(['z1', 'z1']).is_zero


def test_total_degree():
    assert Expression.parse('(+ (* z1 (^ z0 2)) z0)').total_degree() == 3
    assert Expression.parse('7').total_degree() == 0
    with pytest.raises(ExpressionError):
        Expression.parse('(exp z0)').total_degree()


def test_exact_evaluation_stays_rational():
    value = Expression.parse('(+ (^ z0 2) 1/3)').evaluate({'z0': Fraction(1, 2)})
    assert value == sympy.Rational(7, 12)
    assert isinstance(value, sympy.Rational)


def test_float_evaluation():
    value = Expression.parse('(exp z0)').evaluate({'z0': 0.5})
    assert isinstance(value, float)
    assert value == pytest.approx(math.exp(0.5), rel=1e-15)
    assert Expression.parse('(* 2 z0)').evaluate({'z0': 1}, exact=False) == 2.0


def test_missing_variable():
    with pytest.raises(MissingVariableError) as info:
        Expression.parse('(* z0 z1)').evaluate({'z0': 1})
    assert info.value.variable == 'z1'


def test_compile_takes_positional_values():
    fn = Expression.parse('(+ z0 (* 2 z1))').compile(['z1', 'z0'])
    assert fn(1.0, 3.0) == 5.0
    with pytest.raises(MissingVariableError):
        Expression.parse('(+ z0 z2)').compile(['z0'])


@pytest.mark.parametrize('text, line, column', [
    ('(+ z0', 1, 1),
    ('(foo z0)', 1, 2),
    ('(+ z0 y)', 1, 7),
    ('(^ z0 -1)', 1, 7),
    ('(+ z0\n  (bar z1))', 2, 4),
    ('z0 z1', 1, 4),
    (')', 1, 1),
])
def test_parse_errors_carry_position(text, line, column):
    with pytest.raises(ParseError) as info:
        parse_sexpr(text)
    assert (info.value.line, info.value.column) == (line, column)


def test_empty_input():
    with pytest.raises(ParseError):
        parse_sexpr('   ')


def test_binary_minus_and_negation():
    assert Expression.parse('(- z0 z1)').evaluate({'z0': 5, 'z1': 2}) == 3
    assert Expression.parse('(- z0)').evaluate({'z0': 5}) == -5


MIXED = '(+ (* z1 (^ z0 3)) (* 3/2 z0 zt0) (exp (* 2 z0)) (* z1 z1 zt1))'


def test_derivatives_match_central_differences():
    f = Expression.parse(MIXED)
    names = sorted(f.variables)
    rng = np.random.default_rng(11)
    h = 1e-5
    for _ in range(10):
        point = dict(zip(names, rng.uniform(-1, 1, size=len(names))))
        for var in names:
            forward = f.evaluate({**point, var: point[var] + h})
            backward = f.evaluate({**point, var: point[var] - h})
            expected = (forward - backward) / (2 * h)
            assert f.differentiate(var).evaluate(point) == pytest.approx(expected, rel=1e-6, abs=1e-8)


def test_mixed_partials_commute():
    f = Expression.parse(MIXED)
    rng = np.random.default_rng(12)
    for _ in range(5):
        point = {name: Fraction(int(rng.integers(-9, 10)), int(rng.integers(1, 5))) for name in f.variables}
        for a, b in (('z0', 'z1'), ('z0', 'zt0'), ('z1', 'zt1')):
            ab = f.differentiate(a).differentiate(b).evaluate(point)
            ba = f.differentiate(b).differentiate(a).evaluate(point)
            assert ab == ba
            assert f.multi_partial([b, a]).evaluate(point) == ab
