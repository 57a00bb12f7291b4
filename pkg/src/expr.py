import logging
import numbers
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, FrozenSet, Iterable, List, Mapping, Sequence, Tuple, Union

import sympy
from sympy import default_sort_key

from .errors import ExpressionError, MissingVariableError, ParseError

logger = logging.getLogger(__name__)

VARIABLE_PATTERN = re.compile(r"^(x|xs|z\d+|zt\d+|zs\d+|zts\d+)$")
_INTEGER = re.compile(r"^[+-]?\d+$")
_RATIONAL = re.compile(r"^[+-]?\d+/\d+$")
_DECIMAL = re.compile(r"^[+-]?(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?$")

Number = Union[int, float, Fraction, sympy.Expr]


@lru_cache(maxsize=None)
def symbol(name: str) -> sympy.Symbol:
    """The sympy symbol used for a coordinate id"""
    if not VARIABLE_PATTERN.match(name):
        raise ExpressionError(f"'{name}' is not a coordinate id", variable=name)
    return sympy.Symbol(name, real=True)


def is_exact_number(value) -> bool:
    if isinstance(value, bool):
        return False
    if isinstance(value, numbers.Rational):
        return True
    if isinstance(value, sympy.Basic):
        return not value.has(sympy.Float)
    return False


def to_sympy_number(value: Number) -> sympy.Expr:
    if isinstance(value, bool):
        raise ExpressionError(f"Boolean {value!r} is not a number")
    if isinstance(value, sympy.Basic):
        return value
    if isinstance(value, numbers.Integral):
        return sympy.Integer(int(value))
    if isinstance(value, numbers.Rational):
        return sympy.Rational(value.numerator, value.denominator)
    if isinstance(value, numbers.Real):
        return sympy.Float(float(value))
    raise ExpressionError(f"Cannot use {value!r} as a number")


def _check_admissible(node: sympy.Basic) -> None:
    if node.is_Number:
        if not node.is_finite:
            raise ExpressionError(f"Non-finite constant {node}")
        return
    if node is sympy.E:
        return
    if node.is_Symbol:
        if not VARIABLE_PATTERN.match(node.name):
            raise ExpressionError(f"Unknown variable '{node.name}'", variable=node.name)
        return
    if node.is_Add or node.is_Mul:
        for arg in node.args:
            _check_admissible(arg)
        return
    if node.is_Pow:
        base, exponent = node.args
        if not (exponent.is_Integer and exponent >= 0):
            raise ExpressionError(f"Only non-negative integer powers are admissible, got {node}")
        _check_admissible(base)
        return
    if isinstance(node, sympy.exp):
        _check_admissible(node.args[0])
        return
    raise ExpressionError(f"Inadmissible node {type(node).__name__}: {node}")


@dataclass(frozen=True)
class Expression:
    tree: sympy.Expr

    def __post_init__(self):
        tree = sympy.sympify(self.tree)
        _check_admissible(tree)
        object.__setattr__(self, 'tree', tree)

    # construction

    @classmethod
    def constant(cls, value: Number) -> 'Expression':
        return cls(to_sympy_number(value))

    @classmethod
    def variable(cls, name: str) -> 'Expression':
        return cls(symbol(name))

    @classmethod
    def parse(cls, text: str) -> 'Expression':
        return parse_sexpr(text)

    @classmethod
    def zero(cls) -> 'Expression':
        return cls(sympy.Integer(0))

    @staticmethod
    def _coerce(other) -> sympy.Expr:
        if isinstance(other, Expression):
            return other.tree
        return to_sympy_number(other)

    def __add__(self, other):
        return Expression(self.tree + self._coerce(other))

    def __radd__(self, other):
        return Expression(self._coerce(other) + self.tree)

    def __sub__(self, other):
        return Expression(self.tree - self._coerce(other))

    def __rsub__(self, other):
        return Expression(self._coerce(other) - self.tree)

    def __mul__(self, other):
        return Expression(self.tree * self._coerce(other))

    def __rmul__(self, other):
        return Expression(self._coerce(other) * self.tree)

    def __neg__(self):
        return Expression(-self.tree)

    def __pow__(self, exponent: int):
        if not isinstance(exponent, int) or exponent < 0:
            raise ExpressionError(f"Only non-negative integer powers are admissible, got {exponent!r}")
        return Expression(self.tree ** exponent)

    def exp(self) -> 'Expression':
        return Expression(sympy.exp(self.tree))

    # inspection

    @property
    def variables(self) -> FrozenSet[str]:
        return frozenset(s.name for s in self.tree.free_symbols)

    @property
    def is_zero(self) -> bool:
        return self.tree == 0

    def is_polynomial(self) -> bool:
        return not self.tree.has(sympy.exp) and self.tree.is_polynomial(*self.tree.free_symbols)

    def total_degree(self) -> int:
        """Total degree of a polynomial expression (0 for constants)"""
        if not self.is_polynomial():
            raise ExpressionError(f"{self} is not a polynomial")
        if not self.tree.free_symbols:
            return 0
        return sympy.Poly(self.tree, *sorted(self.tree.free_symbols, key=default_sort_key)).total_degree()

    # calculus

    def differentiate(self, var: str) -> 'Expression':
        return Expression(sympy.diff(self.tree, symbol(var)))

    def multi_partial(self, variables: Iterable[str]) -> 'Expression':
        names = tuple(sorted(variables))
        for name in names:
            symbol(name)
        return Expression(_multi_partial(self.tree, names))

    # evaluation

    def evaluate(self, point: Mapping[str, Number], exact: bool = True):
        """
        Evaluate at a point given as {variable id: value}.

        Returns a sympy number when every bound value is exact and exact
        evaluation was requested, otherwise a float.
        """
        names = sorted(self.variables)
        for name in names:
            if name not in point:
                raise MissingVariableError(name)
        values = [point[name] for name in names]
        if exact and all(is_exact_number(v) for v in values) and not self.tree.has(sympy.Float):
            return self.tree.xreplace({symbol(n): to_sympy_number(v) for n, v in zip(names, values)})
        compiled = _compile(self.tree, tuple(names))
        return float(compiled(*[float(v) for v in values]))

    def compile(self, names: Sequence[str]) -> Callable[..., float]:
        """Float evaluator taking positional values for the given variable ids"""
        missing = self.variables.difference(names)
        if missing:
            raise MissingVariableError(sorted(missing)[0])
        return _compile(self.tree, tuple(names))

    # text form

    def to_sexpr(self) -> str:
        return _write(self.tree)

    def __str__(self):
        return self.to_sexpr()

    def __repr__(self):
        return f"Expression({self.to_sexpr()!r})"


@lru_cache(maxsize=4096)
def _multi_partial(tree: sympy.Expr, names: Tuple[str, ...]) -> sympy.Expr:
    result = tree
    for name in names:
        result = sympy.diff(result, symbol(name))
        if result == 0:
            break
    return result


@lru_cache(maxsize=4096)
def _compile(tree: sympy.Expr, names: Tuple[str, ...]) -> Callable[..., float]:
    logger.debug("compiling %s over %s", tree, names)
    return sympy.lambdify([symbol(n) for n in names], tree, modules='math')


def _write(node: sympy.Basic) -> str:
    if node is sympy.E:
        return "(exp 1)"
    if node.is_Integer:
        return str(int(node))
    if node.is_Rational:
        return f"{node.p}/{node.q}"
    if node.is_Float:
        return repr(float(node))
    if node.is_Symbol:
        return node.name
    if node.is_Add:
        return "(+ " + " ".join(_write(a) for a in sorted(node.args, key=default_sort_key)) + ")"
    if node.is_Mul:
        return "(* " + " ".join(_write(a) for a in sorted(node.args, key=default_sort_key)) + ")"
    if node.is_Pow:
        return f"(^ {_write(node.args[0])} {int(node.args[1])})"
    if isinstance(node, sympy.exp):
        return f"(exp {_write(node.args[0])})"
    raise ExpressionError(f"Cannot write node {node}")


# S-expression reader

def _tokenize(text: str) -> List[Tuple[str, int, int]]:
    tokens = []
    line, column = 1, 1
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == '\n':
            line += 1
            column = 1
            i += 1
            continue
        if ch.isspace():
            column += 1
            i += 1
            continue
        if ch in '()':
            tokens.append((ch, line, column))
            column += 1
            i += 1
            continue
        start_column = column
        j = i
        while j < len(text) and not text[j].isspace() and text[j] not in '()':
            j += 1
        tokens.append((text[i:j], line, start_column))
        column += j - i
        i = j
    return tokens


def _atom(token: str, line: int, column: int) -> sympy.Expr:
    if _INTEGER.match(token):
        return sympy.Integer(int(token))
    if _RATIONAL.match(token):
        numerator, denominator = token.split('/')
        if int(denominator) == 0:
            raise ParseError("Zero denominator", line, column)
        return sympy.Rational(int(numerator), int(denominator))
    if _DECIMAL.match(token):
        return sympy.Float(float(token))
    if VARIABLE_PATTERN.match(token):
        return symbol(token)
    raise ParseError(f"Unknown atom '{token}'", line, column)


_ARITY = {'+': (0, None), '*': (0, None), '-': (1, 2), '^': (2, 2), 'exp': (1, 1)}


def parse_sexpr(text: str) -> Expression:
    """Read text such as (+ (* z1 (^ z0 2)) (exp z0))"""
    tokens = _tokenize(text)
    if not tokens:
        raise ParseError("Empty expression", 1, 1)
    position = 0

    def read():
        nonlocal position
        if position >= len(tokens):
            last = tokens[-1]
            raise ParseError("Unexpected end of input", last[1], last[2] + len(last[0]))
        token, line, column = tokens[position]
        position += 1
        if token == ')':
            raise ParseError("Unexpected ')'", line, column)
        if token != '(':
            return _atom(token, line, column)
        if position >= len(tokens):
            raise ParseError("Unexpected end of input after '('", line, column)
        operator, op_line, op_column = tokens[position]
        position += 1
        if operator not in _ARITY:
            raise ParseError(f"Unknown operator '{operator}'", op_line, op_column)
        args = []
        while True:
            if position >= len(tokens):
                raise ParseError("Missing ')'", line, column)
            if tokens[position][0] == ')':
                position += 1
                break
            _, arg_line, arg_column = tokens[position]
            args.append((read(), arg_line, arg_column))
        low, high = _ARITY[operator]
        if len(args) < low or (high is not None and len(args) > high):
            raise ParseError(f"Operator '{operator}' got {len(args)} arguments", op_line, op_column)
        values = [a[0] for a in args]
        if operator == '+':
            return sympy.Add(*values)
        if operator == '*':
            return sympy.Mul(*values)
        if operator == '-':
            return -values[0] if len(values) == 1 else values[0] - values[1]
        if operator == '^':
            exponent = values[1]
            if not (exponent.is_Integer and exponent >= 0):
                raise ParseError("Exponent must be a non-negative integer", args[1][1], args[1][2])
            return values[0] ** exponent
        return sympy.exp(values[0])

    tree = read()
    if position != len(tokens):
        token, line, column = tokens[position]
        raise ParseError(f"Trailing input '{token}'", line, column)
    try:
        return Expression(tree)
    except ExpressionError as e:
        raise ParseError(e.message, tokens[0][1], tokens[0][2]) from e
