import logging
from collections import defaultdict
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import sympy
from sympy.utilities.iterables import multiset_permutations

from .errors import CertificationError, ConfigError, OracleLimitError, TensorShapeError
from .expr import Expression, is_exact_number, symbol
from .settings import DEFAULT_SETTINGS
from .tensor import CoordinateChart, SparseTensor, Symmetry, Variance, is_zero

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlaneWaveShape:
    """f = psi(z_0) + z_1 z_0^2 + ... + z_m z_0^{m+1}"""

    m: int
    psi: Expression


@dataclass(frozen=True)
class ManifoldConfig:
    p: int
    f: Expression

    def __post_init__(self):
        if isinstance(self.p, bool) or not isinstance(self.p, int) or self.p < 1:
            raise ConfigError(f"p must be an integer >= 1, got {self.p!r}")
        if isinstance(self.f, str):
            object.__setattr__(self, 'f', Expression.parse(self.f))
        elif not isinstance(self.f, Expression):
            object.__setattr__(self, 'f', Expression(self.f))
        allowed = {f'z{i}' for i in range(self.p + 1)}
        stray = sorted(self.f.variables - allowed)
        if stray:
            raise ConfigError(f"f may only depend on z0..z{self.p}, found {', '.join(stray)}", variables=stray)

    @classmethod
    def from_sexpr(cls, p: int, text: str) -> 'ManifoldConfig':
        return cls(p, Expression.parse(text))

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> 'ManifoldConfig':
        if not isinstance(data, Mapping):
            raise ConfigError("Config must be a JSON object")
        missing = [key for key in ('p', 'f') if key not in data]
        if missing:
            raise ConfigError(f"Config is missing {', '.join(missing)}", missing=missing)
        if not isinstance(data['f'], str):
            raise ConfigError("'f' must be an s-expression string")
        return cls(data['p'], Expression.parse(data['f']))

    def to_json(self) -> Dict[str, Any]:
        return {'p': self.p, 'f': self.f.to_sexpr()}

    @cached_property
    def chart(self) -> CoordinateChart:
        return CoordinateChart(self.p)

    @property
    def dimension(self) -> int:
        return 6 + 4 * self.p

    @property
    def signature(self) -> Tuple[int, int]:
        return 3 + 2 * self.p, 3 + 2 * self.p

    @cached_property
    def F(self) -> Expression:
        tree = self.f.tree
        for i in range(self.p + 1):
            tree = tree + symbol(f'z{i}') * symbol(f'zt{i}')
        return Expression(tree)

    @cached_property
    def s_names(self) -> Tuple[str, ...]:
        return tuple(self.chart.name(i) for i in self.chart.s_indices)

    @cached_property
    def gradient_trees(self) -> Tuple[sympy.Expr, ...]:
        """dF/ds_i for s = (z_0..z_p, zt_0..zt_p)"""
        return tuple(sympy.diff(self.F.tree, symbol(n)) for n in self.s_names)

    @cached_property
    def gradient(self) -> Callable[[Sequence[float]], np.ndarray]:
        fn = sympy.lambdify([symbol(n) for n in self.s_names], list(self.gradient_trees), modules='numpy')
        return lambda s: np.array(fn(*s), dtype=float)

    @cached_property
    def shape(self) -> Optional[PlaneWaveShape]:
        z0 = symbol('z0')
        tree = sympy.expand(self.f.tree)
        coefficients = [sympy.expand(sympy.diff(tree, symbol(f'z{j}'))) for j in range(1, self.p + 1)]
        m = max((j for j, c in enumerate(coefficients, start=1) if c != 0), default=0)
        rest = tree
        for j in range(1, m + 1):
            if sympy.expand(coefficients[j - 1] - z0 ** (j + 1)) != 0:
                return None
            rest = rest - symbol(f'z{j}') * z0 ** (j + 1)
        rest = sympy.expand(rest)
        if not rest.free_symbols <= {z0}:
            return None
        return PlaneWaveShape(m, Expression(rest))

    def psi_derivative(self, n: int) -> Expression:
        if self.shape is None:
            raise ConfigError(f"f = {self.f} does not have the psi(z0) + z1 z0^2 + ... shape")
        return self.shape.psi.multi_partial(['z0'] * n)

    def __str__(self):
        return f"M(p={self.p}, f={self.f})"


def is_exact_point(point: Sequence) -> bool:
    return all(is_exact_number(v) for v in point)


def _bindings(config: ManifoldConfig, point: Sequence) -> Dict[str, Any]:
    if len(point) != config.dimension:
        raise TensorShapeError(f"Point has {len(point)} coordinates, expected {config.dimension}")
    return config.chart.bindings(point)


def random_point(config: ManifoldConfig, rng: np.random.Generator, exact: bool = True,
                 spread: int = 2) -> Tuple:
    """Rational (or float) coordinates drawn from [-spread, spread]"""
    values = []
    for _ in range(config.dimension):
        denominator = int(rng.integers(1, 9))
        numerator = int(rng.integers(-spread * denominator, spread * denominator + 1))
        value = sympy.Rational(numerator, denominator)
        values.append(value if exact else float(value))
    return tuple(values)


# symbolic fields

@lru_cache(maxsize=None)
def coordinates(config: ManifoldConfig) -> Tuple[sympy.Symbol, ...]:
    return tuple(symbol(name) for name in config.chart.names)


# g = -2F dx^2 + 2 dx dxs + 2 sum ds_i dss_i
@lru_cache(maxsize=None)
def metric_field(config: ManifoldConfig) -> SparseTensor:
    chart = config.chart
    one = sympy.Integer(1)
    entries = {(chart.x, chart.x): -2 * config.F.tree, (chart.x, chart.xs): one}
    for i in range(config.p + 1):
        entries[(chart.z(i), chart.zs(i))] = one
        entries[(chart.zt(i), chart.zts(i))] = one
    return SparseTensor.covariant(config.dimension, 2, entries, Symmetry.PAIR)


@lru_cache(maxsize=None)
def metric_inverse_field(config: ManifoldConfig) -> SparseTensor:
    chart = config.chart
    one = sympy.Integer(1)
    entries = {(chart.x, chart.xs): one, (chart.xs, chart.xs): 2 * config.F.tree}
    for i in chart.s_indices:
        entries[(i, chart.dual(i))] = one
    return SparseTensor.build(config.dimension, [Variance.CONTRAVARIANT] * 2, entries, Symmetry.PAIR)


@lru_cache(maxsize=None)
def christoffel_field(config: ManifoldConfig) -> SparseTensor:
    """Gamma^c_ab with slot order (c, a, b)"""
    chart = config.chart
    entries = {}
    for i, gradient in zip(chart.s_indices, config.gradient_trees):
        entries[(chart.dual(i), chart.x, chart.x)] = gradient
        entries[(chart.xs, chart.x, i)] = -gradient
        entries[(chart.xs, i, chart.x)] = -gradient
    variance = [Variance.CONTRAVARIANT, Variance.COVARIANT, Variance.COVARIANT]
    return SparseTensor.build(config.dimension, variance, entries)


def _expanded(dimension: int, variance, entries: Mapping) -> SparseTensor:
    return SparseTensor.build(dimension, variance, {i: sympy.expand(v) for i, v in entries.items()})


def levi_civita(metric: SparseTensor, metric_inverse: SparseTensor,
                coords: Sequence[sympy.Symbol]) -> SparseTensor:
    """Gamma^c_ab = 1/2 g^{cd} (d_a g_bd + d_b g_ad - d_d g_ab) for a sparse symbolic metric field"""
    index_of = {s: i for i, s in enumerate(coords)}
    lowered = defaultdict(int)
    for (u, v), g in metric.components().items():
        for s in g.free_symbols:
            e = index_of[s]
            half = sympy.diff(g, s) / 2
            lowered[(e, u, v)] += half
            lowered[(u, e, v)] += half
            lowered[(u, v, e)] -= half
    rows = defaultdict(dict)
    for (a, b), value in metric_inverse.components().items():
        rows[a][b] = value
    result = defaultdict(int)
    for (a, b, d), value in lowered.items():
        for c, inverse in rows[d].items():
            result[(c, a, b)] += inverse * value
    variance = [Variance.CONTRAVARIANT, Variance.COVARIANT, Variance.COVARIANT]
    return _expanded(metric.dimension, variance, result)


def riemann_from_christoffel(christoffel: SparseTensor, metric: SparseTensor,
                             coords: Sequence[sympy.Symbol]) -> SparseTensor:
    """
    R^d_abc = d_a G^d_bc - d_b G^d_ac + G^d_ae G^e_bc - G^d_be G^e_ac,
    lowered to R(a, b, c, d) = g(R(d_a, d_b) d_c, d_d).
    """
    index_of = {s: i for i, s in enumerate(coords)}
    gammas = christoffel.components()
    by_upper = defaultdict(list)
    upper = defaultdict(int)
    for (d, u, v), gamma in gammas.items():
        by_upper[d].append((u, v, gamma))
        for s in gamma.free_symbols:
            e = index_of[s]
            derivative = sympy.diff(gamma, s)
            upper[(d, e, u, v)] += derivative
            upper[(d, u, e, v)] -= derivative
    for (d, u, e), first in gammas.items():
        for w, c, second in by_upper.get(e, ()):
            product = first * second
            upper[(d, u, w, c)] += product
            upper[(d, w, u, c)] -= product
    rows = defaultdict(dict)
    for (a, b), value in metric.components().items():
        rows[a][b] = value
    lowered = defaultdict(int)
    for (d, a, b, c), value in upper.items():
        for e, g in rows[d].items():
            lowered[(a, b, c, e)] += value * g
    return _expanded(metric.dimension, [Variance.COVARIANT] * 4, lowered)


def covariant_derivative(field: SparseTensor, christoffel: SparseTensor,
                         coords: Sequence[sympy.Symbol]) -> SparseTensor:
    """(nabla T)(xi_1..xi_r; eta) = d_eta T(xi) - sum_j T(.., Gamma(eta, xi_j), ..)"""
    if any(v is not Variance.COVARIANT for v in field.variance):
        raise TensorShapeError("covariant_derivative expects a covariant field")
    index_of = {s: i for i, s in enumerate(coords)}
    by_upper = defaultdict(list)
    for (c, eta, xi), gamma in christoffel.components().items():
        by_upper[c].append((eta, xi, gamma))
    result = defaultdict(int)
    for index, value in field.components().items():
        for s in value.free_symbols:
            result[index + (index_of[s],)] += sympy.diff(value, s)
        for j, c in enumerate(index):
            for eta, xi, gamma in by_upper.get(c, ()):
                result[index[:j] + (xi,) + index[j + 1:] + (eta,)] -= value * gamma
    return _expanded(field.dimension, field.variance + (Variance.COVARIANT,), result)


@lru_cache(maxsize=None)
def generic_christoffel_field(config: ManifoldConfig) -> SparseTensor:
    return levi_civita(metric_field(config), metric_inverse_field(config), coordinates(config))


@lru_cache(maxsize=None)
def _check_christoffel(config: ManifoldConfig) -> bool:
    closed = christoffel_field(config).components()
    generic = generic_christoffel_field(config).components()
    for index in sorted(set(closed) | set(generic)):
        difference = sympy.expand(closed.get(index, 0) - generic.get(index, 0))
        if difference != 0:
            raise CertificationError(
                f"Closed-form Christoffel symbol {index} disagrees with the Levi-Civita formula",
                index, difference,
            )
    logger.debug("Christoffel symbols of %s validated against the generic formula", config)
    return True


@lru_cache(maxsize=None)
def oracle_field(config: ManifoldConfig, k: int) -> SparseTensor:
    if k == 0:
        logger.debug("oracle: curvature of %s", config)
        return riemann_from_christoffel(generic_christoffel_field(config), metric_field(config), coordinates(config))
    logger.debug("oracle: nabla^%d R of %s", k, config)
    return covariant_derivative(oracle_field(config, k - 1), generic_christoffel_field(config), coordinates(config))


@lru_cache(maxsize=None)
def closed_terms(config: ManifoldConfig, k: int) -> Tuple[Tuple[Tuple[int, ...], Expression], ...]:
    """Sorted multisets of s-indices of size k+2 whose partial of F is not identically zero"""
    chart = config.chart
    s = chart.s_indices
    found = []

    def walk(start: int, chosen: List[int], tree: sympy.Expr):
        if len(chosen) == k + 2:
            found.append((tuple(chosen), Expression(tree)))
            return
        for position in range(start, len(s)):
            derivative = sympy.diff(tree, symbol(chart.name(s[position])))
            if derivative != 0:
                walk(position, chosen + [s[position]], derivative)

    walk(0, [], config.F.tree)
    return tuple(found)


# operations

def metric(config: ManifoldConfig, point: Sequence) -> SparseTensor:
    return metric_field(config).at(_bindings(config, point), is_exact_point(point))


def metric_inverse(config: ManifoldConfig, point: Sequence) -> SparseTensor:
    return metric_inverse_field(config).at(_bindings(config, point), is_exact_point(point))


def christoffel(config: ManifoldConfig, point: Sequence) -> SparseTensor:
    _check_christoffel(config)
    return christoffel_field(config).at(_bindings(config, point), is_exact_point(point))


def nabla_R_closed(config: ManifoldConfig, point: Sequence, k: int) -> SparseTensor:
    """nabla^k R at a point, slots (a, b, c, d; e_1..e_k)"""
    if k < 0:
        raise ConfigError(f"Derivative order must be non-negative, got {k}")
    bindings = _bindings(config, point)
    exact = is_exact_point(point)
    x = config.chart.x
    entries = {}
    for multiset, expression in closed_terms(config, k):
        value = expression.evaluate(bindings, exact)
        if is_zero(value):
            continue
        for ordering in multiset_permutations(list(multiset)):
            entries[(x, ordering[0], ordering[1], x) + tuple(ordering[2:])] = value
    return SparseTensor.covariant(config.dimension, 4 + k, entries, Symmetry.CURVATURE)


def covariant_derivative_oracle(config: ManifoldConfig, point: Sequence, k: int,
                                k_max: Optional[int] = None) -> SparseTensor:
    k_max = DEFAULT_SETTINGS.oracle_k_max if k_max is None else k_max
    if k < 0:
        raise ConfigError(f"Derivative order must be non-negative, got {k}")
    if k > k_max:
        raise OracleLimitError(k, k_max)
    return oracle_field(config, k).at(_bindings(config, point), is_exact_point(point))


def vanishes_identically(config: ManifoldConfig, k: int) -> bool:
    """nabla^k R is the zero field"""
    return not closed_terms(config, k)


def is_symmetric(config: ManifoldConfig) -> bool:
    """nabla R = 0, i.e. every third partial of F vanishes (f at most quadratic)"""
    return vanishes_identically(config, 1)

