import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Sequence, Tuple

import numpy as np
import sympy
from scipy.integrate import quad_vec

from .errors import ConfigError, QuadratureError, TensorShapeError
from .expr import is_exact_number, symbol, to_sympy_number
from .manifold import ManifoldConfig
from .settings import DEFAULT_SETTINGS, Settings

logger = logging.getLogger(__name__)

_T = sympy.Symbol('t', real=True)
_SIGMA = sympy.Symbol('sigma', real=True)


@dataclass(frozen=True)
class GeodesicInitialData:
    alpha: object
    xi: Tuple
    alpha_star: object
    xi_star: Tuple
    beta: object
    eta: Tuple
    beta_star: object
    eta_star: Tuple

    @classmethod
    def from_vectors(cls, config: ManifoldConfig, point: Sequence, velocity: Sequence) -> 'GeodesicInitialData':
        n = config.dimension
        if len(point) != n or len(velocity) != n:
            raise TensorShapeError(f"Initial point and velocity need {n} coordinates")
        half = 2 * config.p + 3
        return cls(point[0], tuple(point[1:half]), point[half], tuple(point[half + 1:]),
                   velocity[0], tuple(velocity[1:half]), velocity[half], tuple(velocity[half + 1:]))

    @property
    def point(self) -> Tuple:
        return (self.alpha,) + self.xi + (self.alpha_star,) + self.xi_star

    @property
    def velocity(self) -> Tuple:
        return (self.beta,) + self.eta + (self.beta_star,) + self.eta_star

    @property
    def exact(self) -> bool:
        return all(is_exact_number(v) for v in self.point + self.velocity)

    def scaled(self, a) -> 'GeodesicInitialData':
        """Same base point, velocity multiplied by a"""
        return GeodesicInitialData(self.alpha, self.xi, self.alpha_star, self.xi_star,
                                   a * self.beta, tuple(a * v for v in self.eta),
                                   a * self.beta_star, tuple(a * v for v in self.eta_star))


@lru_cache(maxsize=1024)
def _symbolic_integrals(config: ManifoldConfig, xi: Tuple, eta: Tuple) -> Tuple[sympy.Expr, ...]:
    """I_i as expressions in t, or None where sympy leaves an unevaluated integral"""
    line = {symbol(name): x + _SIGMA * e for name, x, e in zip(config.s_names, xi, eta)}
    results = []
    for gradient in config.gradient_trees:
        integrand = sympy.expand((_T - _SIGMA) * gradient.xreplace(line))
        integral = sympy.integrate(integrand, (_SIGMA, 0, _T))
        if integral.has(sympy.Integral):
            logger.debug("no antiderivative for %s, falling back to quadrature", integrand)
            return None
        results.append(sympy.expand(integral))
    return tuple(results)


def _numeric_integrals(config: ManifoldConfig, xi: Sequence[float], eta: Sequence[float], t: float,
                       settings: Settings) -> np.ndarray:
    if t == 0:
        return np.zeros(len(xi))
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)

    # substitute sigma = u t to integrate over [0, 1]
    def integrand(u):
        return (1.0 - u) * config.gradient(xi + (u * t) * eta)

    value, error = quad_vec(integrand, 0.0, 1.0, epsabs=settings.quadrature_abs_tol,
                            epsrel=settings.quadrature_rel_tol, norm='max')
    value = value * t * t
    error = error * t * t
    tolerance = max(settings.quadrature_abs_tol, 1e-10 * float(np.max(np.abs(value))))
    if not np.all(np.isfinite(value)) or error > tolerance:
        raise QuadratureError(float(error), tolerance)
    return value


def double_integrals(config: ManifoldConfig, xi: Sequence, eta: Sequence, t,
                     settings: Settings = DEFAULT_SETTINGS) -> Tuple:
    """(I_0(t), ..., I_{2p+1}(t)) in the order of the s coordinates"""
    if all(is_exact_number(v) for v in tuple(xi) + tuple(eta) + (t,)):
        key_xi = tuple(to_sympy_number(v) for v in xi)
        key_eta = tuple(to_sympy_number(v) for v in eta)
        symbolic = _symbolic_integrals(config, key_xi, key_eta)
        if symbolic is not None:
            t = to_sympy_number(t)
            return tuple(expr.xreplace({_T: t}) for expr in symbolic)
    return tuple(float(v) for v in _numeric_integrals(config, [float(v) for v in xi], [float(v) for v in eta],
                                                      float(t), settings))


def _values(exact: bool, values):
    return tuple(values) if exact else tuple(float(v) for v in values)


def geodesic_closed(config: ManifoldConfig, data: GeodesicInitialData, t,
                    settings: Settings = DEFAULT_SETTINGS) -> Tuple:
    """
    gamma(t) in chart order. With gamma(0) = (alpha, xi, alpha*, xi*) and
    gamma'(0) = (beta, eta, beta*, eta*):

        x(t)    = alpha + beta t
        s(t)    = xi + eta t
        x*(t)   = alpha* + beta* t + 2 beta sum_i eta_i I_i(t)
        s*_i(t) = xi*_i + eta*_i t - beta^2 I_i(t)

    where I_i(t) = int_0^t (t - sigma) dF/ds_i(xi + sigma eta) dsigma.
    """
    integrals = double_integrals(config, data.xi, data.eta, t, settings)
    exact = data.exact and is_exact_number(t) and all(isinstance(v, sympy.Basic) for v in integrals)
    if exact:
        t = to_sympy_number(t)
        alpha, beta = to_sympy_number(data.alpha), to_sympy_number(data.beta)
        alpha_star, beta_star = to_sympy_number(data.alpha_star), to_sympy_number(data.beta_star)
        xi = [to_sympy_number(v) for v in data.xi]
        eta = [to_sympy_number(v) for v in data.eta]
        xi_star = [to_sympy_number(v) for v in data.xi_star]
        eta_star = [to_sympy_number(v) for v in data.eta_star]
    else:
        t = float(t)
        alpha, beta = float(data.alpha), float(data.beta)
        alpha_star, beta_star = float(data.alpha_star), float(data.beta_star)
        xi = [float(v) for v in data.xi]
        eta = [float(v) for v in data.eta]
        xi_star = [float(v) for v in data.xi_star]
        eta_star = [float(v) for v in data.eta_star]
        integrals = [float(v) for v in integrals]
    x = alpha + beta * t
    s = [a + b * t for a, b in zip(xi, eta)]
    x_star = alpha_star + beta_star * t + 2 * beta * sum(e * i for e, i in zip(eta, integrals))
    s_star = [a + b * t - beta * beta * i for a, b, i in zip(xi_star, eta_star, integrals)]
    return _values(exact, [x] + s + [x_star] + s_star)


def _acceleration(config: ManifoldConfig, position: np.ndarray, velocity: np.ndarray) -> np.ndarray:
    half = 2 * config.p + 3
    gradient = config.gradient(position[1:half])
    dx = velocity[0]
    ds = velocity[1:half]
    acceleration = np.zeros_like(position)
    acceleration[half] = 2.0 * dx * float(np.dot(ds, gradient))
    acceleration[half + 1:] = -dx * dx * gradient
    return acceleration


def geodesic_numeric(config: ManifoldConfig, data: GeodesicInitialData, t: float, step: float) -> Tuple[float, ...]:
    """Classical fixed-step RK4 on the geodesic equations"""
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    position = np.array([float(v) for v in data.point])
    velocity = np.array([float(v) for v in data.velocity])
    t = float(t)
    steps = max(1, math.ceil(abs(t) / step))
    h = t / steps
    for _ in range(steps):
        k1x, k1v = velocity, _acceleration(config, position, velocity)
        k2x = velocity + 0.5 * h * k1v
        k2v = _acceleration(config, position + 0.5 * h * k1x, k2x)
        k3x = velocity + 0.5 * h * k2v
        k3v = _acceleration(config, position + 0.5 * h * k2x, k3x)
        k4x = velocity + h * k3v
        k4v = _acceleration(config, position + h * k3x, k4x)
        position = position + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        velocity = velocity + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
    return tuple(float(v) for v in position)


def exp_map(config: ManifoldConfig, point: Sequence, vector: Sequence,
            settings: Settings = DEFAULT_SETTINGS) -> Tuple:
    return geodesic_closed(config, GeodesicInitialData.from_vectors(config, point, vector), 1, settings)


def log_map(config: ManifoldConfig, point: Sequence, target: Sequence,
            settings: Settings = DEFAULT_SETTINGS) -> Tuple:
    """The initial velocity of the unique geodesic from point to target in unit time"""
    n = config.dimension
    if len(point) != n or len(target) != n:
        raise TensorShapeError(f"Points need {n} coordinates")
    exact = all(is_exact_number(v) for v in tuple(point) + tuple(target))
    convert = to_sympy_number if exact else float
    P = [convert(v) for v in point]
    Q = [convert(v) for v in target]
    half = 2 * config.p + 3
    beta = Q[0] - P[0]
    eta = [q - p for q, p in zip(Q[1:half], P[1:half])]
    integrals = double_integrals(config, P[1:half], eta, convert(1), settings)
    if not all(isinstance(v, sympy.Basic) for v in integrals):
        exact = False
        P, Q = [float(v) for v in P], [float(v) for v in Q]
        beta, eta = float(beta), [float(v) for v in eta]
        integrals = [float(v) for v in integrals]
    beta_star = Q[half] - P[half] - 2 * beta * sum(e * i for e, i in zip(eta, integrals))
    eta_star = [q - p + beta * beta * i for q, p, i in zip(Q[half + 1:], P[half + 1:], integrals)]
    return _values(exact, [beta] + eta + [beta_star] + eta_star)


def ode_residual(config: ManifoldConfig, data: GeodesicInitialData, times: Sequence,
                 settings: Settings = DEFAULT_SETTINGS) -> float:
    """
    Largest violation of the geodesic equations along the closed-form curve
    at the given times.

    The curve is differentiated symbolically in t, not by finite
    differences, so only exact initial data is accepted; floating data
    raises ConfigError. The residual itself is evaluated in floating point.
    """
    if not data.exact:
        raise ConfigError("ode_residual differentiates the curve symbolically and needs exact initial data")
    curve = geodesic_closed(config, data, _T, settings)
    if not all(isinstance(c, sympy.Basic) for c in curve):
        raise ConfigError(f"No closed-form antiderivative for {config}")
    half = 2 * config.p + 3
    along = {symbol(name): curve[1 + i] for i, name in enumerate(config.s_names)}
    gradient = [g.xreplace(along) for g in config.gradient_trees]
    first = [sympy.diff(c, _T) for c in curve]
    second = [sympy.diff(c, _T, 2) for c in curve]
    equations = [second[0]] + second[1:half]
    equations.append(second[half] - 2 * first[0] * sum(first[1 + i] * g for i, g in enumerate(gradient)))
    equations += [second[half + 1 + i] + first[0] ** 2 * g for i, g in enumerate(gradient)]
    worst = 0.0
    for t in times:
        t = to_sympy_number(t)
        for equation in equations:
            worst = max(worst, abs(float(equation.xreplace({_T: t}))))
    return worst


def sample_trajectory(config: ManifoldConfig, data: GeodesicInitialData, times: Sequence,
                      settings: Settings = DEFAULT_SETTINGS) -> List[Tuple[float, ...]]:
    """Rows (t, coordinates...) as floats"""
    rows = []
    for t in times:
        rows.append((float(t),) + tuple(float(v) for v in geodesic_closed(config, data, t, settings)))
    return rows
