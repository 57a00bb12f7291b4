import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy
from scipy.linalg import null_space

from .errors import ConfigError, PreconditionError, TensorShapeError
from .manifold import ManifoldConfig, is_exact_point, metric, nabla_R_closed
from .settings import DEFAULT_SETTINGS, Settings
from .tensor import (
    CoordinateChart, Frame, SparseTensor, Symmetry, as_number, as_number_is_rational,
    evaluate_on, json_number, pullback, sup_difference,
)

logger = logging.getLogger(__name__)

ONE = sympy.Integer(1)


@dataclass(frozen=True, eq=False)
class Model:
    dimension: int
    inner_product: SparseTensor
    tensors: Tuple[SparseTensor, ...]

    @property
    def k(self) -> int:
        return len(self.tensors) - 1

    def truncate(self, j: int) -> 'Model':
        if not 0 <= j <= self.k:
            raise ConfigError(f"Cannot truncate a model of order {self.k} to order {j}")
        return Model(self.dimension, self.inner_product, self.tensors[:j + 1])

    def to_json(self) -> Dict[str, Any]:
        return {
            'dimension': self.dimension,
            'order': self.k,
            'inner_product': self.inner_product.to_json(),
            'tensors': [t.to_json() for t in self.tensors],
        }


def build_model(p: int, k: int) -> Model:
    if p < 1:
        raise ConfigError(f"p must be >= 1, got {p}")
    if not 0 <= k <= p + 2:
        raise ConfigError(f"Model order must lie in 0..{p + 2}, got {k}")
    chart = CoordinateChart(p)
    n = chart.dimension
    pairs = {(chart.x, chart.xs): ONE}
    for i in range(p + 1):
        pairs[(chart.z(i), chart.zs(i))] = ONE
        pairs[(chart.zt(i), chart.zts(i))] = ONE
    inner = SparseTensor.covariant(n, 2, pairs, Symmetry.PAIR)

    X, Z0 = chart.x, chart.z(0)
    tensors = [SparseTensor.covariant(
        n, 4, {(X, chart.z(i), chart.zt(i), X): ONE for i in range(p + 1)}, Symmetry.CURVATURE)]
    for order in range(1, k + 1):
        entries = {}
        if order <= p:
            Zi = chart.z(order)
            entries[(X, Z0, Zi, X) + (Z0,) * order] = ONE
            for position in range(order):
                slots = [Z0] * order
                slots[position] = Zi
                entries[(X, Z0, Z0, X) + tuple(slots)] = ONE
        else:
            entries[(X, Z0, Z0, X) + (Z0,) * order] = ONE
        tensors.append(SparseTensor.covariant(n, 4 + order, entries, Symmetry.CURVATURE))
    return Model(n, inner, tuple(tensors))


def _unify(values: Sequence) -> Tuple[List, bool]:
    """Rational values stay exact when all of them are rational, otherwise everything becomes float"""
    values = [as_number(v) for v in values]
    if all(as_number_is_rational(v) for v in values):
        return values, True
    return [float(v) for v in values], False


def base_frame(config: ManifoldConfig, point: Sequence) -> Frame:
    """X = d_x + F d_xs, Z_i = d_zi - 1/2 H_ij d_ztj, Zt*_i = d_ztsi + 1/2 H_ij d_zsj, the rest coordinate vectors"""
    chart = config.chart
    n, p = config.dimension, config.p
    bindings = chart.bindings(point)
    exact = is_exact_point(point)
    hessian = [[config.f.multi_partial([f'z{i}', f'z{j}']).evaluate(bindings, exact)
                for j in range(p + 1)] for i in range(p + 1)]
    raw = [config.F.evaluate(bindings, exact)] + [h for row in hessian for h in row]
    values, _ = _unify(raw)
    F = values[0]
    H = [values[1 + i * (p + 1):1 + (i + 1) * (p + 1)] for i in range(p + 1)]

    def unit(index):
        column = [0] * n
        column[index] = 1
        return column

    X = unit(chart.x)
    X[chart.xs] = F
    Z, Zt, Zs, Zts = [], [], [], []
    for i in range(p + 1):
        column = unit(chart.z(i))
        for j in range(p + 1):
            column[chart.zt(j)] = -H[i][j] / 2
        Z.append(column)
        Zt.append(unit(chart.zt(i)))
        Zs.append(unit(chart.zs(i)))
        column = unit(chart.zts(i))
        for j in range(p + 1):
            column[chart.zs(j)] = H[i][j] / 2
        Zts.append(column)
    return Frame.from_columns(point, [X] + Z + Zt + [unit(chart.xs)] + Zs + Zts)


@dataclass(frozen=True)
class Rescaling:
    epsilon: float
    epsilon_0: float
    epsilon_i: Tuple[float, ...]


@dataclass(frozen=True)
class NormalizationCoefficients:
    """
    eps[l]          = d_z0^{l+2} f
    eps_mixed[j, l] = d_z0^{l+1} d_zj f
    a[l]            Z_0 correction coefficients, 1Z_0 = Z_0 + sum a_l Z_l
    c[i][j]         triangular mixing, 1Z_i = sum_j c_ij Z_j
    """

    k: int
    m: int
    eps: Dict[int, Any] = field(default_factory=dict)
    eps_mixed: Dict[Tuple[int, int], Any] = field(default_factory=dict)
    a: Dict[int, Any] = field(default_factory=dict)
    c: Dict[Tuple[int, int], Any] = field(default_factory=dict)
    rescaling: Optional[Rescaling] = None
    exact: bool = True

    @property
    def terms(self) -> int:
        return len(self.eps)

    def residuals(self) -> List[Any]:
        """Both triangular systems re-substituted; all zero for a correct solve"""
        K = self.terms
        out = []
        for l in range(1, K + 1):
            out.append(self.eps[l] + (l + 2) * sum(self.eps_mixed[(j, l)] * self.a[j] for j in range(l, K + 1)))
        for i in range(1, K + 1):
            for l in range(1, i + 1):
                total = sum(self.c[(i, j)] * self.eps_mixed[(j, l)] for j in range(l, i + 1))
                out.append(total - (1 if i == l else 0))
        return out

    def to_json(self) -> Dict[str, Any]:
        payload = {
            'k': self.k,
            'm': self.m,
            'eps': {str(l): json_number(v) for l, v in sorted(self.eps.items())},
            'eps_mixed': {f'{j},{l}': json_number(v) for (j, l), v in sorted(self.eps_mixed.items())},
            'a': {str(l): json_number(v) for l, v in sorted(self.a.items())},
            'c': {f'{i},{j}': json_number(v) for (i, j), v in sorted(self.c.items())},
        }
        if self.rescaling is not None:
            payload['rescaling'] = {
                'epsilon': self.rescaling.epsilon,
                'epsilon_0': self.rescaling.epsilon_0,
                'epsilon_i': list(self.rescaling.epsilon_i),
            }
        return payload


def solve_normalization(config: ManifoldConfig, point: Sequence, k: int) -> NormalizationCoefficients:
    p = config.p
    if not 0 <= k <= p + 2:
        raise ConfigError(f"Normalization order must lie in 0..{p + 2}, got {k}")
    shape = config.shape
    if shape is None:
        raise PreconditionError(f"f = {config.f} is not of the form psi(z0) + z1 z0^2 + ... + zm z0^(m+1)",
                                quantity='shape', value=config.f.to_sexpr())
    if k == 0:
        return NormalizationCoefficients(k=0, m=shape.m)
    bindings = config.chart.bindings(point)
    exact_point = is_exact_point(point)

    def at(variables):
        return config.f.multi_partial(variables).evaluate(bindings, exact_point)

    for i in range(1, min(k, p) + 1):
        value = at(['z0'] * (i + 1) + [f'z{i}'])
        if value == 0:
            raise PreconditionError(f"epsilon_{i},{i} = d_z0^{i + 1} d_z{i} f vanishes, order {k} needs it non-zero",
                                    quantity=f'epsilon_{i},{i}', value=0)
    K = shape.m
    keys, raw = [], []
    for l in range(1, K + 1):
        keys.append(('eps', l))
        raw.append(at(['z0'] * (l + 2)))
        for j in range(l, K + 1):
            keys.append(('mixed', (j, l)))
            raw.append(at(['z0'] * (l + 1) + [f'z{j}']))
    values, exact = _unify(raw)
    eps, eps_mixed = {}, {}
    for (kind, key), value in zip(keys, values):
        (eps if kind == 'eps' else eps_mixed)[key] = value

    a = {}
    for l in range(K, 0, -1):
        tail = sum(eps_mixed[(j, l)] * a[j] for j in range(l + 1, K + 1))
        a[l] = -(eps[l] / (l + 2) + tail) / eps_mixed[(l, l)]
    c = {}
    for i in range(1, K + 1):
        c[(i, i)] = 1 / eps_mixed[(i, i)]
        for l in range(i - 1, 0, -1):
            c[(i, l)] = -sum(c[(i, j)] * eps_mixed[(j, l)] for j in range(l + 1, i + 1)) / eps_mixed[(l, l)]

    rescaling = None
    if k >= p + 1:
        psi3 = float(config.psi_derivative(p + 3).evaluate(bindings, False))
        if not psi3 > 0:
            raise PreconditionError(f"psi^({p + 3}) must be positive for order {k}, got {psi3:.6g}",
                                    quantity=f'psi^({p + 3})', value=psi3)
        if k == p + 1:
            epsilon_0, epsilon = 1.0, psi3 ** -0.5
        else:
            psi4 = float(config.psi_derivative(p + 4).evaluate(bindings, False))
            if not psi4 > 0:
                raise PreconditionError(f"psi^({p + 4}) must be positive for order {k}, got {psi4:.6g}",
                                        quantity=f'psi^({p + 4})', value=psi4)
            epsilon_0 = psi3 / psi4
            epsilon = (epsilon_0 ** (p + 3) * psi3) ** -0.5
        epsilon_i = tuple(epsilon ** -2 * epsilon_0 ** (-i - 1) for i in range(1, p + 1))
        rescaling = Rescaling(epsilon, epsilon_0, epsilon_i)
        exact = False
    logger.debug("normalization at %s order %d: a=%s c=%s", point, k, a, c)
    return NormalizationCoefficients(k, shape.m, eps, eps_mixed, a, c, rescaling, exact)


def _combine(coefficients: Sequence, vectors: Sequence[Sequence]) -> List:
    n = len(vectors[0])
    out = [0] * n
    for coefficient, vector in zip(coefficients, vectors):
        if coefficient == 0:
            continue
        for a in range(n):
            if vector[a] != 0:
                out[a] = out[a] + coefficient * vector[a]
    return out


def _inverse(matrix: List[List], exact: bool) -> List[List]:
    if exact:
        return sympy.Matrix(matrix).inv().tolist()
    return np.linalg.inv(np.array(matrix, dtype=float)).tolist()


def normalize_frame(config: ManifoldConfig, point: Sequence, k: int) -> Frame:
    """A frame at point whose pullbacks of g, R, ..., nabla^k R equal the order-k model"""
    base = base_frame(config, point)
    if k == 0:
        return base
    coefficients = solve_normalization(config, point, k)
    chart = config.chart
    p = config.p
    R = nabla_R_closed(config, point, 0).numeric()
    g = metric(config, point).numeric()
    exact = coefficients.exact and base.exact and R.is_rational() and g.is_rational()
    if exact:
        columns = [list(c) for c in base.columns]
    else:
        columns = [[float(v) for v in c] for c in base.columns]
        R, g = R.as_float(), g.as_float()
    number = (lambda v: v) if exact else float

    X = columns[chart.x]
    Z = [columns[chart.z(i)] for i in range(p + 1)]
    Zt = [columns[chart.zt(i)] for i in range(p + 1)]
    duals = [columns[chart.xs]] + [columns[chart.zs(i)] for i in range(p + 1)] \
        + [columns[chart.zts(i)] for i in range(p + 1)]

    # 1Z_a = sum_b B[a][b] Z_b
    K = coefficients.terms
    B = [[number(1 if a == b else 0) for b in range(p + 1)] for a in range(p + 1)]
    for l in range(1, K + 1):
        B[0][l] = number(coefficients.a[l])
    for i in range(1, K + 1):
        B[i] = [number(0)] + [number(coefficients.c[(i, j)]) if j <= i else number(0) for j in range(1, p + 1)]
    Z1 = [_combine(B[a], Z) for a in range(p + 1)]

    # 1Zt_b spans Zt with R(X, 1Z_a, 1Zt_b, X) = delta_ab
    M = [[evaluate_on(R, [X, Z1[a], Zt[l], X]) for l in range(p + 1)] for a in range(p + 1)]
    M_inv = _inverse(M, exact)
    Zt1 = [_combine([M_inv[l][b] for l in range(p + 1)], Zt) for b in range(p + 1)]

    # duals span X*, Z*, Zt* with g(V_a, dual_b) = delta_ab
    V = [X] + Z1 + Zt1
    G = [[evaluate_on(g, [v, d]) for d in duals] for v in V]
    G_inv = _inverse(G, exact)
    D = [_combine([G_inv[c][b] for c in range(len(duals))], duals) for b in range(len(V))]

    if coefficients.rescaling is not None:
        scale = coefficients.rescaling
        eps, eps_i = scale.epsilon, (scale.epsilon_0,) + scale.epsilon_i
        V = [[eps * v for v in V[0]]] \
            + [[eps_i[i] * v for v in Z1[i]] for i in range(p + 1)] \
            + [[eps ** -2 / eps_i[i] * v for v in Zt1[i]] for i in range(p + 1)]
        D = [[v / eps for v in D[0]]] \
            + [[v / eps_i[i] for v in D[1 + i]] for i in range(p + 1)] \
            + [[eps ** 2 * eps_i[i] * v for v in D[p + 2 + i]] for i in range(p + 1)]
    return Frame.from_columns(point, V + D)


@dataclass(frozen=True)
class CertificationReport:
    point: Tuple
    order: int
    residuals: Dict[str, float]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(r <= self.tolerance for r in self.residuals.values())

    @property
    def worst(self) -> float:
        return max(self.residuals.values(), default=0.0)

    def to_json(self) -> Dict[str, Any]:
        return {
            'point': [json_number(v) for v in self.point],
            'order': self.order,
            'residuals': self.residuals,
            'passed': self.passed,
        }


def tensor_label(j: int) -> str:
    return 'R' if j == 0 else f'nabla^{j} R'


def verify_isomorphism(config: ManifoldConfig, point: Sequence, frame: Frame, model: Model,
                       settings: Settings = DEFAULT_SETTINGS) -> CertificationReport:
    if model.dimension != config.dimension or frame.dimension != config.dimension:
        raise TensorShapeError("Model, frame and manifold dimensions differ")
    residuals = {'g': sup_difference(pullback(metric(config, point), frame), model.inner_product)}
    for j, tensor in enumerate(model.tensors):
        residuals[tensor_label(j)] = sup_difference(pullback(nabla_R_closed(config, point, j), frame), tensor)
    return CertificationReport(tuple(point), model.k, residuals, settings.certificate_tol)


def certify(config: ManifoldConfig, point: Sequence, k: int,
            settings: Settings = DEFAULT_SETTINGS) -> CertificationReport:
    """normalize_frame then verify_isomorphism against the order-k model"""
    frame = normalize_frame(config, point, k)
    return verify_isomorphism(config, point, frame, build_model(config.p, k), settings)


@dataclass(frozen=True, eq=False)
class Decomposition:
    first: np.ndarray
    second: np.ndarray
    trial: int


@dataclass(frozen=True)
class DecompositionSearchResult:
    trials: int
    found: Optional[Decomposition]

    @property
    def exhausted(self) -> bool:
        return self.found is None

    def to_json(self) -> Dict[str, Any]:
        if self.found is None:
            return {'trials': self.trials, 'found': False}
        return {
            'trials': self.trials,
            'found': True,
            'trial': self.found.trial,
            'first': self.found.first.tolist(),
            'second': self.found.second.tolist(),
        }


def decomposition_search(model: Model, trials: int, seed: int = 0, tol: float = 1e-9) -> DecompositionSearchResult:
    """
    Random attempts at an orthogonal splitting V1 + V2 with <.,.> and A^0
    both block diagonal. A hit falsifies indecomposability; exhaustion
    proves nothing.
    """
    rng = np.random.default_rng(seed)
    G = model.inner_product.to_dense()
    A = model.tensors[0].to_dense()
    n = model.dimension
    for trial in range(trials):
        d1 = int(rng.integers(1, n))
        if rng.random() < 0.5:
            chosen = sorted(rng.choice(n, size=d1, replace=False))
            first = np.eye(n)[:, chosen]
        else:
            first = rng.integers(-1, 2, size=(n, d1)).astype(float)
        if np.linalg.matrix_rank(first.T @ G @ first) < d1:
            continue
        second = null_space(first.T @ G)
        basis = np.hstack([first, second])
        if basis.shape[1] != n or np.linalg.matrix_rank(basis) < n:
            continue
        transformed = np.einsum('abcd,ai,bj,ck,dl->ijkl', A, basis, basis, basis, basis, optimize=True)
        block = np.array([0] * d1 + [1] * (n - d1))
        b0 = block[:, None, None, None]
        same = (b0 == block[None, :, None, None]) & (b0 == block[None, None, :, None]) \
            & (b0 == block[None, None, None, :])
        if np.max(np.abs(transformed[~same]), initial=0.0) <= tol:
            logger.info("decomposition found at trial %d (dim %d + %d)", trial, d1, n - d1)
            return DecompositionSearchResult(trial + 1, Decomposition(first, second, trial))
    return DecompositionSearchResult(trials, None)
