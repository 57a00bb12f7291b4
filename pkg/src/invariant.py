import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy

from .errors import ConfigError, InadmissibleTripleError, PreconditionError, SchemeLimitError
from .expr import is_exact_number, to_sympy_number
from .geodesic import exp_map, log_map
from .manifold import (
    ManifoldConfig, is_exact_point, is_symmetric, metric, metric_inverse, nabla_R_closed, random_point,
    vanishes_identically,
)
from .model import certify, normalize_frame, tensor_label
from .settings import DEFAULT_SETTINGS, Settings
from .tensor import (
    SparseTensor, as_number, evaluate_on, full_contraction, json_number, pullback,
    raise_last_slot, sup_difference, tensors_close,
)

logger = logging.getLogger(__name__)

Order = Union[int, float]


# scalar Weyl invariants

@dataclass(frozen=True)
class ContractionScheme:
    """Factors nabla^{orders[0]} R, nabla^{orders[1]} R, ... with slots paired by the inverse metric"""

    orders: Tuple[int, ...]
    pairs: Tuple[Tuple[int, int], ...]

    @property
    def slots(self) -> int:
        return sum(4 + k for k in self.orders)

    def canonical(self) -> 'ContractionScheme':
        return ContractionScheme(self.orders, _canonical_pairs(self.orders, self.pairs))

    def label(self) -> str:
        factors = ' '.join('R' if k == 0 else f'nabla^{k}R' for k in self.orders)
        pairs = ' '.join(f'{a}-{b}' for a, b in self.pairs)
        return f"{factors} [{pairs}]"

    def to_json(self) -> Dict[str, Any]:
        return {'orders': list(self.orders), 'pairs': [list(p) for p in self.pairs]}


# scalar curvature tau and |rho|^2 as fixed schemes
TAU = ContractionScheme((0,), ((0, 3), (1, 2)))
RHO_SQUARED = ContractionScheme((0, 0), ((0, 3), (1, 5), (2, 6), (4, 7)))


def all_pairings(items: Sequence[int]) -> Iterator[List[Tuple[int, int]]]:
    """Every perfect matching: pair the first item with each of the rest and recurse"""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for i, partner in enumerate(rest):
        for tail in all_pairings(rest[:i] + rest[i + 1:]):
            yield [(first, partner)] + tail


def _offsets(orders: Sequence[int]) -> List[int]:
    offsets = [0]
    for k in orders:
        offsets.append(offsets[-1] + 4 + k)
    return offsets


def _factor_symmetries(orders: Tuple[int, ...]) -> List[Tuple[int, ...]]:
    """Permutations of the factors that only swap factors of equal order"""
    return [perm for perm in itertools.permutations(range(len(orders)))
            if all(orders[perm[f]] == orders[f] for f in range(len(orders)))]


def _canonical_pairs(orders: Tuple[int, ...], pairs: Sequence[Tuple[int, int]],
                     symmetries: Optional[List[Tuple[int, ...]]] = None) -> Tuple[Tuple[int, int], ...]:
    offsets = _offsets(orders)
    owner = {}
    for f in range(len(orders)):
        for u in range(4 + orders[f]):
            owner[offsets[f] + u] = (f, u)
    best = None
    for perm in symmetries if symmetries is not None else _factor_symmetries(orders):
        def image(slot):
            f, u = owner[slot]
            return offsets[perm[f]] + u
        candidate = tuple(sorted(tuple(sorted((image(a), image(b)))) for a, b in pairs))
        if best is None or candidate < best:
            best = candidate
    return best


def _order_tuples(max_slots: int) -> Iterator[Tuple[int, ...]]:
    def extend(prefix: Tuple[int, ...], smallest: int, used: int):
        if prefix and used % 2 == 0:
            yield prefix
        k = smallest
        while used + 4 + k <= max_slots:
            yield from extend(prefix + (k,), k, used + 4 + k)
            k += 1
    yield from extend((), 0, 0)


def enumerate_schemes(max_slots: int, cap: Optional[int] = None) -> List[ContractionScheme]:
    """Every complete contraction with at most max_slots slots, one per class under swapping equal factors"""
    cap = DEFAULT_SETTINGS.weyl_slot_cap if cap is None else cap
    if max_slots > cap:
        raise SchemeLimitError(max_slots, cap)
    return list(_schemes(max_slots))


@lru_cache(maxsize=None)
def _schemes(max_slots: int) -> Tuple[ContractionScheme, ...]:
    schemes = []
    for orders in sorted(_order_tuples(max_slots), key=lambda o: (sum(4 + k for k in o), o)):
        symmetries = _factor_symmetries(orders)
        seen = set()
        for pairing in all_pairings(list(range(sum(4 + k for k in orders)))):
            canonical = _canonical_pairs(orders, pairing, symmetries)
            if canonical not in seen:
                seen.add(canonical)
                schemes.append(ContractionScheme(orders, canonical))
    logger.debug("%d contraction schemes up to %d slots", len(schemes), max_slots)
    return tuple(schemes)


def evaluate_scheme_on(factors: Dict[int, SparseTensor], inverse: SparseTensor, scheme: ContractionScheme):
    """Contract the tensors factors[k] (one per derivative order) along the scheme"""
    value = full_contraction([factors[k] for k in scheme.orders], scheme.pairs, inverse)
    return as_number(value)


def evaluate_scheme(config: ManifoldConfig, point: Sequence, scheme: ContractionScheme):
    factors = {k: nabla_R_closed(config, point, k).numeric() for k in set(scheme.orders)}
    return evaluate_scheme_on(factors, metric_inverse(config, point).numeric(), scheme)


def adjoin_sphere_block(factors: Dict[int, SparseTensor],
                        inverse: SparseTensor) -> Tuple[Dict[int, SparseTensor], SparseTensor]:
    """
    Direct product with a unit round 2-sphere at one point: two extra
    orthonormal coordinates, R(e1, e2, e2, e1) = 1 and parallel curvature.
    The adjoined tensors have tau = 2 + (tau of the original) = 2.
    """
    n = inverse.dimension
    e1, e2 = n, n + 1
    one = sympy.Integer(1)
    lifted = {}
    for k, tensor in factors.items():
        entries = dict(tensor.raw_items())
        if k == 0:
            entries[(e1, e2, e2, e1)] = one
        lifted[k] = SparseTensor.build(n + 2, tensor.variance, entries, tensor.symmetry)
    entries = dict(inverse.raw_items())
    entries[(e1, e1)] = one
    entries[(e2, e2)] = one
    return lifted, SparseTensor.build(n + 2, inverse.variance, entries, inverse.symmetry)


def weyl_invariants(config: ManifoldConfig, point: Sequence, max_slots: int,
                    settings: Settings = DEFAULT_SETTINGS) -> List[Tuple[ContractionScheme, Any]]:
    schemes = enumerate_schemes(max_slots, settings.weyl_slot_cap)
    orders = {k for scheme in schemes for k in scheme.orders}
    factors = {k: nabla_R_closed(config, point, k).numeric() for k in orders}
    inverse = metric_inverse(config, point).numeric()
    return [(scheme, evaluate_scheme_on(factors, inverse, scheme)) for scheme in schemes]


def weyl_value_vanishes(value, settings: Settings = DEFAULT_SETTINGS) -> bool:
    if is_exact_number(value):
        return value == 0
    return abs(float(value)) <= settings.weyl_tol


# alpha^k

def _psi_values(config: ManifoldConfig, point: Sequence, orders: Sequence[int]) -> Dict[int, Any]:
    bindings = config.chart.bindings(point)
    exact = is_exact_point(point)
    return {n: config.psi_derivative(n).evaluate(bindings, exact) for n in set(orders)}


def _finish(value):
    if isinstance(value, sympy.Basic) and not value.is_Rational:
        value = sympy.simplify(value)
    return as_number(value)


def alpha_direct(config: ManifoldConfig, point: Sequence, k: int):
    """alpha^k from psi: psi^(k+p+3) (psi^(p+3))^(k-1) / (psi^(p+4))^k"""
    if k < 2:
        raise ConfigError(f"alpha^k is defined for k >= 2, got {k}")
    if config.shape is None:
        raise PreconditionError(f"f = {config.f} has no psi(z0) part to read alpha from", quantity='shape')
    p = config.p
    psi = _psi_values(config, point, [k + p + 3, p + 3, p + 4])
    if psi[p + 4] == 0:
        raise PreconditionError(f"psi^({p + 4}) vanishes at the point, alpha^{k} is undefined",
                                quantity=f'psi^({p + 4})', value=0)
    return _finish(psi[k + p + 3] * psi[p + 3] ** (k - 1) / psi[p + 4] ** k)


def alpha_sequence(config: ManifoldConfig, point: Sequence, k_max: int) -> 'AlphaSequence':
    return AlphaSequence(tuple(point), tuple((k, alpha_direct(config, point, k)) for k in range(2, k_max + 1)))


@dataclass(frozen=True)
class AlphaSequence:
    point: Tuple
    values: Tuple[Tuple[int, Any], ...]

    def __getitem__(self, k: int):
        return dict(self.values)[k]

    def to_json(self) -> Dict[str, Any]:
        return {
            'point': [json_number(v) for v in self.point],
            'alpha': {str(k): json_number(v) for k, v in self.values},
        }


def operator_along(config: ManifoldConfig, point: Sequence, j: int,
                   X: Sequence, Z0: Sequence, W: Sequence) -> Tuple:
    """Components of ((nabla_Z0)^j R)(X, Z0) W as a tangent vector"""
    tensor = nabla_R_closed(config, point, j).numeric()
    inverse = metric_inverse(config, point).numeric()
    exact = tensor.is_rational() and inverse.is_rational() and all(
        is_exact_number(v) for v in tuple(X) + tuple(Z0) + tuple(W))
    if exact:
        X, Z0, W = ([to_sympy_number(v) for v in vector] for vector in (X, Z0, W))
    else:
        tensor, inverse = tensor.as_float(), inverse.as_float()
        X, Z0, W = ([float(v) for v in vector] for vector in (X, Z0, W))
    # move the output slot to the end before raising it
    order = [0, 1, 2] + list(range(4, 4 + j)) + [3]
    raised = raise_last_slot(tensor.permute(order), inverse)
    components = evaluate_on(raised, [X, Z0, W] + [Z0] * j + [None])
    return tuple(components.get((c,), 0) for c in range(config.dimension))


def _apply(theta: Sequence, vector: Sequence):
    return sum(t * v for t, v in zip(theta, vector) if t != 0 and v != 0)


def alpha_via_theta(config: ManifoldConfig, point: Sequence, k: int, X: Sequence, Z0: Sequence,
                    theta: Sequence, settings: Settings = DEFAULT_SETTINGS):
    """
    Theta{(nabla_Z0)^(k+p+1) R(X,Z0)X} Theta{(nabla_Z0)^(p+1) R(X,Z0)X}^(k-1)
    / Theta{(nabla_Z0)^(p+2) R(X,Z0)X}^k
    """
    if k < 2:
        raise ConfigError(f"alpha^k is defined for k >= 2, got {k}")
    p = config.p

    def value(j):
        return _apply(theta, operator_along(config, point, j, X, Z0, X))

    def vanishes(v):
        return v == 0 if is_exact_number(v) else abs(float(v)) <= settings.abs_tol

    base = value(p + 1)
    if vanishes(base):
        raise InadmissibleTripleError(json_number(base))
    denominator = value(p + 2)
    if vanishes(denominator):
        raise PreconditionError(f"Theta{{(nabla_Z0)^{p + 2} R(X,Z0)X}} vanishes, alpha^{k} is undefined",
                                quantity=f'Theta{{(nabla_Z0)^{p + 2} R(X,Z0)X}}', value=json_number(denominator))
    return _finish(value(k + p + 1) * base ** (k - 1) / denominator ** k)


# classification

def parse_grid(text: str) -> Tuple[Fraction, ...]:
    """'a:b:n' is n evenly spaced exact values from a to b"""
    try:
        start, stop, count = text.split(':')
        start, stop, count = Fraction(start), Fraction(stop), int(count)
    except ValueError as e:
        raise ConfigError(f"Grid must look like a:b:n, got '{text}'") from e
    if count < 1 or (count == 1 and start != stop):
        raise ConfigError(f"Grid '{text}' needs at least two points to span [{start}, {stop}]")
    if count == 1:
        return (start,)
    step = (stop - start) / (count - 1)
    return tuple(start + i * step for i in range(count))


def grid_points(config: ManifoldConfig, grid: Sequence, seed: int = 0) -> List[Tuple]:
    """One point per z0 value; every other coordinate fixed at a seeded rational"""
    rng = np.random.default_rng(seed)
    base = list(random_point(config, rng))
    z0 = config.chart.z(0)
    points = []
    for value in grid:
        point = list(base)
        point[z0] = to_sympy_number(value)
        points.append(tuple(point))
    return points


@dataclass(frozen=True)
class Classification:
    symmetric: bool
    order: Order
    homogeneous: Optional[bool]
    alpha_squared: Tuple[Any, ...] = ()
    alpha_constant: Optional[bool] = None
    failures: Dict[int, str] = field(default_factory=dict)

    def to_json(self) -> Dict[str, Any]:
        return {
            'symmetric': self.symmetric,
            'homogeneity_order': 'inf' if self.order == math.inf else self.order,
            'homogeneous': self.homogeneous,
            'alpha_squared': [json_number(v) for v in self.alpha_squared],
            'alpha_squared_constant': self.alpha_constant,
            'failures': {str(k): v for k, v in sorted(self.failures.items())},
        }


def _constant(values: Sequence, settings: Settings) -> bool:
    floats = [float(v) for v in values]
    mean = sum(floats) / len(floats)
    return max(floats) - min(floats) <= settings.constancy_tol * max(1.0, abs(mean))


def classify(config: ManifoldConfig, grid: Sequence, settings: Settings = DEFAULT_SETTINGS) -> Classification:
    """
    symmetric: nabla R = 0 everywhere.
    order: the largest k <= p+2 certified at every grid point (inf when symmetric).
    homogeneous: True when nabla^(order+1) R vanishes identically, otherwise
    whether alpha^2 is constant over the grid, None when neither applies.
    """
    points = grid_points(config, grid, settings.seed)
    if is_symmetric(config):
        logger.info("%s is symmetric", config)
        return Classification(True, math.inf, True)

    order, failures = -1, {}
    for k in range(config.p + 3):
        failure = None
        for point in points:
            try:
                report = certify(config, point, k, settings)
            except PreconditionError as e:
                failure = e.message
                break
            if not report.passed:
                failure = f"certificate residual {report.worst:.3e} at z0 = {point[config.chart.z(0)]}"
                break
        if failure is not None:
            failures[k] = failure
            logger.debug("order %d fails: %s", k, failure)
            break
        order = k
    logger.info("%s is homogeneous of order %d on the grid", config, order)

    alpha_squared: Tuple[Any, ...] = ()
    alpha_constant = None
    try:
        alpha_squared = tuple(alpha_direct(config, point, 2) for point in points)
        alpha_constant = _constant(alpha_squared, settings)
    except PreconditionError as e:
        logger.debug("alpha^2 unavailable: %s", e.message)

    if order >= 0 and vanishes_identically(config, order + 1):
        homogeneous = True
    else:
        homogeneous = alpha_constant
    return Classification(False, order, homogeneous, alpha_squared, alpha_constant, failures)


# isometries

@dataclass(frozen=True)
class IsometryVerdict:
    consistent: bool
    k_max: int
    first_separating: Optional[int]
    values: Tuple[Tuple[int, Any, Any], ...]

    @property
    def verdict(self) -> str:
        if self.consistent:
            return f"consistent up to k_max={self.k_max}"
        return f"distinct (alpha^{self.first_separating} differs)"

    def to_json(self) -> Dict[str, Any]:
        return {
            'verdict': self.verdict,
            'consistent': self.consistent,
            'k_max': self.k_max,
            'first_separating': self.first_separating,
            'alpha': [[k, json_number(a), json_number(b)] for k, a, b in self.values],
        }


def _alpha_equal(a, b, settings: Settings) -> bool:
    if is_exact_number(a) and is_exact_number(b):
        return sympy.simplify(to_sympy_number(a) - to_sympy_number(b)) == 0
    return math.isclose(float(a), float(b), rel_tol=settings.isometry_rel_tol, abs_tol=settings.abs_tol)


def _require_positive_psi(config: ManifoldConfig, point: Sequence) -> None:
    p = config.p
    for n in (p + 3, p + 4):
        value = float(config.psi_derivative(n).evaluate(config.chart.bindings(point), False))
        if not value > 0:
            raise PreconditionError(f"psi^({n}) must be positive at {point}, got {value:.6g}",
                                    quantity=f'psi^({n})', value=value)


def isometry_decision(first: ManifoldConfig, P1: Sequence, second: ManifoldConfig, P2: Sequence,
                      k_max: Optional[int] = None, settings: Settings = DEFAULT_SETTINGS) -> IsometryVerdict:
    """
    Compares alpha^2..alpha^k_max. A mismatch proves the germs at P1 and P2
    are not isometric; agreement is only consistency up to k_max.
    """
    k_max = settings.alpha_k_max if k_max is None else k_max
    if first.p != second.p:
        raise ConfigError(f"Manifolds of different dimension ({first.dimension} and {second.dimension})")
    if first.shape is None or second.shape is None:
        raise PreconditionError("Both functions need the psi(z0) + z1 z0^2 + ... shape", quantity='shape')
    _require_positive_psi(first, P1)
    _require_positive_psi(second, P2)
    values = []
    for k in range(2, k_max + 1):
        a, b = alpha_direct(first, P1, k), alpha_direct(second, P2, k)
        values.append((k, a, b))
        if not _alpha_equal(a, b, settings):
            logger.info("alpha^%d separates the points: %s vs %s", k, a, b)
            return IsometryVerdict(False, k_max, k, tuple(values))
    return IsometryVerdict(True, k_max, None, tuple(values))


def _floats(point: Sequence) -> Tuple[float, ...]:
    return tuple(float(v) for v in point)


@dataclass(frozen=True, eq=False)
class PlaneWaveIsometry:
    """phi = exp_{target} o linear o log_{source} on the normal neighbourhood of source"""

    config: ManifoldConfig
    source: Tuple[float, ...]
    target: Tuple[float, ...]
    linear: np.ndarray
    settings: Settings = DEFAULT_SETTINGS

    def __call__(self, point: Sequence) -> Tuple[float, ...]:
        v = np.asarray(log_map(self.config, self.source, _floats(point), self.settings), dtype=float)
        return exp_map(self.config, self.target, tuple(self.linear @ v), self.settings)

    def jacobian(self, point: Sequence, step: float) -> np.ndarray:
        n = self.config.dimension
        point = np.asarray(_floats(point))
        columns = []
        for a in range(n):
            offset = np.zeros(n)
            offset[a] = step
            forward = np.asarray(self(tuple(point + offset)))
            backward = np.asarray(self(tuple(point - offset)))
            columns.append((forward - backward) / (2 * step))
        return np.column_stack(columns)

    def to_json(self) -> Dict[str, Any]:
        return {
            'source': list(self.source),
            'target': list(self.target),
            'linear': self.linear.tolist(),
        }


@dataclass(frozen=True)
class IsometryReport:
    isometry: PlaneWaveIsometry
    order: int
    samples: Tuple[Tuple[float, ...], ...]
    residuals: Tuple[float, ...]
    tolerance: float

    @property
    def worst(self) -> float:
        return max(self.residuals, default=0.0)

    @cached_property
    def worst_point(self) -> Optional[Tuple[float, ...]]:
        if not self.residuals:
            return None
        return self.samples[int(np.argmax(self.residuals))]

    @property
    def passed(self) -> bool:
        return self.worst <= self.tolerance

    def to_json(self) -> Dict[str, Any]:
        return {
            'normalization_order': self.order,
            'isometry': self.isometry.to_json(),
            'samples': len(self.samples),
            'worst_residual': self.worst,
            'worst_point': list(self.worst_point) if self.worst_point else None,
            'passed': self.passed,
        }


def _metric_array(config: ManifoldConfig, point: Sequence) -> np.ndarray:
    return metric(config, _floats(point)).as_float().to_dense()


def build_isometry(config: ManifoldConfig, P1: Sequence, P2: Sequence, k_cert: Optional[int] = None,
                   samples: int = 10, seed: int = 0, settings: Settings = DEFAULT_SETTINGS) -> IsometryReport:
    """
    Normalize frames at both points, check that nabla^j R (j <= k_cert)
    agree in them, and map one frame onto the other through the
    exponential maps. The result is checked with finite-difference
    Jacobians at points sampled around P1.

    Frames are normalized at the highest order <= min(k_cert, p+2) that
    f admits at both points; the order used is logged and reported.
    """
    p = config.p
    k_cert = p + 4 if k_cert is None else k_cert
    if k_cert < 0:
        raise ConfigError(f"k_cert must be non-negative, got {k_cert}", k_cert=k_cert)
    frames, order, last = None, None, None
    for k in range(min(k_cert, p + 2), -1, -1):
        try:
            frames = normalize_frame(config, P1, k), normalize_frame(config, P2, k)
        except PreconditionError as e:
            logger.debug("no normalization of order %d: %s", k, e.message)
            last = e
            continue
        order = k
        break
    if frames is None:
        raise PreconditionError(f"no frame normalization succeeds at both points: {last.message}",
                                quantity=last.quantity, value=last.value)
    logger.info("building the isometry from frames normalized to order %d (k_cert=%d)", order, k_cert)
    F1, F2 = frames

    for j in range(k_cert + 1):
        T1 = pullback(nabla_R_closed(config, P1, j), F1)
        T2 = pullback(nabla_R_closed(config, P2, j), F2)
        if not tensors_close(T1, T2, settings.rel_tol, settings.abs_tol):
            residual = sup_difference(T1, T2)
            raise PreconditionError(f"{tensor_label(j)} differs in the normalized frames by {residual:.3e}",
                                    quantity=tensor_label(j), value=residual)

    linear = F2.array() @ np.linalg.inv(F1.array())
    isometry = PlaneWaveIsometry(config, _floats(P1), _floats(P2), linear, settings)

    rng = np.random.default_rng(seed)
    centre = np.asarray(_floats(P1))
    points, residuals = [], []
    for _ in range(samples):
        Q = tuple(centre + rng.uniform(-0.5, 0.5, size=config.dimension))
        J = isometry.jacobian(Q, settings.jacobian_step)
        pulled = J.T @ _metric_array(config, isometry(Q)) @ J
        points.append(Q)
        residuals.append(float(np.max(np.abs(pulled - _metric_array(config, Q)))))
    report = IsometryReport(isometry, order, tuple(points), tuple(residuals), settings.isometry_check_tol)
    if not report.passed:
        logger.warning("isometry check failed: residual %.3e at %s", report.worst, report.worst_point)
    return report
