import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np
import sympy

from .errors import PlaneWaveError
from .geodesic import GeodesicInitialData, exp_map, geodesic_closed, geodesic_numeric, log_map, ode_residual
from .instances import EXPONENTIALS, InstanceSpec, homogeneity_function, plane_wave_terms, presets
from .invariant import (
    TAU, adjoin_sphere_block, alpha_direct, alpha_via_theta, build_isometry, classify, evaluate_scheme_on,
    grid_points, parse_grid, weyl_invariants, weyl_value_vanishes,
)
from .manifold import (
    ManifoldConfig, covariant_derivative_oracle, is_symmetric, metric_inverse, nabla_R_closed, oracle_field,
    random_point,
)
from .model import base_frame, build_model, certify, normalize_frame, verify_isomorphism
from .settings import DEFAULT_SETTINGS, Settings
from .tensor import pullback, tensors_close

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SuiteOptions:
    p_values: Tuple[int, ...] = (1,)
    points: int = 5
    seed: int = 0
    max_slots: int = DEFAULT_SETTINGS.weyl_slot_cap
    oracle_order: int = 3
    grid: str = DEFAULT_SETTINGS.grid
    instance: Optional[InstanceSpec] = None
    settings: Settings = DEFAULT_SETTINGS


@dataclass(frozen=True)
class Check:
    label: str
    passed: bool
    detail: str = ''

    def to_json(self) -> Dict[str, Any]:
        return {'label': self.label, 'passed': self.passed, 'detail': self.detail}


@dataclass
class SuiteResult:
    name: str
    checks: List[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> List[Check]:
        return [c for c in self.checks if not c.passed]

    def check(self, label: str, fn: Callable[[], Tuple[bool, str]]) -> None:
        try:
            passed, detail = fn()
        except PlaneWaveError as e:
            passed, detail = False, f"{type(e).__name__}: {e.message}"
        if not passed:
            logger.warning("%s: %s failed %s", self.name, label, detail)
        self.checks.append(Check(label, passed, detail))

    def to_json(self) -> Dict[str, Any]:
        return {
            'suite': self.name,
            'passed': self.passed,
            'checks': len(self.checks),
            'failures': [c.to_json() for c in self.failures],
        }


def corpus(p: int) -> Dict[str, ManifoldConfig]:
    """f = 0, z1 z0^2, f_{p+1} and a plane wave with psi = exp(z0)"""
    return {
        '0': ManifoldConfig.from_sexpr(p, '0'),
        'z1 z0^2': ManifoldConfig.from_sexpr(p, '(* z1 (^ z0 2))'),
        f'f_{p + 1}': ManifoldConfig.from_sexpr(p, homogeneity_function(p, p + 1)),
        'psi=exp': ManifoldConfig.from_sexpr(p, '(+ ' + ' '.join(plane_wave_terms(p) + [EXPONENTIALS['exp']]) + ')'),
    }


def _configs(options: SuiteOptions, p: int) -> Dict[str, ManifoldConfig]:
    """The corpus for p, plus the instance under test when it lives in dimension 6+4p"""
    configs = corpus(p)
    if options.instance is not None and options.instance.p == p:
        configs[options.instance.name] = options.instance.config
    return configs


def _points(config: ManifoldConfig, count: int, seed: int, exact: bool = True,
            instance: Optional[InstanceSpec] = None) -> List[Tuple]:
    if instance is not None and instance.config == config and instance.points:
        return list(instance.points)
    rng = np.random.default_rng(seed)
    return [random_point(config, rng, exact) for _ in range(count)]


def oracle_suite(options: SuiteOptions) -> SuiteResult:
    result = SuiteResult('oracle')
    for p in options.p_values:
        for name, config in _configs(options, p).items():
            for k in range(options.oracle_order + 1):
                points = _points(config, options.points, options.seed + k, instance=options.instance)
                for i, point in enumerate(points):
                    def compare(config=config, point=point, k=k):
                        closed = nabla_R_closed(config, point, k).numeric()
                        oracle = covariant_derivative_oracle(config, point, k, k_max=options.oracle_order).numeric()
                        return tensors_close(closed, oracle, options.settings.rel_tol, options.settings.abs_tol), ''
                    result.check(f"p={p} f={name} k={k} point {i}", compare)
    return result


def symmetric_suite(options: SuiteOptions) -> SuiteResult:
    result = SuiteResult('symmetric')
    cases = [('(+ (^ z0 2) (* z0 z1) (* 3 z1))', True), ('(^ z0 3)', False),
             ('(* z1 (^ z0 2))', False), ('(exp z0)', False)]
    for p in options.p_values:
        for text, expected in cases:
            config = ManifoldConfig.from_sexpr(p, text)

            def decide(config=config, expected=expected):
                closed = is_symmetric(config)
                oracle = oracle_field(config, 1).is_zero
                return closed == expected == oracle, f"closed={closed} oracle={oracle} expected={expected}"
            result.check(f"p={p} f={text}", decide)
    return result


def geodesic_suite(options: SuiteOptions) -> SuiteResult:
    result = SuiteResult('geodesic')
    flat = ManifoldConfig.from_sexpr(1, '0')

    def hand_value():
        velocity = [0] * flat.dimension
        velocity[0] = 1
        velocity[flat.chart.z(0)] = 1
        data = GeodesicInitialData.from_vectors(flat, [0] * flat.dimension, velocity)
        value = geodesic_closed(flat, data, 1)[flat.chart.zts(0)]
        return abs(float(value) + 1 / 6) <= 1e-12, f"zts0(1) = {value}"
    result.check("f=0 hand value", hand_value)

    for p in options.p_values:
        polynomial = ManifoldConfig.from_sexpr(p, '(+ (* z1 (^ z0 2)) (^ z0 3))')
        mixed = ManifoldConfig.from_sexpr(p, '(+ (* z1 (^ z0 2)) (exp z0))')
        rng = np.random.default_rng(options.seed)
        n = mixed.dimension
        for i in range(options.points):
            point = random_point(polynomial, rng)
            velocity = random_point(polynomial, rng, spread=1)
            data = GeodesicInitialData.from_vectors(polynomial, point, velocity)

            def residual(data=data):
                worst = ode_residual(polynomial, data, [0, Fraction(1, 2), 1, 2])
                return worst <= 1e-8, f"residual {worst:.3e}"
            result.check(f"p={p} ode residual {i}", residual)

            P = tuple(rng.uniform(-1, 1, size=n))
            v = tuple(rng.uniform(-1, 1, size=n))
            float_data = GeodesicInitialData.from_vectors(mixed, P, v)

            def against_rk4(data=float_data):
                closed = np.asarray(geodesic_closed(mixed, data, 1.0))
                numeric = np.asarray(geodesic_numeric(mixed, data, 1.0, 1e-3))
                error = float(np.max(np.abs(closed - numeric)))
                return error <= 1e-6, f"max error {error:.3e}"
            result.check(f"p={p} closed vs rk4 {i}", against_rk4)

            def round_trip(P=P, v=v):
                back = np.asarray(log_map(mixed, P, exp_map(mixed, P, v)))
                error = float(np.max(np.abs(back - np.asarray(v))))
                return error <= 1e-9, f"log(exp(v)) - v = {error:.3e}"
            result.check(f"p={p} exp/log round trip {i}", round_trip)
    return result


def weyl_suite(options: SuiteOptions) -> SuiteResult:
    result = SuiteResult('weyl')
    for p in options.p_values:
        for name, config in _configs(options, p).items():
            for i, point in enumerate(_points(config, options.points, options.seed, instance=options.instance)):
                def vanish(config=config, point=point):
                    values = weyl_invariants(config, point, options.max_slots, options.settings)
                    bad = [scheme.label() for scheme, value in values
                           if not weyl_value_vanishes(value, options.settings)]
                    return not bad, f"{len(values)} schemes" + (f", non-zero: {bad[:3]}" if bad else '')
                result.check(f"p={p} f={name} point {i}", vanish)

        config = corpus(p)['z1 z0^2']
        point = _points(config, 1, options.seed)[0]

        def control(config=config, point=point):
            factors, inverse = adjoin_sphere_block({0: nabla_R_closed(config, point, 0).numeric()},
                                                   metric_inverse(config, point).numeric())
            tau = evaluate_scheme_on(factors, inverse, TAU)
            return tau == 2, f"tau = {tau}"
        result.check(f"p={p} sphere block control", control)
    return result


def certificate_suite(options: SuiteOptions) -> SuiteResult:
    result = SuiteResult('certificates')
    settings = options.settings
    for p in options.p_values:
        model0 = build_model(p, 0)
        for name, config in _configs(options, p).items():
            for i, point in enumerate(_points(config, options.points, options.seed, instance=options.instance)):
                def base(config=config, point=point):
                    report = verify_isomorphism(config, point, base_frame(config, point), model0, settings)
                    return report.passed, f"worst {report.worst:.3e}"
                result.check(f"p={p} f={name} base frame point {i}", base)

        for k in range(1, p + 3):
            config = ManifoldConfig.from_sexpr(p, homogeneity_function(p, k))
            for i, point in enumerate(_points(config, options.points, options.seed + k)):
                def normalized(config=config, point=point, k=k):
                    report = certify(config, point, k, settings)
                    return report.passed, f"worst {report.worst:.3e}"
                result.check(f"p={p} H_{k} order {k} point {i}", normalized)

            for j in range(1, k):
                lower = ManifoldConfig.from_sexpr(p, homogeneity_function(p, j))
                point = _points(lower, 1, options.seed)[0]

                def flat_beyond(lower=lower, point=point, j=j, k=k):
                    pulled = pullback(nabla_R_closed(lower, point, k), normalize_frame(lower, point, j))
                    model_term = build_model(p, k).tensors[k]
                    return pulled.is_zero and not model_term.is_zero, f"nnz {pulled.nnz}"
                result.check(f"p={p} H_{j} has no nabla^{k} R", flat_beyond)
    return result


def _random_triple(rng: np.random.Generator, n: int) -> Tuple[Tuple[float, ...], ...]:
    return tuple(tuple(rng.uniform(-1, 1, size=n)) for _ in range(3))


def alpha_suite(options: SuiteOptions) -> SuiteResult:
    result = SuiteResult('alpha')
    grid = parse_grid(options.grid)
    for p in options.p_values:
        table = presets(p)
        n = 6 + 4 * p
        single = table[f'N_{n}_exp'].config
        double = table[f'N_{n}_exp2'].config
        rng = np.random.default_rng(options.seed)
        for i in range(options.points):
            point = tuple(rng.uniform(-1, 1, size=n))
            X, Z0, theta = _random_triple(rng, n)
            for k in (2, 3):
                def quotient(point=point, X=X, Z0=Z0, theta=theta, k=k):
                    direct = float(alpha_direct(double, point, k))
                    via = float(alpha_via_theta(double, point, k, X, Z0, theta, options.settings))
                    close = abs(direct - via) <= options.settings.alpha_rel_tol * abs(direct)
                    return close, f"direct {direct:.12g} via theta {via:.12g}"
                result.check(f"p={p} triple {i} alpha^{k}", quotient)

        def unit(points=grid_points(single, grid, options.seed)):
            worst = max(abs(float(alpha_direct(single, point, k)) - 1) for point in points for k in range(2, 13))
            return worst <= 1e-12, f"max |alpha^k - 1| = {worst:.3e}"
        result.check(f"p={p} psi=exp alpha^k = 1", unit)

        def exact_value():
            point = [0] * n
            value = alpha_direct(double, point, 2)
            expected = _alpha_two_at_zero(p)
            return abs(float(value) - float(expected)) <= 1e-12, f"alpha^2(0) = {value}, expected {expected}"
        result.check(f"p={p} psi=exp+exp2 alpha^2 at z0=0", exact_value)

        def varies(points=grid_points(double, grid, options.seed)):
            values = [float(alpha_direct(double, point, 2)) for point in points]
            spread = max(values) - min(values)
            return spread > options.settings.constancy_tol, f"alpha^2 spread {spread:.3e}"
        result.check(f"p={p} psi=exp+exp2 alpha^2 varies", varies)
    return result


def _alpha_two_at_zero(p: int) -> sympy.Rational:
    """psi^(p+5) psi^(p+3) / psi^(p+4)^2 at 0 for psi = e^z0 + e^2z0, where psi^(n)(0) = 1 + 2^n"""
    def d(n):
        return 1 + 2 ** n
    return sympy.Rational(d(p + 5) * d(p + 3), d(p + 4) ** 2)


def classification_suite(options: SuiteOptions) -> SuiteResult:
    result = SuiteResult('classification')
    grid = parse_grid(options.grid)
    for p in options.p_values:
        n = 6 + 4 * p
        expected = {f'S_{n}': (True, True, float('inf')),
                    f'N_{n}_exp': (False, True, p + 2),
                    f'N_{n}_exp2': (False, False, p + 2)}
        for k in range(1, p + 3):
            expected[f'H_{n}_{k}'] = (False, True, k)
        for name, spec in presets(p).items():
            def decide(spec=spec, want=expected[name]):
                found = classify(spec.config, grid, options.settings)
                got = (found.symmetric, found.homogeneous, found.order)
                return got == want, f"got {got}, expected {want}"
            result.check(f"{name}", decide)
    return result


def isometry_suite(options: SuiteOptions) -> SuiteResult:
    result = SuiteResult('isometry')
    for p in options.p_values:
        n = 6 + 4 * p
        table = presets(p)
        for name in (f'H_{n}_1', f'N_{n}_exp'):
            config = table[name].config
            rng = np.random.default_rng(options.seed)
            P1 = random_point(config, rng, spread=1)
            P2 = random_point(config, rng, spread=1)

            def construct(config=config, P1=P1, P2=P2):
                report = build_isometry(config, P1, P2, samples=10, seed=options.seed, settings=options.settings)
                return report.passed, f"worst residual {report.worst:.3e}"
            result.check(f"{name}", construct)
    return result


SUITE_RUNNERS: Dict[str, Callable[[SuiteOptions], SuiteResult]] = {
    'oracle': oracle_suite,
    'symmetric': symmetric_suite,
    'geodesic': geodesic_suite,
    'weyl': weyl_suite,
    'certificates': certificate_suite,
    'alpha': alpha_suite,
    'classification': classification_suite,
    'isometry': isometry_suite,
}


def run_suites(names: Iterable[str], options: SuiteOptions) -> List[SuiteResult]:
    results = []
    for name in names:
        logger.info("running suite %s", name)
        results.append(SUITE_RUNNERS[name](options))
    return results
