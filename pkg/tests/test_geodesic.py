import math
from fractions import Fraction

import numpy as np
import pytest
import sympy

from src.errors import ConfigError, TensorShapeError
from src.geodesic import (
    GeodesicInitialData, exp_map, geodesic_closed, geodesic_numeric, log_map, ode_residual, sample_trajectory,
)
from src.expr import to_sympy_number
from src.manifold import random_point

ORIGIN = (0,) * 10
# beta = 1 and eta_z0 = 1, everything else at rest
HAND_VELOCITY = (1, 1, 0, 0, 0, 0, 0, 0, 0, 0)
ZTS0 = 8


def _data(config, seed, exact=True, spread=1):
    rng = np.random.default_rng(seed)
    point = random_point(config, rng, exact, spread)
    velocity = random_point(config, rng, exact, spread)
    return GeodesicInitialData.from_vectors(config, point, velocity)


def _max_error(a, b):
    return max(abs(float(x) - float(y)) for x, y in zip(a, b))


def test_hand_computed_geodesic(flat):
    data = GeodesicInitialData.from_vectors(flat, ORIGIN, HAND_VELOCITY)
    end = geodesic_closed(flat, data, 1)
    assert end[ZTS0] == sympy.Rational(-1, 6)
    assert end[0] == 1
    assert end[1] == 1
    assert end[5] == 0
    assert abs(float(end[ZTS0]) + 1 / 6) <= 1e-12


def test_hand_computed_geodesic_inverted(flat):
    target = (1, 1, 0, 0, 0, 0, 0, 0, Fraction(-1, 6), 0)
    assert log_map(flat, ORIGIN, target) == HAND_VELOCITY


def test_hand_geodesic_in_floating_mode(flat):
    data = GeodesicInitialData.from_vectors(flat, [0.0] * 10, [float(v) for v in HAND_VELOCITY])
    end = geodesic_closed(flat, data, 1.0)
    assert end[ZTS0] == pytest.approx(-1 / 6, abs=1e-12)


def test_straight_line_without_forcing(n_exp):
    point = (1, Fraction(1, 2), 2, -1, 0, 3, 0, 1, 0, 0)
    velocity = (0, 0, 0, 0, 0, 2, 1, 0, Fraction(-1, 3), 5)
    data = GeodesicInitialData.from_vectors(n_exp, point, velocity)
    t = Fraction(3, 2)
    expected = tuple(to_sympy_number(p + t * v) for p, v in zip(point, velocity))
    assert geodesic_closed(n_exp, data, t) == expected
    numeric = geodesic_numeric(n_exp, data, float(t), 1e-2)
    assert _max_error(numeric, expected) <= 1e-12


def test_closed_form_solves_geodesic_equations(n_exp, h1):
    for config in (n_exp, h1):
        for seed in range(3):
            data = _data(config, seed, spread=2)
            assert ode_residual(config, data, [0, Fraction(1, 2), 1, 2]) <= 1e-8


def test_ode_residual_needs_exact_data(n_exp):
    with pytest.raises(ConfigError):
        ode_residual(n_exp, _data(n_exp, 0, exact=False), [1])


def test_numeric_integrator_matches_closed_form(n_exp):
    for seed in range(5):
        data = _data(n_exp, seed)
        closed = geodesic_closed(n_exp, data, 1)
        assert _max_error(geodesic_numeric(n_exp, data, 1.0, 1e-3), closed) <= 1e-6


def test_integrator_is_fourth_order(n_exp):
    point = random_point(n_exp, np.random.default_rng(11), spread=1)
    velocity = (1, 1, Fraction(1, 2), 0, 0, 0, 0, 0, 0, 0)
    data = GeodesicInitialData.from_vectors(n_exp, point, velocity)
    closed = geodesic_closed(n_exp, data, 1)
    coarse = _max_error(geodesic_numeric(n_exp, data, 1.0, 0.1), closed)
    fine = _max_error(geodesic_numeric(n_exp, data, 1.0, 0.05), closed)
    assert coarse / fine > 10


def test_integrator_rejects_bad_step(n_exp):
    with pytest.raises(ValueError):
        geodesic_numeric(n_exp, _data(n_exp, 0), 1.0, 0.0)


def test_exp_log_round_trip_exact(h1):
    for seed in range(5):
        rng = np.random.default_rng(seed)
        P = random_point(h1, rng)
        v = random_point(h1, rng)
        Q = exp_map(h1, P, v)
        assert log_map(h1, P, Q) == v
        assert exp_map(h1, P, log_map(h1, P, Q)) == Q


def test_exp_log_round_trip_floating(n_exp):
    for seed in range(5):
        rng = np.random.default_rng(seed)
        P = random_point(n_exp, rng, exact=False)
        v = random_point(n_exp, rng, exact=False)
        Q = exp_map(n_exp, P, v)
        assert _max_error(log_map(n_exp, P, Q), v) <= 1e-9
        assert _max_error(exp_map(n_exp, P, log_map(n_exp, P, Q)), Q) <= 1e-9


def test_log_of_the_base_point_is_zero(n_exp, make_points):
    P = make_points(n_exp, 1)[0]
    assert all(v == 0 for v in log_map(n_exp, P, P))


def test_geodesics_are_complete(h1):
    end = geodesic_closed(h1, _data(h1, 4), 10 ** 6)
    assert all(math.isfinite(float(v)) for v in end)


def test_affine_reparametrization(h1, n_exp):
    data = _data(h1, 2)
    a = Fraction(3, 2)
    assert geodesic_closed(h1, data.scaled(a), 2) == geodesic_closed(h1, data, 2 * a)
    data = _data(n_exp, 2, exact=False)
    assert _max_error(geodesic_closed(n_exp, data.scaled(1.5), 0.8), geodesic_closed(n_exp, data, 1.2)) <= 1e-9


def test_sample_trajectory_rows(h1):
    rows = sample_trajectory(h1, _data(h1, 1), [0, 0.5, 1])
    assert len(rows) == 3
    assert all(len(row) == 11 for row in rows)
    assert rows[1][0] == 0.5
    assert all(isinstance(v, float) for v in rows[2])


def test_initial_data_shape(h1):
    with pytest.raises(TensorShapeError):
        GeodesicInitialData.from_vectors(h1, ORIGIN, ORIGIN[:-1])
    data = GeodesicInitialData.from_vectors(h1, ORIGIN, HAND_VELOCITY)
    assert data.velocity == HAND_VELOCITY
    assert data.eta == (1, 0, 0, 0)
