import numpy as np
import pytest

from src.manifold import ManifoldConfig, random_point


@pytest.fixture
def flat():
    return ManifoldConfig.from_sexpr(1, '0')


@pytest.fixture
def h1():
    """H_10_1: f = z1 z0^2"""
    return ManifoldConfig.from_sexpr(1, '(* z1 (^ z0 2))')


@pytest.fixture
def n_exp():
    return ManifoldConfig.from_sexpr(1, '(+ (* z1 (^ z0 2)) (exp z0))')


@pytest.fixture
def n_exp2():
    return ManifoldConfig.from_sexpr(1, '(+ (* z1 (^ z0 2)) (exp z0) (exp (* 2 z0)))')


@pytest.fixture
def make_points():
    """Seeded rational (or float) points of a config"""
    def make(config, count, seed=0, exact=True, spread=2):
        rng = np.random.default_rng(seed)
        return [random_point(config, rng, exact, spread) for _ in range(count)]
    return make
