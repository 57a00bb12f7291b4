import numpy as np
import pytest
import sympy

from src.errors import ConfigError, TensorShapeError, VarianceError
from src.manifold import metric, metric_inverse, nabla_R_closed
from src.tensor import (
    CoordinateChart, Frame, SparseTensor, Symmetry, Variance, contract, evaluate_on, full_contraction,
    json_number, lower_last_slot, parse_json_number, pullback, raise_last_slot, sup_difference, trace,
    tensors_close,
)

POINT = (0, 2, 3, 5, 7, 0, 0, 0, 0, 0)


def test_chart_layout_for_p1():
    chart = CoordinateChart(1)
    assert chart.names == ('x', 'z0', 'z1', 'zt0', 'zt1', 'xs', 'zs0', 'zs1', 'zts0', 'zts1')
    assert chart.dual(chart.z(1)) == chart.zs(1) == 7
    assert chart.dual(chart.zt(0)) == chart.zts(0) == 8
    assert chart.index('xs') == 5
    with pytest.raises(ConfigError):
        chart.index('zs3')


def test_curvature_symmetry_lookup():
    t = SparseTensor.covariant(10, 4, {(0, 1, 2, 0): sympy.Integer(5)}, Symmetry.CURVATURE)
    assert t[(0, 1, 2, 0)] == 5
    assert t[(1, 0, 2, 0)] == -5
    assert t[(0, 2, 1, 0)] == 5
    assert t[(2, 0, 0, 1)] == 5
    assert t[(0, 1, 0, 2)] == -5
    assert t[(1, 2, 0, 0)] == 0


def test_curvature_orbit_has_eight_components():
    t = SparseTensor.covariant(10, 4, {(0, 1, 2, 3): sympy.Integer(1)}, Symmetry.CURVATURE)
    assert len(t.components()) == 8
    assert t.nnz == 1


def test_build_rejects_bad_indices():
    with pytest.raises(TensorShapeError):
        SparseTensor.covariant(4, 2, {(0, 4): 1})
    with pytest.raises(TensorShapeError):
        SparseTensor.covariant(4, 3, {}, Symmetry.PAIR)


def test_zero_entries_are_dropped():
    t = SparseTensor.covariant(4, 2, {(0, 1): 0, (1, 1): 3})
    assert t.nnz == 1
    assert not t.is_zero
    assert SparseTensor.covariant(4, 2).is_zero


def test_full_contraction_of_metric_with_its_inverse(h1):
    g = metric(h1, POINT)
    g_inv = metric_inverse(h1, POINT)
    assert full_contraction([g], [(0, 1)], g_inv) == 10
    assert trace(g, 0, 1, g_inv)[()] == 10


def test_contract_metric_through_inverse_gives_metric(h1):
    g = metric(h1, POINT)
    g_inv = metric_inverse(h1, POINT)
    assert tensors_close(contract(g, 1, g, 0, g_inv), g)


def test_raise_then_lower(h1):
    g = metric(h1, POINT)
    g_inv = metric_inverse(h1, POINT)
    mixed = raise_last_slot(g, g_inv)
    assert mixed.variance == (Variance.COVARIANT, Variance.CONTRAVARIANT)
    assert mixed.components() == {(a, a): 1 for a in range(10)}
    assert tensors_close(lower_last_slot(mixed, g), g)


def test_pullback_along_identity_and_scaling(h1):
    g = metric(h1, POINT)
    same = pullback(g, Frame.identity(10))
    assert same.components() == g.components()
    doubled = pullback(g, Frame.from_matrix(None, 2 * sympy.eye(10)))
    assert doubled.components() == {i: 4 * v for i, v in g.components().items()}


def test_evaluate_on_leaves_open_slots(h1):
    g = metric(h1, POINT)
    e_x = [1] + [0] * 9
    row = evaluate_on(g, [e_x, None])
    assert row == {(0,): -86, (5,): 1}
    assert evaluate_on(g, [e_x, e_x]) == -86


def test_permute_moves_slots():
    t = SparseTensor.covariant(3, 3, {(0, 1, 2): 7})
    assert t.permute((2, 0, 1)).components() == {(2, 0, 1): 7}
    with pytest.raises(TensorShapeError):
        t.permute((0, 0, 1))


def test_json_numbers():
    assert json_number(sympy.Rational(3, 4)) == '3/4'
    assert json_number(sympy.Integer(-2)) == -2
    assert json_number(2.5) == 2.5
    assert parse_json_number('3/4') == sympy.Rational(3, 4)
    assert parse_json_number(5) == 5


def test_tensor_json_keeps_symmetry():
    t = SparseTensor.covariant(6, 4, {(0, 1, 2, 0): sympy.Rational(1, 2)}, Symmetry.CURVATURE)
    data = t.to_json()
    assert data['entries'] == [[[0, 1, 2, 0], '1/2']]
    assert SparseTensor.from_json(data)[(1, 0, 0, 2)] == sympy.Rational(1, 2)


def test_dependent_frame_rejected():
    columns = [[1, 0], [2, 0]]
    with pytest.raises(TensorShapeError):
        Frame.from_columns(None, columns)


def test_variance_checks(h1):
    g = metric(h1, POINT)
    g_inv = metric_inverse(h1, POINT)
    with pytest.raises(VarianceError):
        contract(g_inv, 0, g, 0, g_inv)
    with pytest.raises(VarianceError):
        raise_last_slot(g, g)
    with pytest.raises(VarianceError):
        pullback(g_inv, Frame.identity(10))


def test_sup_difference():
    a = SparseTensor.covariant(3, 2, {(0, 0): 1.0, (1, 2): 2.0})
    b = SparseTensor.covariant(3, 2, {(0, 0): 1.5})
    assert sup_difference(a, b) == 2.0
    assert not tensors_close(a, b)


def _dense_contraction(factors, pairs, inverse):
    letters = 'abcdefghijkl'
    specs, operands, offset = [], [], 0
    for factor in factors:
        specs.append(letters[offset:offset + factor.order])
        operands.append(factor.to_dense())
        offset += factor.order
    for a, b in pairs:
        specs.append(letters[a] + letters[b])
        operands.append(inverse.to_dense())
    return np.einsum(','.join(specs) + '->', *operands)


@pytest.mark.parametrize('pairs', [
    ((0, 4), (1, 3), (2, 5)),
    ((0, 1), (2, 5), (3, 4)),
    ((0, 5), (1, 2), (3, 4)),
])
def test_full_contraction_agrees_with_dense_einsum(pairs):
    rng = np.random.default_rng(len(pairs) + pairs[0][1])
    n = 4

    def random_entries(order):
        return {tuple(int(i) for i in rng.integers(0, n, size=order)): sympy.Integer(int(rng.integers(-5, 6)))
                for _ in range(12)}

    first = SparseTensor.covariant(n, 3, random_entries(3))
    second = SparseTensor.covariant(n, 3, random_entries(3))
    inverse_entries = {(a, b): sympy.Integer(int(rng.integers(-3, 4))) for a in range(n) for b in range(a, n)}
    inverse = SparseTensor.build(n, [Variance.CONTRAVARIANT] * 2, inverse_entries, Symmetry.PAIR)
    sparse = full_contraction([first, second], pairs, inverse)
    assert float(sparse) == pytest.approx(_dense_contraction([first, second], pairs, inverse), abs=1e-9)


def _sparse_change(n, seed):
    """Unit upper triangular integer matrix with a few off-diagonal entries"""
    rng = np.random.default_rng(seed)
    matrix = sympy.eye(n)
    for _ in range(n):
        a, b = sorted(int(i) for i in rng.choice(n, size=2, replace=False))
        matrix[a, b] = int(rng.integers(-2, 3))
    return matrix


def test_pullback_is_functorial(h1):
    first = _sparse_change(10, 1)
    second = _sparse_change(10, 2)
    outer = Frame.from_matrix(None, first)
    composed = outer.compose(second)
    for t in (metric(h1, POINT), nabla_R_closed(h1, POINT, 0), nabla_R_closed(h1, POINT, 1)):
        direct = pullback(t, composed)
        stepwise = pullback(pullback(t, outer), Frame.from_matrix(None, second))
        assert sup_difference(direct, stepwise) == 0
