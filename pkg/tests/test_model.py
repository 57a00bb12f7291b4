import pytest
import sympy

from src.errors import ConfigError, PreconditionError, TensorShapeError
from src.instances import homogeneity_function
from src.manifold import ManifoldConfig, nabla_R_closed
from src.model import (
    Model, base_frame, build_model, certify, decomposition_search, normalize_frame, solve_normalization,
    verify_isomorphism,
)
from src.tensor import SparseTensor, Symmetry, pullback

X, Z0, Z1, ZT0, ZT1, XS = 0, 1, 2, 3, 4, 5


def _homogeneous(p, k):
    return ManifoldConfig.from_sexpr(p, homogeneity_function(p, k))


def test_model_entries_for_p1():
    model = build_model(1, 3)
    assert model.k == 3
    assert model.inner_product[(X, XS)] == model.inner_product[(XS, X)] == 1
    assert model.inner_product[(Z1, 7)] == 1
    A0, A1, A2, A3 = model.tensors
    assert A0[(X, Z0, ZT0, X)] == A0[(X, Z1, ZT1, X)] == 1
    assert A0[(Z0, X, ZT0, X)] == -1
    assert A0[(X, Z0, Z0, X)] == 0
    assert A1[(X, Z0, Z1, X, Z0)] == A1[(X, Z0, Z0, X, Z1)] == 1
    assert A1[(X, Z1, Z0, X, Z0)] == 1
    assert A1[(X, Z0, Z0, X, Z0)] == 0
    assert A2[(X, Z0, Z0, X, Z0, Z0)] == 1
    assert A3[(X, Z0, Z0, X, Z0, Z0, Z0)] == 1
    assert A3.nnz == 1


def test_model_order_bounds():
    with pytest.raises(ConfigError):
        build_model(1, 4)
    with pytest.raises(ConfigError):
        build_model(0, 0)
    with pytest.raises(ConfigError):
        build_model(1, 2).truncate(3)


def test_truncate_keeps_leading_tensors():
    model = build_model(2, 4)
    shorter = model.truncate(1)
    assert shorter.k == 1
    assert shorter.tensors == model.tensors[:2]
    assert shorter.to_json()['order'] == 1


def test_base_frame_certifies_order_zero(flat, h1, n_exp, n_exp2, make_points):
    model = build_model(1, 0)
    for config in (flat, h1, n_exp, n_exp2):
        for point in make_points(config, 3):
            report = verify_isomorphism(config, point, base_frame(config, point), model)
            assert report.passed, report.residuals


def test_base_frame_is_exact_at_rational_points(n_exp, make_points):
    point = make_points(n_exp, 1)[0]
    assert not base_frame(n_exp, point).exact
    h1_frame = base_frame(_homogeneous(1, 1), point)
    assert h1_frame.exact


@pytest.mark.parametrize('k', [1, 2, 3])
def test_homogeneity_instances_certify(make_points, k):
    config = _homogeneous(1, k)
    for point in make_points(config, 3, seed=k):
        report = certify(config, point, k)
        assert report.passed, report.residuals
        assert set(report.residuals) == {'g', 'R'} | {f'nabla^{j} R' for j in range(1, k + 1)}


@pytest.mark.slow
@pytest.mark.parametrize('k', [1, 2, 3, 4])
def test_homogeneity_instances_certify_p2(make_points, k):
    config = _homogeneous(2, k)
    for point in make_points(config, 2, seed=k):
        assert certify(config, point, k).passed


def test_polynomial_normalization_is_exact(h1, make_points):
    for point in make_points(h1, 3):
        report = certify(h1, point, 1)
        assert all(r == 0.0 for r in report.residuals.values())
        coefficients = solve_normalization(h1, point, 1)
        assert coefficients.exact
        assert all(r == 0 for r in coefficients.residuals())


def test_normalization_residuals_in_floating_mode(make_points):
    config = _homogeneous(1, 3)
    point = make_points(config, 1)[0]
    coefficients = solve_normalization(config, point, 3)
    assert not coefficients.exact
    assert coefficients.rescaling is not None
    assert all(abs(r) <= 1e-12 for r in coefficients.residuals())
    assert 'rescaling' in coefficients.to_json()


def test_normalization_preconditions(h1, make_points):
    point = make_points(h1, 1)[0]
    with pytest.raises(PreconditionError) as info:
        solve_normalization(h1, point, 2)
    assert info.value.quantity == 'psi^(4)'

    quartic = _homogeneous(1, 2)
    with pytest.raises(PreconditionError) as info:
        solve_normalization(quartic, point, 3)
    assert info.value.quantity == 'psi^(5)'

    p2 = ManifoldConfig.from_sexpr(2, '(* z1 (^ z0 2))')
    with pytest.raises(PreconditionError) as info:
        solve_normalization(p2, (0,) * 14, 2)
    assert info.value.quantity == 'epsilon_2,2'

    skew = ManifoldConfig.from_sexpr(1, '(* z0 z1)')
    with pytest.raises(PreconditionError) as info:
        normalize_frame(skew, point, 1)
    assert info.value.quantity == 'shape'


def test_higher_order_frame_certifies_lower_models(make_points):
    config = _homogeneous(1, 3)
    model = build_model(1, 3)
    point = make_points(config, 1, seed=5)[0]
    frame = normalize_frame(config, point, 3)
    for j in range(4):
        assert verify_isomorphism(config, point, frame, model.truncate(j)).passed


def test_next_derivative_vanishes_below_the_model(h1, make_points):
    point = make_points(h1, 1, seed=2)[0]
    frame = normalize_frame(h1, point, 1)
    assert pullback(nabla_R_closed(h1, point, 2), frame).is_zero
    assert not build_model(1, 2).tensors[2].is_zero
    assert not verify_isomorphism(h1, point, frame, build_model(1, 2)).passed


def test_certificate_report_json(h1, make_points):
    point = make_points(h1, 1)[0]
    data = certify(h1, point, 1).to_json()
    assert data['order'] == 1
    assert data['passed'] is True
    assert len(data['point']) == 10


def test_dimension_mismatch(h1, make_points):
    point = make_points(h1, 1)[0]
    with pytest.raises(TensorShapeError):
        verify_isomorphism(h1, point, base_frame(h1, point), build_model(2, 0))


def test_model_exhausts_decomposition_search():
    result = decomposition_search(build_model(1, 0), trials=200)
    assert result.exhausted
    assert result.to_json() == {'trials': 200, 'found': False}


def test_decomposable_toy_is_split():
    # two curvature blocks on span(e0, e2) and span(e1, e3), orthogonal to each other
    inner = SparseTensor.covariant(4, 2, {(0, 2): sympy.Integer(1), (1, 3): sympy.Integer(1)}, Symmetry.PAIR)
    blocks = {(0, 2, 2, 0): sympy.Integer(1), (1, 3, 3, 1): sympy.Integer(2)}
    toy = Model(4, inner, (SparseTensor.covariant(4, 4, blocks, Symmetry.CURVATURE),))
    assert not toy.tensors[0].is_zero
    result = decomposition_search(toy, trials=2000, seed=1)
    assert not result.exhausted
    assert result.found.first.shape[1] + result.found.second.shape[1] == 4
    assert result.to_json()['found'] is True
