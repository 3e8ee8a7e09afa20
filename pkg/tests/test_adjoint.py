import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochrep.adjoint import adjoint_apply, assemble_adjoint, generator_galerkin, hs_norm_A
from stochrep.distributions import cutoff
from stochrep.hermite import (
    BasisSpec, HermiteSeries, apply_derivative, delta_coeffs, hermite_functions, sobolev_norm, transform,
)
from stochrep.models import brownian, constant_model, model_from_lists, ornstein_uhlenbeck, zero_model

NONLINEAR = model_from_lists(1, [[[[1.0, [0]], [0.2, [2]]]]], [[[-1.0, [1]], [0.1, [2]]]])
MODELS_2D = model_from_lists(2, [[[[1.0, [0, 0]], [0.3, [1, 0]]], 0.2], [0.0, [[0.5, [0, 1]]]]],
                             [[[-1.0, [1, 0]]], [[0.2, [1, 1]]]])


@pytest.mark.parametrize("model,basis", [
    (NONLINEAR, BasisSpec(1, 24)),
    (ornstein_uhlenbeck(1), BasisSpec(1, 24)),
    (MODELS_2D, BasisSpec(2, 10)),
])
def test_adjoint_is_transpose_of_generator(model, basis):
    gal = assemble_adjoint(model, basis)
    GA, GL = generator_galerkin(model, basis, n_quad=basis.n_max + 12)
    scale = max(1.0, np.abs(GL).max())
    assert np.abs(gal.L - GL.T).max() <= 1e-10 * scale
    for a in range(model.r):
        assert np.abs(gal.A[a] - GA[a].T).max() <= 1e-10 * scale


def test_brownian_L_star_of_delta():
    basis = BasisSpec(1, 40)
    out = adjoint_apply("L", delta_coeffs([0.0], None, basis), brownian(1))
    ref = delta_coeffs([0.0], (2,), basis).coeffs * 0.5
    keep = basis.degrees <= basis.n_max - 2
    np.testing.assert_allclose(out.coeffs[keep], ref[keep], atol=1e-12)


def test_ou_stationary_density():
    basis = BasisSpec(1, 48)
    rho = transform(lambda x: np.exp(-x[..., 0] ** 2) / np.sqrt(np.pi), basis, n_quad=160)
    out = adjoint_apply("L", rho, ornstein_uhlenbeck(1))
    keep = basis.degrees <= 32
    assert np.abs(out.coeffs[keep]).max() <= 1e-8


def test_duality_with_mollified_test_function():
    basis = BasisSpec(1, 40)
    gal = assemble_adjoint(NONLINEAR, basis)
    _, GL = generator_galerkin(NONLINEAR, basis, n_quad=80)
    rng = np.random.default_rng(3)
    for _ in range(5):
        psi = HermiteSeries(basis, rng.normal(size=basis.size) / (1 + basis.degrees) ** 2)
        phi = transform(lambda x: cutoff(x, [-2.0], [2.0], 0.5) * np.cos(1.3 * x[..., 0]), basis, n_quad=200)
        lhs = gal.L @ psi.coeffs @ phi.coeffs
        rhs = psi.coeffs @ (GL @ phi.coeffs)
        assert abs(lhs - rhs) <= 1e-6


def test_hs_norm_cases():
    basis = BasisSpec(1, 24)
    psi = delta_coeffs([0.4], None, basis)
    assert hs_norm_A(psi, assemble_adjoint(zero_model(1), basis), 3.0) == 0.0
    gal = assemble_adjoint(constant_model([[1.0]], [0.0]), basis)
    ref = sobolev_norm(apply_derivative(psi), -3.0) ** 2
    assert hs_norm_A(psi, gal, 3.0) == pytest.approx(ref, rel=1e-12)


def _mollified_panel(n_fun=100, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n_fun, 9))
    def make(a):
        return lambda x: cutoff(x, [-1.5], [1.5], 0.5) * (hermite_functions(8, x[..., 0]) @ a)
    return [make(a) for a in A]


def _operator_constant(op, n_max, p, q):
    basis = BasisSpec(1, n_max)
    gal = assemble_adjoint(NONLINEAR, basis)
    ratios = []
    for f in _mollified_panel():
        psi = transform(f, basis, n_quad=4 * n_max + 40)
        ratios.append(op(gal, psi, q) / sobolev_norm(psi, -p))
    return max(ratios)


@pytest.mark.parametrize("which", ["L", "A"])
def test_boundedness_constant_stable_under_doubling(which):
    p = 1.0
    q = np.floor(p) + 3
    if which == "L":
        op = lambda gal, psi, q: sobolev_norm(gal.apply_L(psi), -q)
    else:
        op = lambda gal, psi, q: np.sqrt(hs_norm_A(psi, gal, q))
    c1 = _operator_constant(op, 32, p, q)
    c2 = _operator_constant(op, 64, p, q)
    assert abs(c2 / c1 - 1) <= 0.2


@settings(max_examples=20)
@given(st.lists(st.floats(-1, 1), min_size=13, max_size=13))
def test_adjoint_linear(coeffs):
    basis = BasisSpec(1, 12)
    gal = assemble_adjoint(ornstein_uhlenbeck(1), basis)
    a = HermiteSeries(basis, np.array(coeffs))
    b = HermiteSeries(basis, np.arange(13.0))
    lhs = gal.apply_L(a * 2.0 + b).coeffs
    np.testing.assert_allclose(lhs, 2 * gal.apply_L(a).coeffs + gal.apply_L(b).coeffs, atol=1e-10)


def test_unknown_operator():
    basis = BasisSpec(1, 4)
    with pytest.raises(ValueError):
        adjoint_apply("Q", HermiteSeries.zeros(basis), brownian(1))
