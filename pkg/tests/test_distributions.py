import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import PHI_COEFFS, fd_pairing, phi_ref
from stochrep.adjoint import assemble_adjoint
from stochrep.distributions import (
    CompactDistribution, cutoff, pushforward, pushforward_coeffs, simulate_for, spde_residual,
)
from stochrep.flow import BrownianDriver, simulate_flow
from stochrep.hermite import BasisSpec, delta_coeffs
from stochrep.models import brownian, model_from_lists, ornstein_uhlenbeck

NONLINEAR = model_from_lists(1, [[[[1.0, [0]], [0.2, [2]]]]], [[[-1.0, [1]], [0.1, [2]]]])


def _phi_pairing(coeffs):
    return coeffs[..., : len(PHI_COEFFS)] @ PHI_COEFFS


@pytest.mark.parametrize("order,tol", [(0, 1e-10), (1, 1e-6), (2, 1e-4)])
def test_pathwise_duality_against_finite_differences(order, tol):
    x, t, h = 0.3, 0.5, 1e-4
    basis = BasisSpec(1, 8)
    drv = BrownianDriver.on_interval(1, 17, t, 1e-3)
    psi = CompactDistribution.delta([x], (order,))
    ens = simulate_for(psi, NONLINEAR, drv, n_paths=6, record=[drv.n_steps])
    lhs = _phi_pairing(pushforward_coeffs(psi, ens, 0, basis))
    flow_at = lambda y: phi_ref(simulate_flow(NONLINEAR, [[y]], drv, n_paths=6, record=[drv.n_steps]).X[0, :, 0, 0])
    rhs = fd_pairing(flow_at, x, order, h)
    assert np.abs(lhs - rhs).max() <= tol


def test_measure_case_reduction():
    basis = BasisSpec(1, 12)
    psi = CompactDistribution(1, atoms=[(0.25, (0,), [0.1]), (0.75, (0,), [-0.6])])
    drv = BrownianDriver.on_interval(1, 0, 0.3, 0.01)
    ens = simulate_for(psi, ornstein_uhlenbeck(1), drv, n_paths=4, record=[drv.n_steps])
    got = pushforward_coeffs(psi, ens, 0, basis)
    X = ens.X[0, :, :, :]
    ref = 0.25 * basis.evaluate(X[:, 0]) + 0.75 * basis.evaluate(X[:, 1])
    np.testing.assert_array_equal(got, ref)


def test_single_delta_is_delta_of_flow():
    basis = BasisSpec(1, 12)
    psi = CompactDistribution.delta([0.4])
    drv = BrownianDriver.on_interval(1, 2, 0.5, 0.01)
    ens = simulate_for(psi, NONLINEAR, drv, n_paths=2)
    y = pushforward(psi, ens, 0.5, basis, path=1)
    ref = delta_coeffs(ens.X[ens.index(0.5), 1, 0], None, basis)
    np.testing.assert_allclose(y.coeffs, ref.coeffs, atol=1e-14)


def test_time_zero_is_identity():
    basis = BasisSpec(1, 16)
    psi = CompactDistribution.delta([0.2], (2,), 1.5) + CompactDistribution.density("bump", [-1.0], [0.5], 12, (1,))
    drv = BrownianDriver.on_interval(1, 0, 0.1, 0.01)
    ens = simulate_for(psi, NONLINEAR, drv, n_paths=3)
    got = pushforward_coeffs(psi, ens, 0, basis)
    np.testing.assert_allclose(got, np.broadcast_to(psi.to_series(basis).coeffs, got.shape), atol=1e-13)


def test_linearity_on_shared_noise():
    basis = BasisSpec(1, 10)
    p1 = CompactDistribution.delta([0.2], (1,))
    p2 = CompactDistribution.density("uniform", [-0.5], [0.5], 8)
    both = 2.0 * p1 + (-0.5) * p2
    drv = BrownianDriver.on_interval(1, 8, 0.2, 0.01)
    ens = simulate_for(both, NONLINEAR, drv, n_paths=3, record=[drv.n_steps])
    lhs = pushforward_coeffs(both, ens, 0, basis)
    rhs = 2.0 * pushforward_coeffs(p1, ens, 0, basis) - 0.5 * pushforward_coeffs(p2, ens, 0, basis)
    np.testing.assert_allclose(lhs, rhs, atol=1e-13)


def test_pushforward_errors():
    basis = BasisSpec(1, 4)
    psi = CompactDistribution.delta([0.0], (2,))
    drv = BrownianDriver.on_interval(1, 0, 0.1, 0.01)
    ens = simulate_flow(brownian(1), [[0.0]], drv, K=1, n_paths=1)
    with pytest.raises(ValueError):
        pushforward_coeffs(psi, ens, 0, basis)
    ens2 = simulate_flow(brownian(1), [[1.0]], drv, K=2, n_paths=1)
    with pytest.raises(KeyError):
        pushforward_coeffs(psi, ens2, 0, basis)


def test_support_box_enforced():
    with pytest.raises(ValueError):
        CompactDistribution(1, atoms=[(1.0, (0,), [2.0])], support=([-1.0], [1.0]))


def test_density_pairs_like_integral():
    psi = CompactDistribution.density(lambda x: x[:, 0] ** 2, [-1.0], [2.0], 10)
    assert psi.pair(lambda g, pts: np.ones(len(pts))) == pytest.approx(3.0, rel=1e-12)
    dpsi = CompactDistribution.density("uniform", [0.0], [1.0], 10, (1,))
    # <g d delta, phi> = -int g phi' ; phi = x^2 on a uniform density of mass 1 gives -1
    assert dpsi.pair(lambda g, pts: 2 * pts[:, 0] if g == (1,) else pts[:, 0] ** 2) == pytest.approx(-1.0)


def test_cutoff_is_one_inside_and_zero_outside():
    x = np.array([[-2.0], [-1.0], [0.0], [1.0], [1.5], [3.0]])
    c = cutoff(x, [-1.0], [1.0], 0.5)
    np.testing.assert_array_equal(c, [0.0, 1.0, 1.0, 1.0, 0.0, 0.0])


def test_residual_vanishes_at_time_zero():
    basis = BasisSpec(1, 16)
    gal = assemble_adjoint(brownian(1), basis)
    drv = BrownianDriver.on_interval(1, 0, 0.5, 0.01).until(0.0)
    res = spde_residual(CompactDistribution.delta([0.0]), brownian(1), drv, 3.0, gal, n_paths=2)
    assert np.all(res.residual == 0.0)


def _residual_ladder(q, n_paths, seed=5):
    basis = BasisSpec(1, 32)
    gal = assemble_adjoint(brownian(1), basis)
    fine = BrownianDriver.on_interval(1, seed, 0.5, 1e-3)
    psi = CompactDistribution.delta([0.0])
    out = []
    for drv in (fine.coarsen(4), fine):
        out.append(spde_residual(psi, brownian(1), drv, q, gal, n_paths=n_paths).max_residual.mean())
    return out


def test_residual_order_and_q_insensitivity():
    coarse, fine = _residual_ladder(3.0, 128)
    assert fine < coarse
    assert np.log(coarse / fine) / np.log(4.0) >= 0.4
    coarse4, fine4 = _residual_ladder(4.0, 128)
    assert fine4 <= fine and fine / fine4 < 2.0


@settings(max_examples=10)
@given(st.floats(-1.0, 1.0), st.floats(0.1, 3.0))
def test_scaling_is_linear(x, a):
    basis = BasisSpec(1, 8)
    psi = CompactDistribution.delta([x], (1,))
    drv = BrownianDriver.on_interval(1, 1, 0.1, 0.01)
    ens = simulate_for(psi, NONLINEAR, drv, n_paths=2, record=[drv.n_steps])
    np.testing.assert_allclose(pushforward_coeffs(a * psi, ens, 0, basis),
                               a * pushforward_coeffs(psi, ens, 0, basis), rtol=1e-13, atol=1e-15)
