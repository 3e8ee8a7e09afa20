import numpy as np
import pytest

from oracles import brownian_law, gaussian_law_coeffs, ou_law
from stochrep.distributions import CompactDistribution
from stochrep.hermite import BasisSpec, delta_coeffs, transform
from stochrep.models import brownian, model_from_lists, ornstein_uhlenbeck, zero_model
from stochrep.solver import (
    NumericalFailure, default_p, default_q, estimate_kernel, solve_forward_galerkin, solve_forward_mc,
    stable_step, truncation_sensitivity,
)

DELTA0 = CompactDistribution.delta([0.0])


def test_default_exponents():
    assert default_p(1, 0) == pytest.approx(0.5)
    assert default_p(2, 2) == pytest.approx(1.75)
    assert default_q(1.75) == 4


def test_rejects_small_p():
    with pytest.raises(ValueError):
        solve_forward_mc(CompactDistribution.delta([0.0], (1,)), brownian(1), 0.5, 10, 0.1, BasisSpec(1, 4), 0, p=0.7)


def test_brownian_delta_matches_normal_law():
    basis = BasisSpec(1, 16)
    rep = solve_forward_mc(DELTA0, brownian(1), 1.0, 100_000, 0.05, basis, seed=1)
    ref = gaussian_law_coeffs(*brownian_law(0.0, 1.0)[:2], 16)
    z = np.abs(rep.mean[-1] - ref) / rep.se[-1]
    assert z.max() <= 4
    assert abs(rep.mean[-1, 1]) <= 3 * rep.se[-1, 1]


def test_ou_delta_matches_law():
    basis = BasisSpec(1, 16)
    rep = solve_forward_mc(DELTA0, ornstein_uhlenbeck(1), 1.0, 100_000, 1 / 400, basis, seed=2)
    mean, var, _ = ou_law(0.0, 1.0)
    z = np.abs(rep.mean[-1] - gaussian_law_coeffs(mean, var, 16)) / rep.se[-1]
    assert z.max() <= 4


def test_time_zero_returns_psi():
    basis = BasisSpec(1, 8)
    psi = CompactDistribution.delta([0.3], (1,))
    rep = solve_forward_mc(psi, ornstein_uhlenbeck(1), [0.0, 0.5], 64, 0.1, basis, seed=0)
    np.testing.assert_allclose(rep.mean[0], psi.to_series(basis).coeffs, atol=1e-14)
    assert np.all(rep.se[0] <= 1e-14)


def test_deterministic_and_chunk_consistent():
    basis = BasisSpec(1, 6)
    a = solve_forward_mc(DELTA0, ornstein_uhlenbeck(1), 0.5, 9000, 0.05, basis, seed=4)
    b = solve_forward_mc(DELTA0, ornstein_uhlenbeck(1), 0.5, 9000, 0.05, basis, seed=4)
    np.testing.assert_array_equal(a.mean, b.mean)
    np.testing.assert_array_equal(a.se, b.se)
    assert a.n_paths == 9000


def test_weak_error_order_one():
    basis = BasisSpec(1, 4)
    x0 = 1.0
    mean, var, _ = ou_law(x0, 1.0)
    ref = gaussian_law_coeffs(mean, var, 4)
    psi = CompactDistribution.delta([x0])
    errs = [np.abs(solve_forward_mc(psi, ornstein_uhlenbeck(1), 1.0, 1_000_000, dt, basis, seed=3).mean[-1] - ref).max()
            for dt in (0.2, 0.1)]
    assert 1.6 <= errs[0] / errs[1] <= 2.6


def test_second_moment_probe_stable_under_doubling():
    basis = BasisSpec(1, 16)
    psi = CompactDistribution.delta([0.0], (1,))
    a = solve_forward_mc(psi, brownian(1), [0.25, 0.5, 1.0], 4000, 0.05, basis, seed=5)
    b = solve_forward_mc(psi, brownian(1), [0.25, 0.5, 1.0], 8000, 0.05, basis, seed=6)
    assert np.all(np.isfinite(a.second_moment))
    assert np.all(np.abs(a.second_moment - b.second_moment) <= 4 * np.hypot(a.second_moment_se, b.second_moment_se))


def test_blowup_is_reported():
    wild = model_from_lists(1, [[2.0]], [[[1.0, [3]]]])
    with pytest.raises(NumericalFailure):
        solve_forward_mc(CompactDistribution.delta([1.0]), wild, 2.0, 200, 0.1, BasisSpec(1, 4), seed=0)


def test_truncation_sensitivity():
    basis = BasisSpec(1, 8)
    c = np.zeros(basis.size)
    c[0] = 1.0
    assert truncation_sensitivity(c, basis, 1.0) == 0.0
    c[8] = 1.0
    assert truncation_sensitivity(c, basis, 1.0) > 0


def test_galerkin_heat_moment():
    basis = BasisSpec(1, 64)
    path = solve_forward_galerkin(DELTA0, brownian(1), 0.5, basis)
    phi = transform(lambda x: x[..., 0] ** 2 * np.exp(-x[..., 0] ** 2 / 2), basis, n_quad=200)
    t = 0.5
    assert abs(path.at(t).coeffs @ phi.coeffs - t / (1 + t) ** 1.5) <= 1e-4


def test_galerkin_zero_model_is_constant():
    basis = BasisSpec(1, 10)
    path = solve_forward_galerkin(CompactDistribution.delta([0.2], (1,)), zero_model(1), 1.0, basis, dt=0.1)
    np.testing.assert_array_equal(path.coeffs[-1], path.coeffs[0])
    assert stable_step(np.zeros((3, 3))) == np.inf


def test_galerkin_ou_relaxes_to_stationary_law():
    basis = BasisSpec(1, 64)
    rho = transform(lambda x: np.exp(-x[..., 0] ** 2) / np.sqrt(np.pi), basis, n_quad=200)
    psi = CompactDistribution.density("bump", [-0.5], [0.5], 24)
    path = solve_forward_galerkin(psi, ornstein_uhlenbeck(1), 2.0, basis, dt=0.005)
    dist = [np.linalg.norm(path.at(t).coeffs - rho.coeffs) for t in (0.0, 0.5, 1.0, 1.5, 2.0)]
    assert np.all(np.diff(dist) < 0)


def test_galerkin_residual_fourth_order():
    basis = BasisSpec(1, 32)
    res = [solve_forward_galerkin(DELTA0, brownian(1), 0.5, basis, dt=dt).residuals for dt in (0.02, 0.01)]
    assert res[0][0] == 0.0
    assert res[1].max() <= 1e-9
    assert res[0].max() / res[1].max() >= 12


def test_galerkin_stiffness_abort():
    basis = BasisSpec(1, 128)
    with pytest.raises(NumericalFailure):
        solve_forward_galerkin(DELTA0, brownian(1), 2.0, basis, dt=1.0)


def test_kernel_matches_heat_kernel():
    basis = BasisSpec(1, 16)
    est = estimate_kernel(brownian(1), [0.5], 0.5, 50_000, basis, 0.05, seed=7, kde_points=[[0.5], [1.0]])
    ref = gaussian_law_coeffs(*brownian_law(0.5, 0.5)[:2], 16)
    assert np.max(np.abs(est.series.coeffs - ref) / est.se) <= 4
    assert est.mass_ok
    dens = np.exp(-0.5 * (np.array([0.0, 0.5]) ** 2) / 0.5) / np.sqrt(np.pi)
    assert np.all(np.abs(est.kde - dens) <= 0.05)


def test_kernel_small_time_limit():
    basis = BasisSpec(1, 16)
    est = estimate_kernel(brownian(1), [0.3], 1e-4, 2000, basis, 1e-4, seed=0)
    ref = delta_coeffs([0.3], None, basis).coeffs
    assert np.corrcoef(est.series.coeffs, ref)[0, 1] > 0.999


def test_kernel_rejects_zero_time():
    with pytest.raises(ValueError):
        estimate_kernel(brownian(1), [0.0], 0.0, 10, BasisSpec(1, 4), 0.1, seed=0)
