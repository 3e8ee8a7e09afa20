import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochrep.flow import (
    BrownianDriver, flow_composition_check, moment_probe, simulate_flow, write_trajectories,
)
from stochrep.models import brownian, model_from_lists, ornstein_uhlenbeck


def test_brownian_scheme_is_exact():
    drv = BrownianDriver.on_interval(1, 3, 1.0, 0.01)
    ens = simulate_flow(brownian(1), [[0.2], [-1.0]], drv, K=2, n_paths=5, inverse=True)
    B = np.concatenate([np.zeros((5, 1, 1)), np.cumsum(drv.increments(np.arange(5)), axis=1)], axis=1)
    np.testing.assert_allclose(ens.X[:, :, 0, 0], 0.2 + B[:, :, 0].T, atol=1e-13)
    np.testing.assert_allclose(ens.X[:, :, 1, 0] - ens.X[:, :, 0, 0], -1.2, atol=1e-13)
    assert np.all(ens.derivs[(1,)] == 1.0) and np.all(ens.derivs[(2,)] == 0.0)
    assert np.all(ens.J == 1.0)


def test_initial_record():
    m = model_from_lists(2, [[[[1.0, [0, 0]], [0.1, [1, 1]]], 0.0], [0.0, 1.0]], [[[-1.0, [1, 0]]], [[0.3, [0, 2]]]])
    drv = BrownianDriver.on_interval(2, 0, 0.1, 0.01)
    starts = np.array([[0.1, 0.2], [0.5, -0.3]])
    ens = simulate_flow(m, starts, drv, K=2, n_paths=3, inverse=True)
    np.testing.assert_array_equal(ens.X[0], np.broadcast_to(starts, (3, 2, 2)))
    np.testing.assert_array_equal(ens.jacobian(0), np.broadcast_to(np.eye(2), (3, 2, 2, 2)))
    np.testing.assert_array_equal(ens.J[0], np.broadcast_to(np.eye(2), (3, 2, 2, 2)))
    assert not np.any(ens.derivs[(1, 1)][0])


def test_rejects_excess_order():
    with pytest.raises(ValueError):
        simulate_flow(brownian(1), [[0.0]], BrownianDriver.on_interval(1, 0, 0.1, 0.01), K=65, n_paths=1)


def test_driver_grid_checks():
    with pytest.raises(ValueError):
        BrownianDriver.on_interval(1, 0, 1.0, 0.3)
    drv = BrownianDriver.on_interval(1, 0, 1.0, 0.25)
    with pytest.raises(ValueError):
        drv.step_index(0.3)
    with pytest.raises(ValueError):
        drv.coarsen(3)


def test_coarsened_increments_sum_fine_ones():
    fine = BrownianDriver.on_interval(2, 9, 1.0, 0.01)
    coarse = fine.coarsen(4)
    a = fine.increments(np.arange(3)).reshape(3, 25, 4, 2).sum(axis=2)
    np.testing.assert_allclose(coarse.increments(np.arange(3)), a, atol=1e-14)


def test_ou_first_variation_mean():
    drv = BrownianDriver.on_interval(1, 1, 1.0, 1e-3)
    ens = simulate_flow(ornstein_uhlenbeck(1), [[0.5]], drv, K=1, n_paths=200, record=[drv.n_steps])
    assert abs(ens.derivs[(1,)][0].mean() - np.exp(-1)) <= 5e-3


def _bounded_cubic():
    return model_from_lists(1, [[0.5]], [[[0.2, [1]], [-0.2, [3]]]])


def test_inverse_jacobian_consistency_and_order():
    model = _bounded_cubic()
    fine = BrownianDriver.on_interval(1, 4, 1.0, 0.005)
    devs = []
    for drv in (fine.coarsen(2), fine):
        ens = simulate_flow(model, [[-1.0], [0.0], [1.2]], drv, K=1, n_paths=50, inverse=True)
        dev = ens.inverse_deviation().max()
        assert dev <= 5 * drv.step
        devs.append(dev)
    assert 1.6 <= devs[0] / devs[1] <= 2.6


def test_composition_is_exact_on_the_grid():
    drv = BrownianDriver.on_interval(1, 2, 1.0, 1e-3)
    rep = flow_composition_check(ornstein_uhlenbeck(1), [[0.3], [-1.0]], 0.5, 0.5, drv)
    assert rep.discrepancy <= 1e-12
    assert flow_composition_check(brownian(1), [[0.3]], 0.0, 0.5, drv).discrepancy == 0.0


def test_shared_noise_monotone_in_start():
    drv = BrownianDriver.on_interval(1, 5, 1.0, 0.01)
    starts = np.linspace(-2, 2, 21)[:, None]
    ens = simulate_flow(_bounded_cubic(), starts, drv, n_paths=20, record=[drv.n_steps])
    assert np.all(np.diff(ens.X[0, :, :, 0], axis=1) > 0)


def test_weak_order_one():
    x0 = 1.0
    fine = BrownianDriver.on_interval(1, 11, 1.0, 0.1)
    mean, var = x0 * np.exp(-1.0), 0.5 * (1 - np.exp(-2.0))
    exact = {"x": mean, "x2": var + mean ** 2}
    errs = {k: [] for k in exact}
    for drv in (fine.coarsen(2), fine):
        X = simulate_flow(ornstein_uhlenbeck(1), [[x0]], drv, n_paths=1_000_000, record=[drv.n_steps]).X[0, :, 0, 0]
        errs["x"].append(abs(X.mean() - exact["x"]))
        errs["x2"].append(abs((X ** 2).mean() - exact["x2"]))
    for k, (a, b) in errs.items():
        assert 1.6 <= a / b <= 2.6, (k, a, b)


def test_moment_probe_cases():
    drv = BrownianDriver.on_interval(1, 6, 1.0, 1e-2)
    grid = np.linspace(-1, 1, 5)[:, None]
    est = moment_probe(brownian(1), grid, (1,), 3.0, 1.0, drv, 50)
    assert est.value == 1.0 and est.se == 0.0
    ou = moment_probe(ornstein_uhlenbeck(1), grid, (1,), 2.0, 1.0, drv, 50)
    # the Euler value (1 - dt)^(2n) is the scheme's own target
    assert abs(ou.value - np.exp(-2)) <= 3 * ou.se + abs((1 - 0.01) ** 200 - np.exp(-2))
    m = _bounded_cubic()
    a = moment_probe(m, grid, (1,), 2.0, 1.0, drv, 400)
    b = moment_probe(m, grid, (1,), 2.0, 1.0, drv, 800)
    assert abs(a.value - b.value) <= 2 * np.hypot(a.se, b.se)


def test_trajectories_csv(tmp_path):
    drv = BrownianDriver.on_interval(1, 0, 0.02, 0.01)
    ens = simulate_flow(ornstein_uhlenbeck(1), [[0.0]], drv, K=1, n_paths=2, inverse=True)
    out = tmp_path / "traj.csv"
    write_trajectories(ens, out)
    lines = out.read_text().splitlines()
    assert lines[0] == "path,point,step,t,X0,dX00,J00"
    assert len(lines) == 1 + 2 * 3


@settings(max_examples=15)
@given(st.integers(0, 2**40), st.integers(1, 4))
def test_ensemble_is_deterministic(seed, m):
    drv = BrownianDriver.on_interval(1, seed, 0.1, 0.01)
    a = simulate_flow(_bounded_cubic(), [[0.1]], drv, K=2, n_paths=m)
    b = simulate_flow(_bounded_cubic(), [[0.1]], drv, K=2, paths=np.arange(m))
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.derivs[(2,)], b.derivs[(2,)])
