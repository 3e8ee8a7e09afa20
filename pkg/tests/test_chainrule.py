import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import chain_rule_vs_symbolic
from stochrep.chainrule import chain_rule_coefficients, derivative_indices, faa_di_bruno


def test_first_order_sign_convention():
    e = faa_di_bruno((1,), {(0,): np.array([[0.4]]), (1,): np.array([[2.5]])})
    assert set(e) == {(1,)}
    assert e[(1,)][0] == pytest.approx(-2.5)


def test_second_order_sign_convention():
    fd = {(0,): np.array([[0.4]]), (1,): np.array([[2.0]]), (2,): np.array([[3.0]])}
    e = faa_di_bruno((2,), fd)
    assert e[(2,)][0] == pytest.approx(4.0)
    assert e[(1,)][0] == pytest.approx(-3.0)


def test_missing_derivative_data():
    with pytest.raises(KeyError):
        chain_rule_coefficients((2,), {(0,): np.zeros((1, 1)), (1,): np.zeros((1, 1))})


def test_derivative_indices():
    assert derivative_indices(2, 2) == [(0, 1), (1, 0), (0, 2), (1, 1), (2, 0)]


@pytest.mark.parametrize("alpha", [(1,), (2,), (3,), (1, 1), (2, 1), (1, 1, 1)])
def test_chain_rule_against_symbolic(alpha):
    exact, total = chain_rule_vs_symbolic(alpha, len(alpha), 0)
    assert total == pytest.approx(exact, rel=1e-10, abs=1e-9)


@given(st.integers(0, 2**31 - 1))
def test_chain_rule_random_polynomials(seed):
    exact, total = chain_rule_vs_symbolic((1, 2), 2, seed)
    assert total == pytest.approx(exact, rel=1e-10, abs=1e-9)
