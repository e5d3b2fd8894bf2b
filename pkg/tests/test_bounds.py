import warnings

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from pocbf.bounds import (
    VacuousBoundWarning,
    combined_bound,
    delta_branch,
    estimation_accuracy_theta,
    exit_probability_delta,
)
from pocbf.errors import InvalidParameterError
from pocbf.gains import GainFn

pytestmark = pytest.mark.filterwarnings("ignore::pocbf.bounds.VacuousBoundWarning")

unit = st.floats(0.0, 1.0)
pos = st.floats(1e-3, 10.0)
kappas = st.floats(0.01, 0.99)
horizons = st.integers(0, 200)


def test_delta_acc_constants():
    d = exit_probability_delta(0.12, 1, 0.95, 0.001, 10)
    assert delta_branch(1, 0.95, 0.001) == 1
    assert d == pytest.approx(1 - 0.88 * 0.999**10, abs=1e-12)
    assert 1 - d == pytest.approx(0.8712, abs=5e-5)


def test_delta_trivial_and_branch_two():
    assert exit_probability_delta(0, 2.0, 0.3, 0, 25) == 0
    assert delta_branch(1, 0.5, 0.6) == 2
    assert exit_probability_delta(0.1, 1, 0.5, 0.6, 1) == pytest.approx(0.65)


def test_delta_vacuous_and_errors():
    with pytest.warns(VacuousBoundWarning):
        assert exit_probability_delta(2, 1, 0.5, 0, 3) == 1.0
    for bad in [(0.1, 0, 0.5, 0, 1), (0.1, 1, 1.0, 0, 1), (0.1, 1, 0.5, -1, 1), (0.1, 1, 0.5, 0, -1), (0.1, 1, 0.5, 0, 1.5)]:
        with pytest.raises(InvalidParameterError):
            exit_probability_delta(*bad)


def test_theta_examples():
    assert estimation_accuracy_theta(0, GainFn(0.3, 2), 0.01, 0.4, 0, 50) == 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert estimation_accuracy_theta(3e-5, GainFn(0.3, 2), 0.01, 0.4, 0, 5) == 1
    th = estimation_accuracy_theta(0, GainFn(0.3, 2), 0.01, 0.4, 1e-5, 10)
    assert th == pytest.approx(1 - (2 / 3) ** 10, rel=1e-9)
    assert th == pytest.approx(0.9827, abs=1e-4)


def test_theta_vacuous():
    with pytest.warns(VacuousBoundWarning):
        assert estimation_accuracy_theta(1.0, GainFn(1, 1), 0.5, 0.4, 0, 3) == 1
    with pytest.raises(InvalidParameterError):
        estimation_accuracy_theta(0, GainFn.zero(), 0.5, 0.4, 0, 3)


def test_combined():
    assert combined_bound(0, 0) == 0
    assert combined_bound(0.1288, 0.0361) == pytest.approx(0.1649, abs=1e-12)
    assert combined_bound(0.7, 0.6) == 1
    with pytest.raises(InvalidParameterError):
        combined_bound(1.2, 0)


@given(unit, pos, kappas, st.floats(0, 5), horizons)
def test_delta_in_unit_interval(g, lam, k, psi, T):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert 0 <= exit_probability_delta(g, lam, k, psi, T) <= 1


@given(st.floats(0, 1), st.floats(1e-3, 1), st.floats(0, 2), st.floats(0.01, 0.99), st.floats(0, 1), horizons)
def test_theta_in_unit_interval(phi0, a, eps, mu, c, T):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert 0 <= estimation_accuracy_theta(phi0, GainFn(a, 2), eps, mu, c, T) <= 1


@given(st.floats(0, 1), st.floats(1, 10), kappas, st.floats(0, 0.999), horizons)
def test_delta_branch_one_monotone_in_horizon(gr, lam, k, pr, T):
    g, psi = gr * lam, pr * k * lam  # keeps lam >= psi/kappa and gamma <= lam
    assert delta_branch(lam, k, psi) == 1
    assert exit_probability_delta(g, lam, k, psi, T) <= exit_probability_delta(g, lam, k, psi, T + 1) + 1e-15


@given(st.floats(0, 1), st.floats(1e-3, 1), st.floats(0.01, 0.99), st.floats(0, 1), horizons)
def test_theta_branch_one_monotone_in_horizon(pr, a, mu, cr, T):
    g = GainFn(a, 2)
    level = g(1.0)
    phi0, c = pr * level, cr * mu * level
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert estimation_accuracy_theta(phi0, g, 1.0, mu, c, T) <= estimation_accuracy_theta(phi0, g, 1.0, mu, c, T + 1) + 1e-15


@given(st.floats(0, 1), st.floats(0, 1e-2), kappas, st.floats(1, 10), st.floats(1, 3), horizons)
def test_delta_branch_one_monotone_in_level(g, psi, k, lam, factor, T):
    assume(lam >= psi / k)
    assert exit_probability_delta(g, lam * factor, k, psi, T) <= exit_probability_delta(g, lam, k, psi, T) + 1e-15


@given(st.floats(0, 1), st.floats(1e-2, 10), kappas, st.floats(0, 20))
def test_branches_agree_at_zero_horizon(gr, lam, k, psi):
    g = gr * lam
    assert exit_probability_delta(g, lam, k, psi, 0) == pytest.approx(g / lam, abs=1e-15)


@given(st.floats(1e-2, 10), kappas)
def test_branch_tie_goes_to_branch_one(lam, k):
    psi = lam * k
    assume(psi / k == lam)
    assert delta_branch(lam, k, psi) == 1
