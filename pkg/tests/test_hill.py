import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qrws.hill import (
    FitError,
    HillParams,
    NonIdentifiableError,
    fit_hill,
    fit_hill_many,
    hill_eval,
    hill_sigma,
    main_lobe,
    robustness_epsilon,
    robustness_from_params,
)
from qrws.optimize import levenberg_marquardt

OMEGA = np.linspace(-math.pi, math.pi, 201)


def test_eval_center_and_half_width():
    p = HillParams(0.4, 2.0, 3.0, c=0.3)
    assert hill_eval(0.3, p) == 0.4
    assert hill_eval(2.3, p) == pytest.approx(0.2, rel=1e-14)
    assert hill_eval(-1.7, p) == pytest.approx(0.2, rel=1e-14)


def test_eval_reference_row():
    p = HillParams(0.391042, 5.52073, 3.22841)
    assert hill_eval(0.0, p) == 0.391042


@settings(max_examples=50, deadline=None)
@given(
    delta=st.floats(1e-6, 50.0),
    k=st.floats(0.05, 10.0),
    n=st.floats(0.2, 20.0),
    c=st.floats(-1.0, 1.0),
)
def test_eval_even_and_decreasing(delta, k, n, c):
    p = HillParams(0.4, k, n, c)
    assert hill_eval(c + delta, p) == hill_eval(c - delta, p)
    assert hill_eval(c + delta, p) <= hill_eval(c + delta / 2, p)


def test_eval_no_overflow_far_out():
    p = HillParams(0.4, 0.01, 60.0)
    with np.errstate(all="raise"):
        assert 0.0 <= hill_eval(1e3, p) < 1e-200
        assert hill_eval(0.0, p) == 0.4


def test_params_validation():
    with pytest.raises(ValueError):
        HillParams(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        HillParams(1.0, -1.0, 1.0)


def test_noiseless_recovery():
    true = HillParams(0.4, 2.0, 3.0, 0.0)
    fit = fit_hill(OMEGA, hill_eval(OMEGA, true), window="full")
    for name in ("b", "k", "n"):
        assert getattr(fit, name) == pytest.approx(getattr(true, name), abs=1e-6)
    assert abs(fit.c) < 1e-6
    assert fit.sigma < 1e-9
    assert fit.q == 4 and fit.n_points == 201


def test_fixed_center_uses_three_parameters():
    true = HillParams(0.4, 1.2, 4.0)
    fit = fit_hill(OMEGA, hill_eval(OMEGA, true), fix_center=True, window="full")
    assert fit.q == 3 and fit.c == 0.0
    assert fit.k == pytest.approx(1.2, rel=1e-6)


def test_fit_idempotence():
    true = HillParams(0.38, 0.62, 3.3, 0.05)
    first = fit_hill(OMEGA, hill_eval(OMEGA, true), window="full")
    second = fit_hill(OMEGA, hill_eval(OMEGA, first), window="full")
    for name in ("b", "k", "n", "c"):
        assert getattr(second, name) == pytest.approx(getattr(first, name), abs=1e-6)


def test_scaling_covariance():
    true = HillParams(0.4, 1.5, 2.5, 0.0)
    prob = hill_eval(OMEGA, true)
    a = fit_hill(OMEGA, prob, window="full")
    b = fit_hill(OMEGA, 2.5 * prob, window="full")
    assert b.b == pytest.approx(2.5 * a.b, rel=1e-6)
    for name in ("k", "n"):
        assert getattr(b, name) == pytest.approx(getattr(a, name), rel=1e-6)
    assert b.c == pytest.approx(a.c, abs=1e-6)


def test_sigma_dof_with_more_samples():
    true = HillParams(0.4, 1.0, 3.0)
    omega = np.linspace(-math.pi, math.pi, 401)
    assert fit_hill(omega, hill_eval(omega, true), window="full").sigma < 1e-9


def test_sigma_single_residual():
    params = HillParams(0.4, 1.0, 2.0, q=4)
    omega = np.linspace(-2, 2, 13)
    prob = hill_eval(omega, params)
    assert hill_sigma(params, omega, prob) == 0.0
    prob[5] += 0.01
    assert hill_sigma(params, omega, prob) == pytest.approx(0.01 / math.sqrt(13 - 4))
    with pytest.raises(ValueError):
        hill_sigma(params, omega[:4], prob[:4])


def test_flat_data_not_identifiable():
    with pytest.raises(NonIdentifiableError):
        fit_hill(OMEGA, np.full(OMEGA.size, 0.2))


def test_too_few_points():
    with pytest.raises(ValueError, match="at least 8"):
        fit_hill(OMEGA[:7], np.linspace(0, 1, 7))


def test_strict_mode_rejects_k_above_n():
    # a wide, shallow curve has no n > k solution
    true = HillParams(0.4, 5.0, 2.0)
    omega = np.linspace(-10, 10, 101)
    prob = hill_eval(omega, true)
    assert fit_hill(omega, prob, window="full").k == pytest.approx(5.0, rel=1e-6)
    with pytest.raises(FitError, match="n > k"):
        fit_hill(omega, prob, window="full", strict_nk=True)


def test_many_returns_errors_in_place():
    good = (OMEGA, hill_eval(OMEGA, HillParams(0.4, 1.0, 3.0)))
    flat = (OMEGA, np.zeros_like(OMEGA))
    out = fit_hill_many([good, flat, good])
    assert isinstance(out[0], HillParams) and isinstance(out[2], HillParams)
    assert isinstance(out[1], NonIdentifiableError)
    assert out[0] == out[2]


def test_main_lobe_stops_at_valley():
    x = np.linspace(-3, 3, 61)
    prob = np.exp(-x**2 * 4) + 0.5 * np.exp(-((x - 2.2) ** 2) * 8)
    lo, hi = main_lobe(prob)
    assert x[lo] < -1.0
    assert 1.0 < x[hi] < 2.2
    lo, hi = main_lobe(np.exp(-x**2))
    assert (lo, hi) == (0, 60)


def test_main_lobe_minimum_width():
    prob = np.zeros(21)
    prob[10] = 1.0
    prob[[8, 12]] = 0.5
    lo, hi = main_lobe(prob)
    assert hi - lo + 1 >= 8


def test_robustness_closed_form():
    rep = robustness_from_params(HillParams(0.4, 2.0, 3.0), 0.9)
    assert rep.epsilon == pytest.approx(2 * (1 / 9) ** (1 / 3))
    assert rep.epsilon == pytest.approx(0.96150, abs=1e-5)
    assert robustness_from_params(HillParams(0.4, 2.0, 3.0), 1 - 1e-12).epsilon < 1e-3
    with pytest.raises(ValueError):
        robustness_from_params(HillParams(0.4, 2.0, 3.0), 1.0)


@pytest.mark.parametrize("Omega", [0.5, 0.9, 0.99])
@pytest.mark.parametrize("k,n", [(2.0, 3.0), (0.3, 5.0), (1.0, 1.5)])
def test_data_epsilon_matches_analytic(Omega, k, n):
    omega = np.linspace(-4, 4, 801)
    params = HillParams(0.4, k, n)
    data = robustness_epsilon(omega, hill_eval(omega, params), Omega)
    analytic = robustness_from_params(params, Omega)
    assert abs(data.epsilon - analytic.epsilon) <= omega[1] - omega[0] + 1e-12
    assert data.omega_max == 0.0 and data.p_max == 0.4


def test_data_epsilon_interval_holds():
    omega = np.linspace(-3, 3, 121)
    prob = hill_eval(omega, HillParams(0.4, 1.0, 3.0, c=0.5))
    rep = robustness_epsilon(omega, prob, 0.9)
    inside = np.abs(omega - rep.omega_max) < rep.epsilon - 1e-12
    assert np.all(prob[inside] >= 0.9 * rep.p_max)


def test_data_epsilon_runs_to_grid_end():
    omega = np.linspace(-1, 1, 21)
    prob = np.full(21, 0.3)
    prob[10] = 0.31
    rep = robustness_epsilon(omega, prob, 0.9)
    assert rep.epsilon == pytest.approx(1.0)


def test_levenberg_marquardt_linear_problem():
    # r = A x - y: solves least squares in one step
    A = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
    y = np.array([1.0, 2.0, 2.0])

    def model(x, rows):
        return x @ A.T - y, np.broadcast_to(A, (x.shape[0],) + A.shape)

    res = levenberg_marquardt(model, np.array([[0.0, 0.0], [5.0, -5.0]]), lower=np.full(2, -np.inf), upper=np.full(2, np.inf))
    assert res.converged.all()
    assert np.allclose(res.x, [1.0, 1.0], atol=1e-8)
