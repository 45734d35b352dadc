import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from aoii.applications import Weibull, error_f, fire_f, linear_f, time_threshold_f, video_f, weibull_f
from aoii.closed_form import H_margin, evaluate_randomized, theta_n, theta_never, update_rate
from aoii.errors import AdmissibilityViolation, SearchOverflow
from aoii.model import validate
from aoii.optimizer import _mixture, error_optimal, find_threshold, policy_performance, solve

PENALTIES = {"linear": linear_f(), "video": video_f(), "weibull": weibull_f(Weibull(1.0, 1.0)),
             "fire": fire_f(), "error": error_f(), "zeta3": time_threshold_f(3)}


@st.composite
def admissible(draw, max_beta=0.97):
    try:
        return validate(draw(st.floats(0.05, 0.95)), draw(st.floats(0.3, max_beta)),
                        draw(st.floats(0.3, 1.0)))
    except AdmissibilityViolation:
        assume(False)


def brute_force_threshold_cost(lam, params, f, top=300):
    """Smallest Lagrangian cost over thresholds 1..top (and never, when bounded)."""
    costs = [theta_n(n, lam, params, f) for n in range(1, (f.s_thresh if f.bounded else top) + 1)]
    if f.bounded:
        costs.append(theta_never(params, f))
    return min(costs)


@settings(max_examples=60, deadline=None)
@given(admissible(), st.floats(0.0, 50.0), st.sampled_from(sorted(PENALTIES)))
def test_find_threshold_is_optimal_among_thresholds(params, lam, name):
    f = PENALTIES[name]
    n = find_threshold(lam, params, f)
    if f.bounded and n > f.s_thresh:
        cost = theta_never(params, f)
    else:
        cost = theta_n(max(n, 1), lam, params, f)
    assert cost <= brute_force_threshold_cost(lam, params, f) + 1e-9 * max(1.0, abs(cost))


@settings(max_examples=60, deadline=None)
@given(admissible(), st.floats(0.0, 50.0), st.sampled_from(["linear", "video", "weibull"]))
def test_find_threshold_sign_convention(params, lam, name):
    f = PENALTIES[name]
    n = find_threshold(lam, params, f)
    if f.bounded and n > f.s_thresh:
        assert all(H_margin(k, lam, params, f) <= 0 for k in range(1, f.s_thresh + 1))
        return
    assert H_margin(n + 1, lam, params, f) > 0
    if n >= 1:
        assert H_margin(n, lam, params, f) <= 0


def test_search_overflow_guard(ref_params):
    with pytest.raises(SearchOverflow):
        find_threshold(1e9, ref_params, linear_f(), cap=64)


def test_lambda_zero_sends_from_the_start(ref_params):
    assert find_threshold(0.0, ref_params, linear_f()) == 0


@pytest.mark.parametrize("delta", [0.05, 0.1, 0.2, 0.4])
def test_mixture_meets_budget(ref_params, delta):
    params = ref_params.with_delta(delta)
    sol = solve(params, linear_f())
    m = sol.policy
    assert m.n_high == m.n_low + 1
    assert m.C_low >= delta >= m.C_high
    assert sol.achieved_rate == pytest.approx(delta, abs=1e-12)
    # single-path realization hits the budget too
    assert evaluate_randomized(m.transmit_probabilities(), params, error_f())[2] == pytest.approx(delta, abs=1e-12)


def test_q_boundary_matches_root_finder(ref_params):
    params = ref_params.with_delta(0.1)
    m = solve(params, linear_f()).policy

    def gap(q):
        p = np.zeros(m.n_high + 1)
        p[m.n_low] = q
        p[m.n_high] = 1.0
        return evaluate_randomized(p, params, error_f())[2] - 0.1

    assert m.q_boundary == pytest.approx(brentq(gap, 0.0, 1.0, xtol=1e-15), abs=1e-12)


def test_jump_fallback_randomizes_over_gap(ref_params):
    params = ref_params.with_delta(0.3)
    f = linear_f()
    # pretend the optimal threshold jumped from 1 to 4 at the critical multiplier
    m = _mixture(params, f, 0.3, 4, 1)
    assert (m.n_low, m.n_high, m.boundary_start) == (1, 4, 1)
    assert m.C_low >= 0.3 >= m.C_high
    assert evaluate_randomized(m.transmit_probabilities(), params, error_f())[2] == pytest.approx(0.3, abs=1e-10)


def test_table_values(ref_params):
    expected = {0.05: (4.5, 12), 0.1: (3.1, 8), 0.4: (1.0, 2)}
    for d, (aoii, thr) in expected.items():
        sol = solve(ref_params.with_delta(d), linear_f())
        assert sol.avg_aoii == pytest.approx(aoii, rel=0.05)
        assert sol.threshold == thr


def test_unconstrained_shortcut(ref_params):
    sol = solve(ref_params.with_delta(1.0), linear_f())
    assert (sol.policy.n_low, sol.policy.n_high) == (0, 0)
    assert sol.achieved_rate == 1.0


@pytest.mark.parametrize("name", ["weibull", "fire", "error", "zeta3"])
def test_bounded_shortcut_above_vartheta(ref_params, name):
    params = ref_params.with_delta(0.6)
    assert params.delta >= params.vartheta
    sol = solve(params, PENALTIES[name])
    assert sol.policy.pure and sol.threshold == 1
    assert sol.achieved_rate == pytest.approx(params.vartheta) and sol.achieved_rate <= 0.6


def test_fire_regression_fixture():
    for d in (0.05, 0.1, 0.3):
        sol = solve(validate(0.2, 1.0, 1.0, d), fire_f())
        assert np.isfinite([sol.avg_aoii, sol.avg_error, sol.lambda_star]).all()
        assert sol.achieved_rate == pytest.approx(d, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(admissible(max_beta=0.95), st.floats(0.02, 0.95))
def test_error_optimal_structure(params, frac):
    delta = frac * params.vartheta
    params = params.with_delta(delta)
    e = error_optimal(params)
    assert e.threshold == 1 and e.policy.never_high
    a = solve(params, linear_f())
    # any policy that only sends out of sync has error linear in its rate
    assert a.avg_error == pytest.approx(e.avg_error, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(admissible(max_beta=0.95), st.floats(0.02, 0.95), st.sampled_from(["linear", "weibull", "fire"]))
def test_realization_equals_convex_mixture(params, frac, name):
    f = PENALTIES[name]
    params = params.with_delta(frac * params.vartheta)
    sol = solve(params, f)
    realized = evaluate_randomized(sol.policy.transmit_probabilities(), params, f)
    convex = policy_performance(sol.policy, params, f)
    assert realized[0] == pytest.approx(convex[0], rel=1e-7)
    assert realized[2] == pytest.approx(convex[2], abs=1e-10)


def test_rates_are_monotone_in_multiplier(ref_params):
    f = video_f()
    ns = [find_threshold(lam, ref_params, f) for lam in np.linspace(0, 500, 40)]
    assert all(b >= a for a, b in zip(ns, ns[1:]))
    rates = [update_rate(n, ref_params) for n in ns]
    assert all(b <= a for a, b in zip(rates, rates[1:]))
