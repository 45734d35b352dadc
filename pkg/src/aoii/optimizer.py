"""Optimal randomized threshold policies under an update-rate budget.

``find_threshold`` locates the optimal threshold of the Lagrangian problem for
a fixed multiplier by interval doubling then binary search on the activity
margin.  ``solve`` brackets the multiplier at which the update rate crosses
``delta`` and mixes the two adjacent thresholds so the budget is met with
equality.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .applications import error_f
from .closed_form import (
    ThresholdTerms,
    average_penalty,
    geom_sum,
    normalize_threshold,
    update_rate,
)
from .errors import InfeasibleTolerance, SearchOverflow
from .model import PenaltySpec, SourceChannelParams

log = logging.getLogger(__name__)

SEARCH_CAP = 2**30
LAMBDA_TOL = 1e-6
_DEGENERATE = 1e-12
_MAX_DOUBLINGS = 1100


def find_threshold(lam: float, params: SourceChannelParams, f: PenaltySpec,
                   terms: ThresholdTerms | None = None, cap: int = SEARCH_CAP) -> int:
    """Optimal threshold ``n*`` for multiplier ``lam`` (send iff ``S >= n*``).

    For a bounded ``f`` the never-transmit answer is ``f.s_thresh + 1``.
    """
    terms = terms or ThresholdTerms(params, f)
    H = lambda n: terms.H(n, lam)  # noqa: E731
    if f.bounded:
        top = f.s_thresh
        if H(top) <= 0:
            return top + 1
    lo = hi = 1
    while H(hi) <= 0:
        lo = hi
        hi = min(2 * hi, f.s_thresh) if f.bounded else 2 * hi
        if hi > cap:
            raise SearchOverflow(f"threshold search passed {cap} for lambda={lam}")
    mid = -(-(lo + hi) // 2)
    while mid < hi:
        if H(mid) <= 0:
            lo = mid
        else:
            hi = mid
        mid = -(-(lo + hi) // 2)
    return mid - 1


@dataclass(frozen=True)
class MixturePolicy:
    """Randomization between thresholds ``n_low = n_high - 1`` and ``n_high``.

    ``mu`` weights ``n_low`` in the long-run (convex) mixture.  For a single
    sample path the same rate is realized by sending with probability
    ``q_boundary`` in states ``boundary_start .. n_high - 1`` (every state
    ``>= boundary_start`` when ``n_high`` is the never-transmit encoding).
    """

    n_low: int
    n_high: int
    mu: float
    q_boundary: float
    C_low: float
    C_high: float
    boundary_start: int
    never_high: bool = False

    @property
    def pure(self) -> bool:
        return self.mu == 0.0

    @property
    def reported_threshold(self) -> int:
        """The largest threshold of the mixture that actually sends packets."""
        return self.n_low if self.never_high else self.n_high

    def transmit_probabilities(self) -> np.ndarray:
        """Per-state send probability; the last entry covers all larger states."""
        if self.never_high:
            p = np.zeros(self.boundary_start + 1)
            p[self.boundary_start:] = self.q_boundary
            return p
        p = np.zeros(self.n_high + 1)
        p[self.boundary_start:self.n_high] = self.q_boundary
        p[self.n_high] = 1.0
        return p


@dataclass(frozen=True)
class LagrangeSolution:
    lambda_star: float
    policy: MixturePolicy
    avg_aoii: float
    avg_error: float
    achieved_rate: float
    params: SourceChannelParams
    penalty: str

    @property
    def threshold(self) -> int:
        return self.policy.reported_threshold


def pure_policy(n: int, params: SourceChannelParams, never: bool = False) -> MixturePolicy:
    rate = 0.0 if never else update_rate(n, params)
    return MixturePolicy(n, n, 0.0, 0.0, rate, rate, n, never_high=never)


def _boundary_q(params, delta, start, n_high, never_high):
    """Send probability on the boundary states that makes the stationary rate ``delta``."""
    al, be, a = params.alpha, params.beta, params.a
    if never_high:
        m = start
        D1 = 1.0 + (1.0 - al) * geom_sum(be, m - 1)
        P = (1.0 - al) * be ** (m - 1)
        return delta * (D1 * (1.0 - be) + P) / (P - delta * D1 * (be - a))
    m = n_high - 1
    if start == m:
        if m == 0:
            c1 = update_rate(1, params)
            return (delta - c1) / (1.0 - c1)
        D0 = 1.0 + (1.0 - al) * geom_sum(be, m)
        P = (1.0 - al) * be ** (m - 1)
        return (delta * (1.0 - a) * D0 - P * be * (1.0 - delta)) / (P * ((1.0 - be) + delta * (be - a)))
    # several boundary states (the optimal threshold jumped by more than one)
    from .closed_form import evaluate_randomized

    def gap(q):
        p = np.zeros(n_high + 1)
        p[start:n_high] = q
        p[n_high] = 1.0
        return evaluate_randomized(p, params, error_f())[2] - delta

    return brentq(gap, 0.0, 1.0, xtol=1e-15)


def _mixture(params, f, delta, n_high, n_low_alt):
    never_high = f.bounded and n_high > f.s_thresh
    C_high = update_rate(normalize_threshold(n_high, f), params)
    n_low = n_high - 1
    C_low = update_rate(n_low, params)
    start = n_low
    if C_low < delta and n_low_alt < n_low:
        log.warning("optimal threshold jumped from %d to %d at lambda*; randomizing over the gap",
                    n_low_alt, n_high)
        n_low = start = n_low_alt
        C_low = update_rate(n_low, params)
    if C_low - C_high < _DEGENERATE:
        return MixturePolicy(n_high, n_high, 0.0, 0.0, C_high, C_high, n_high, never_high)
    mu = (delta - C_high) / (C_low - C_high)
    mu = min(max(mu, 0.0), 1.0)
    q = _boundary_q(params, delta, start, n_high, never_high)
    q = min(max(q, 0.0), 1.0)
    return MixturePolicy(n_low, n_high, mu, q, C_low, C_high, start, never_high)


def policy_performance(policy: MixturePolicy, params: SourceChannelParams, f: PenaltySpec):
    """Convex-mixture ``(avg_penalty, avg_error, rate)`` of a mixture policy."""
    lo = None if (policy.never_high and policy.n_low == policy.n_high) else policy.n_low
    hi = None if policy.never_high else policy.n_high
    err = error_f()
    w = policy.mu
    pen = (1.0 - w) * average_penalty(hi, params, f)
    e = (1.0 - w) * average_penalty(hi, params, err)
    if w > 0:
        pen += w * average_penalty(lo, params, f)
        e += w * average_penalty(lo, params, err)
    rate = w * policy.C_low + (1.0 - w) * policy.C_high
    return pen, e, rate


def solve(params: SourceChannelParams, f: PenaltySpec, eps_lambda: float = LAMBDA_TOL,
          cap: int = SEARCH_CAP) -> LagrangeSolution:
    """Optimal policy minimizing the average of ``f(S)`` subject to rate ``<= delta``."""
    delta = params.delta
    if not f.bounded and delta >= 1.0:
        policy = pure_policy(0, params)
        return _finish(0.0, policy, params, f)
    if f.bounded and delta >= params.vartheta:
        policy = pure_policy(1, params)
        return _finish(0.0, policy, params, f)

    terms = ThresholdTerms(params, f)

    def rate_at(lam):
        n = find_threshold(lam, params, f, terms, cap)
        return n, update_rate(normalize_threshold(n, f), params)

    lam_min, lam_max = 0.0, 1.0
    _, C = rate_at(lam_max)
    doublings = 0
    while C > delta:
        lam_min, lam_max = lam_max, 2.0 * lam_max
        _, C = rate_at(lam_max)
        doublings += 1
        if doublings > _MAX_DOUBLINGS or not math.isfinite(lam_max):
            raise InfeasibleTolerance(f"could not bracket delta={delta}: rate stays at {C}")
    xi = 0.5 * (lam_min + lam_max)
    while abs(xi - lam_max) > eps_lambda:
        _, C = rate_at(xi)
        if C > delta:
            lam_min = xi
        else:
            lam_max = xi
        xi = 0.5 * (lam_min + lam_max)

    n_high, C_high = rate_at(lam_max)
    n_low_alt, C_low_alt = rate_at(lam_min)
    if C_high > delta or (lam_min > 0 and C_low_alt <= delta):
        raise InfeasibleTolerance(f"bisection lost its bracket around lambda={xi}")
    policy = _mixture(params, f, delta, n_high, n_low_alt)
    return _finish(lam_max, policy, params, f)


def _finish(lam, policy, params, f):
    pen, err, rate = policy_performance(policy, params, f)
    return LagrangeSolution(lam, policy, pen, err, rate, params, f.name)


def error_optimal(params: SourceChannelParams) -> LagrangeSolution:
    """Policy minimizing the long-run fraction of slots in mismatch."""
    return solve(params, error_f())
