"""Closed-form quantities of threshold policies.

A threshold-``n`` policy transmits iff ``S >= n``.  ``None`` stands for the
policy that never transmits; for a bounded penalty the optimizer encodes the
same policy as ``s_thresh + 1`` and :func:`normalize_threshold` maps it back.

Every expression containing ``(1 - beta**m) / (1 - beta)`` goes through
:func:`geom_sum`, which is exact at ``beta == 1`` and accurate near it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceSuspected
from .model import PenaltySpec, SourceChannelParams

TAIL_EPS = 1e-14
TAIL_WINDOW = 10
TAIL_KMAX = 10**6
_IDLE_CHUNK = 1 << 16


def geom_sum(r: float, m: int) -> float:
    """``sum_{j=0}^{m-1} r**j``, with the ``r -> 1`` limit handled exactly."""
    if m <= 0:
        return 0.0
    q = 1.0 - r
    if q == 0.0:
        return float(m)
    if r == 0.0:
        return 1.0
    if abs(q) < 0.5:
        return -math.expm1(m * math.log1p(-q)) / q
    return (1.0 - r**m) / q


def tail_sum(f: PenaltySpec, a: float, n: int, eps_tail: float = TAIL_EPS,
             window: int = TAIL_WINDOW, k_max: int = TAIL_KMAX) -> float:
    """``sum_{k>=n} f(k) a**(k-n)`` for a ratio ``0 <= a < 1``.

    Bounded specs use the exact closed tail.  Otherwise the series is cut once
    ``window`` consecutive terms fall below ``eps_tail * (1 - a)``; counting
    only starts after the first non-zero term.
    """
    if not 0.0 <= a < 1.0:
        raise ValueError(f"ratio must lie in [0, 1), got {a}")
    if f.bounded:
        top = f.s_thresh
        if n >= top:
            return f(top) / (1.0 - a)
        ks = np.arange(n, top)
        head = float(np.sum(f.values(ks) * a ** (ks - n)))
        return head + a ** (top - n) * f(top) / (1.0 - a)

    thr = eps_tail * (1.0 - a)
    total = 0.0
    run = 0
    seen = False
    start = n
    chunk = 64
    while start - n < k_max:
        ks = np.arange(start, min(start + chunk, n + k_max))
        terms = f.values(ks) * a ** (ks - n)
        if not np.all(np.isfinite(terms)):
            raise DivergenceSuspected(f"{f.name}: non-finite term in tail sum at k<={ks[-1]}")
        nonzero = terms > 0
        if not seen:
            first = np.flatnonzero(nonzero)
            if first.size == 0:
                start += len(ks)
                chunk = min(chunk * 2, 1 << 14)
                continue
            seen = True
            cut = first[0]
            total += float(np.sum(terms[:cut]))
            terms, start = terms[cut:], start + cut
        small = terms < thr
        idx = np.arange(len(terms))
        last_big = np.maximum.accumulate(np.where(~small, idx, -1))
        runs = np.where(last_big >= 0, idx - last_big, idx + 1 + run)
        hit = np.flatnonzero(runs >= window)
        if hit.size:
            return total + float(np.sum(terms[: hit[0] + 1]))
        total += float(np.sum(terms))
        run = int(runs[-1])
        start += len(terms)
        chunk = min(chunk * 2, 1 << 14)
    raise DivergenceSuspected(
        f"{f.name}: tail sum with ratio {a} did not settle within {k_max} terms"
    )


def _idle_sum(f: PenaltySpec, beta: float, n: int) -> float:
    """``sum_{j=1}^{n-1} f(j) beta**(j-1)``, the cost of climbing idle to ``n``."""
    total = 0.0
    lo = 1
    while lo < n:
        hi = min(n, lo + _IDLE_CHUNK)
        ks = np.arange(lo, hi)
        w = beta ** (ks - 1.0)
        total += float(np.sum(f.values(ks) * w))
        if w[-1] == 0.0:
            break
        lo = hi
    return total


def _terms(n: int, params: SourceChannelParams, f: PenaltySpec):
    """Pieces of the renewal-reward form of theta_n.

    ``theta_n(lam) = (num + lam * lam_coef) / den``; also returns the tail sum
    from ``n`` which H needs.
    """
    al, be, a = params.alpha, params.beta, params.a
    tail = tail_sum(f, a, n)
    bn = be ** (n - 1)
    num = f(0) / (1.0 - al) + _idle_sum(f, be, n) + bn * tail
    den = 1.0 / (1.0 - al) + geom_sum(be, n - 1) + bn / (1.0 - a)
    return num, bn / (1.0 - a), den, tail


def _require_threshold(n, f=None):
    if n is None or n < 1:
        raise ValueError(f"threshold must be a positive integer here, got {n!r}")
    if f is not None and f.bounded and n > f.s_thresh:
        raise ValueError(f"threshold {n} exceeds s_thresh={f.s_thresh}")


def theta_n(n: int, lam: float, params: SourceChannelParams, f: PenaltySpec) -> float:
    """Long-run average of ``f(S) + lam * psi`` under the threshold-``n`` policy."""
    _require_threshold(n, f)
    num, coef, den, _ = _terms(n, params, f)
    return (num + lam * coef) / den


def _h_from(theta, tail, lam, params):
    be, a = params.beta, params.a
    return (-theta * (be - a) + lam * (be - 1.0)) / ((1.0 - a) * (be - a)) + tail


def H_margin(n: int, lam: float, params: SourceChannelParams, f: PenaltySpec) -> float:
    """Activity margin ``V_n(n) - lam / (beta - a)``; its first positive ``n`` locates the threshold."""
    _require_threshold(n, f)
    num, coef, den, tail = _terms(n, params, f)
    return _h_from((num + lam * coef) / den, tail, lam, params)


class ThresholdTerms:
    """Memoized ``(theta_n, H(n))`` evaluator for one ``(params, f)`` pair.

    Only ``lam`` varies during the multiplier search, and theta_n is affine in
    it, so the sums are computed once per ``n``.
    """

    def __init__(self, params: SourceChannelParams, f: PenaltySpec):
        self.params = params
        self.f = f
        self._cache = {}

    def _get(self, n):
        if n not in self._cache:
            self._cache[n] = _terms(n, self.params, self.f)
        return self._cache[n]

    def theta(self, n, lam):
        num, coef, den, _ = self._get(n)
        return (num + lam * coef) / den

    def H(self, n, lam):
        num, coef, den, tail = self._get(n)
        return _h_from((num + lam * coef) / den, tail, lam, self.params)


def theta_never(params: SourceChannelParams, f: PenaltySpec) -> float:
    """Average penalty when never transmitting (bounded ``f``, or ``beta < 1``)."""
    al, be = params.alpha, params.beta
    if not f.bounded:
        if be == 1.0:
            return math.inf
        num = f(0) / (1.0 - al) + tail_sum(f, be, 1)
        return num / (1.0 / (1.0 - al) + 1.0 / (1.0 - be))
    m = f.s_thresh
    if be == 1.0:
        return f(m)
    bm = be ** (m - 1)
    num = f(0) / (1.0 - al) + _idle_sum(f, be, m) + bm * f(m) / (1.0 - be)
    den = 1.0 / (1.0 - al) + geom_sum(be, m - 1) + bm / (1.0 - be)
    return num / den


def normalize_threshold(n, f: PenaltySpec | None = None, s_thresh: int | None = None):
    """Map the bounded NEVER encoding (``> s_thresh``) to ``None``."""
    if s_thresh is None and f is not None and f.bounded:
        s_thresh = f.s_thresh
    if n is not None and s_thresh is not None and n > s_thresh:
        return None
    return n


def value_function(S: int, n, lam: float, params: SourceChannelParams, f: PenaltySpec) -> float:
    """Differential cost-to-go ``V(S)`` of the threshold-``n`` policy, ``V(0) = 0``.

    ``n`` must be ``>= 1``; for a bounded ``f`` any ``n > s_thresh`` (or
    ``None``) means never transmitting.
    """
    if S < 0:
        raise ValueError("state must be non-negative")
    if S == 0:
        return 0.0
    al, be, a = params.alpha, params.beta, params.a
    n = normalize_threshold(n, f)
    if n is None:
        return _value_never(S, params, f)
    _require_threshold(n, f)
    theta = theta_n(n, lam, params, f)
    if S >= n:
        return (lam - theta) / (1.0 - a) + tail_sum(f, a, S)
    v_n = (lam - theta) / (1.0 - a) + tail_sum(f, a, n)
    ks = np.arange(S, n)
    climb = float(np.sum(f.values(ks) * be ** (ks - S)))
    return -theta * geom_sum(be, n - S) + climb + be ** (n - S) * v_n


def _value_never(S, params, f):
    al, be = params.alpha, params.beta
    theta = theta_never(params, f)
    if not math.isfinite(theta):
        raise ValueError("never-transmit has infinite average cost for this f")
    if be < 1.0:
        if f.bounded and S >= f.s_thresh:
            return (f(f.s_thresh) - theta) / (1.0 - be)
        if f.bounded:
            top = f.s_thresh
            v_top = (f(top) - theta) / (1.0 - be)
            ks = np.arange(S, top)
            climb = float(np.sum(f.values(ks) * be ** (ks - S)))
            return -theta * geom_sum(be, top - S) + climb + be ** (top - S) * v_top
        return -theta / (1.0 - be) + tail_sum(f, be, S)
    # beta == 1 (bounded only): forward recursion V(S+1) = V(S) - f(S) + theta.
    v = (theta - f(0)) / (1.0 - al)
    for k in range(1, min(S, f.s_thresh)):
        v = v - f(k) + theta
    return v


def update_rate(n, params: SourceChannelParams, s_thresh: int | None = None) -> float:
    """Long-run transmission frequency of the threshold-``n`` policy."""
    n = normalize_threshold(n, s_thresh=s_thresh)
    if n is None:
        return 0.0
    if n == 0:
        return 1.0
    al, be, a = params.alpha, params.beta, params.a
    bn = be ** (n - 1)
    inner = 1.0 + (1.0 - al) * geom_sum(be, n) + (1.0 - al) * a * bn / (1.0 - a)
    return (1.0 - al) * bn / ((1.0 - a) * inner)


def _sigma0(n, params):
    al, be, a = params.alpha, params.beta, params.a
    if n is None:
        if be == 1.0:
            return 0.0
        return 1.0 / (1.0 + (1.0 - al) / (1.0 - be))
    return 1.0 / (1.0 + (1.0 - al) * geom_sum(be, n) + (1.0 - al) * a * be ** (n - 1) / (1.0 - a))


def _tail_mass(n, params, K, s0):
    """``sum_{k > K} sigma_k`` in closed form."""
    al, be, a = params.alpha, params.beta, params.a
    if n is None:
        return (1.0 - al) * s0 * be**K / (1.0 - be) if be < 1.0 else 1.0
    if K >= n:
        return (1.0 - al) * be ** (n - 1) * s0 * a ** (K + 1 - n) / (1.0 - a)
    return (1.0 - al) * s0 * (be**K * geom_sum(be, n - K) + be ** (n - 1) * a / (1.0 - a))


@dataclass(frozen=True)
class StationaryDistribution:
    """Stationary law of ``S`` under a threshold policy.

    ``sigma[k]`` for ``k = 0..K``.  When ``lumped`` is set the last entry holds
    the whole mass of ``S >= K`` (bounded truncation); otherwise ``tail`` is the
    mass beyond ``K`` that was cut off.
    """

    sigma: np.ndarray
    threshold: int | None
    lumped: bool = False
    tail: float = 0.0

    @property
    def K(self) -> int:
        return len(self.sigma) - 1

    def total(self) -> float:
        return float(np.sum(self.sigma))


def stationary_distribution(n, params: SourceChannelParams, K: int | None = None,
                            s_thresh: int | None = None) -> StationaryDistribution:
    """Closed-form stationary distribution of the threshold chain.

    ``n = 0`` gives the same law as ``n = 1`` (sending in state 0 changes
    nothing).  With ``s_thresh`` the support is cut at ``s_thresh`` and the
    remaining mass is lumped there; otherwise ``K`` defaults to the smallest
    bound leaving less than ``1e-16`` of mass outside.
    """
    n = normalize_threshold(n, s_thresh=s_thresh)
    if n == 0:
        n = 1
    al, be, a = params.alpha, params.beta, params.a
    s0 = _sigma0(n, params)
    if s_thresh is not None:
        K = s_thresh
    elif K is None:
        K = _default_support(n, params, s0)
    ks = np.arange(1, K + 1)
    if n is None:
        body = (1.0 - al) * be ** (ks - 1.0) * s0
    else:
        body = np.where(
            ks <= n,
            (1.0 - al) * be ** (np.minimum(ks, n) - 1.0) * s0,
            (1.0 - al) * be ** (n - 1) * a ** np.maximum(ks - n, 0) * s0,
        )
    sigma = np.concatenate([[s0], body])
    if s_thresh is not None:
        if n is None and be == 1.0:
            sigma = np.zeros(K + 1)
            sigma[K] = 1.0
        else:
            sigma[K] = _tail_mass(n, params, K - 1, s0)
        return StationaryDistribution(sigma, n, lumped=True)
    return StationaryDistribution(sigma, n, tail=_tail_mass(n, params, K, s0))


def _default_support(n, params, s0, floor=1e-16, cap=10**7):
    be, a = params.beta, params.a
    if n is None:
        if be == 1.0:
            raise ValueError("never-transmit with beta = 1 has no stationary law on a finite support")
        K = 1
        while _tail_mass(None, params, K, s0) >= floor and K < cap:
            K *= 2
        return K
    if a == 0.0:
        return n
    K = n
    while _tail_mass(n, params, K, s0) >= floor and K < cap:
        K += max(8, K // 2)
    return K


def average_penalty(n, params: SourceChannelParams, f: PenaltySpec, lam: float = 0.0) -> float:
    """``sum_k sigma_k(n) f(k)`` (plus ``lam`` times the update rate).

    ``n`` is a policy threshold on the untruncated chain (``None`` = never);
    the geometric tail is summed with :func:`tail_sum`.
    """
    if n == 0:
        n = 1
    al, be, a = params.alpha, params.beta, params.a
    rate = update_rate(n, params) if lam else 0.0
    if n is None:
        if be == 1.0:
            return (f(f.s_thresh) if f.bounded else math.inf) + lam * rate
        s0 = _sigma0(None, params)
        return s0 * f(0) + (1.0 - al) * s0 * tail_sum(f, be, 1) + lam * rate
    s0 = _sigma0(n, params)
    ks = np.arange(1, n + 1)
    head = s0 * f(0) + float(np.sum((1.0 - al) * be ** (ks - 1.0) * s0 * f.values(ks)))
    tail = (1.0 - al) * be ** (n - 1) * s0 * a * tail_sum(f, a, n + 1) if a > 0 else 0.0
    return head + tail + lam * rate


def evaluate_randomized(transmit_prob, params: SourceChannelParams, f: PenaltySpec):
    """Exact ``(avg_penalty, avg_error, rate)`` of a stationary randomized policy on ``S``.

    ``transmit_prob[k]`` is the probability of sending in state ``k``; the last
    entry applies to every larger state.
    """
    p = np.asarray(transmit_prob, dtype=float)
    al, be, a = params.alpha, params.beta, params.a
    m = len(p) - 1
    m = max(m, 1)
    p = np.concatenate([p, np.full(m + 1 - len(p), p[-1])]) if len(p) < m + 1 else p
    grow = p * a + (1.0 - p) * be  # growth probability from each state (index 0 unused)
    b_tail = grow[m]
    # unnormalized masses: u_0 = 1, u_k = (1-alpha) prod_{j=1}^{k-1} grow_j for 1 <= k <= m
    u = np.empty(m + 1)
    u[0] = 1.0
    u[1:] = (1.0 - al) * np.concatenate([[1.0], np.cumprod(grow[1:m])])
    if b_tail >= 1.0:
        if not f.bounded:
            return math.inf, 1.0, float(p[m])
        return f(f.s_thresh), 1.0, float(p[m])
    # states beyond m: u_{m+j} = u_m * b_tail**j
    tail_mass = u[m] * b_tail / (1.0 - b_tail)
    Z = float(np.sum(u)) + tail_mass
    ks = np.arange(m + 1)
    pen = float(np.sum(u * f.values(ks))) + (u[m] * b_tail * tail_sum(f, b_tail, m + 1) if b_tail > 0 else 0.0)
    rate = float(np.sum(u * p[: m + 1])) + tail_mass * p[m]
    err = 1.0 - 1.0 / Z
    return pen / Z, err, rate / Z
