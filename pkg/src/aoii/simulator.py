"""Seeded Monte-Carlo evaluation of transmission policies.

Every slot the policy picks an action from the state it observes (the
mismatch duration ``S`` or, for the AoI baseline, the age ``A``), then the
channel and the source move.  Penalty and action are scored at the start of
the slot.  Random numbers come from a PCG64 stream keyed by
``(seed, replication)`` and the slot loop runs under numba.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import stats

from .errors import NoConvergence
from .model import PenaltySpec, SourceChannelParams
from .optimizer import MixturePolicy
from .rvia import relative_value_iteration

N_BATCHES = 100
CHUNK = 1 << 20
MIN_SLOTS = 10_000


@dataclass(frozen=True)
class Policy:
    """Stationary causal rule: send with probability ``transmit_prob[x]``.

    ``x`` is ``S`` or the age depending on ``observe``; the last entry of
    ``transmit_prob`` applies to every larger value.
    """

    transmit_prob: np.ndarray
    observe: str = "state"
    name: str = "policy"

    def __post_init__(self):
        p = np.asarray(self.transmit_prob, dtype=float)
        if p.ndim != 1 or p.size == 0 or np.any((p < 0) | (p > 1)):
            raise ValueError("transmit_prob must be a non-empty vector of probabilities")
        if self.observe not in ("state", "age"):
            raise ValueError(f"observe must be 'state' or 'age', got {self.observe!r}")
        object.__setattr__(self, "transmit_prob", p)

    @classmethod
    def threshold(cls, n: int | None) -> "Policy":
        if n is None:
            return cls.never()
        p = np.zeros(n + 1)
        p[n] = 1.0
        return cls(p, name=f"threshold({n})")

    @classmethod
    def never(cls) -> "Policy":
        return cls(np.zeros(1), name="never")

    @classmethod
    def always(cls) -> "Policy":
        return cls(np.ones(1), name="always")

    @classmethod
    def from_mixture(cls, m: MixturePolicy, name: str = "mixture") -> "Policy":
        return cls(m.transmit_probabilities(), name=name)


@dataclass(frozen=True)
class SimStats:
    avg_penalty: float
    avg_error: float
    rate: float
    half_width: dict = field(default_factory=dict)  # 95% batch-means half-widths
    T: int = 0
    seed: int = 0


@numba.njit(cache=True)
def _run_chunk(u, probs, observe_age, alpha, beta, ps, S, A, out_state, out_action):
    n_probs = probs.shape[0]
    for t in range(u.shape[0]):
        x = A if observe_age else S
        if x >= n_probs:
            x = n_probs - 1
        send = u[t, 0] < probs[x]
        out_state[t] = S
        out_action[t] = send
        delivered = send and u[t, 1] < ps
        if S == 0:
            S = 0 if u[t, 2] < alpha else 1
        else:
            grow = 1.0 - beta if delivered else beta
            S = S + 1 if u[t, 2] < grow else 0
        A = 1 if delivered else A + 1
    return S, A


def make_rng(seed: int, replication: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replication,))))


def _chunks(policy, params, T, seed, replication):
    rng = make_rng(seed, replication)
    S, A = 0, 1
    done = 0
    observe_age = policy.observe == "age"
    while done < T:
        n = min(CHUNK, T - done)
        u = rng.random((n, 3))
        states = np.empty(n, dtype=np.int64)
        actions = np.empty(n, dtype=np.bool_)
        S, A = _run_chunk(u, policy.transmit_prob, observe_age, params.alpha, params.beta,
                          params.p_s, S, A, states, actions)
        yield done, states, actions
        done += n


def trajectory(policy: Policy, params: SourceChannelParams, T: int, seed: int, replication: int = 0):
    """Full ``(states, actions)`` arrays of one run; for diagnostics."""
    parts = list(_chunks(policy, params, T, seed, replication))
    return np.concatenate([p[1] for p in parts]), np.concatenate([p[2] for p in parts])


class _PenaltyTable:
    def __init__(self, f):
        self.f = f
        self.table = f.values(np.arange(256))

    def __call__(self, states):
        top = int(states.max())
        if top >= len(self.table):
            size = max(top + 1, 2 * len(self.table))
            self.table = self.f.values(np.arange(size))
        return self.table[states]


def _half_width(batch_means):
    b = len(batch_means)
    return float(stats.t.ppf(0.975, b - 1) * np.std(batch_means, ddof=1) / np.sqrt(b))


def simulate(policy: Policy, params: SourceChannelParams, f: PenaltySpec, T: int,
             seed: int, replication: int = 0) -> SimStats:
    """Long-run averages of ``f(S_t)``, ``1{S_t != 0}`` and ``psi_t`` over ``T`` slots from ``S_0 = 0``."""
    T = int(T)
    if T < MIN_SLOTS:
        raise ValueError(f"T must be at least {MIN_SLOTS}")
    penalty = _PenaltyTable(f)
    batch_len = T // N_BATCHES
    sums = np.zeros((3, N_BATCHES))
    counts = np.zeros(N_BATCHES)
    for start, states, actions in _chunks(policy, params, T, seed, replication):
        ids = np.minimum((start + np.arange(len(states))) // batch_len, N_BATCHES - 1)
        counts += np.bincount(ids, minlength=N_BATCHES)
        sums[0] += np.bincount(ids, weights=penalty(states), minlength=N_BATCHES)
        sums[1] += np.bincount(ids, weights=(states != 0).astype(float), minlength=N_BATCHES)
        sums[2] += np.bincount(ids, weights=actions.astype(float), minlength=N_BATCHES)
    means = sums / counts
    totals = sums.sum(axis=1) / T
    hw = {k: _half_width(means[i]) for i, k in enumerate(("penalty", "error", "rate"))}
    return SimStats(float(totals[0]), float(totals[1]), float(totals[2]), hw, T, seed)


def _simulate_job(args):
    return simulate(*args)


def simulate_many(jobs_list, jobs: int = 1):
    """Run ``simulate`` over a list of argument tuples; results keep input order."""
    if jobs <= 1 or len(jobs_list) <= 1:
        return [simulate(*a) for a in jobs_list]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_simulate_job, jobs_list))


def simulate_time_sharing(m: MixturePolicy, params: SourceChannelParams, f: PenaltySpec,
                          T: int, seed: int, jobs: int = 1) -> SimStats:
    """Estimate the convex mixture of ``m``: each pure component simulated, then weighted by ``mu``.

    This is the long-run expectation of randomizing once at time 0; both
    components share ``seed`` (common random numbers).
    """
    hi = Policy.never() if m.never_high else Policy.threshold(m.n_high)
    if m.mu == 0.0:
        return simulate(hi, params, f, T, seed)
    low = Policy.never() if (m.never_high and m.n_low == m.n_high) else Policy.threshold(m.n_low)
    s_low, s_hi = simulate_many([(low, params, f, T, seed), (hi, params, f, T, seed)], jobs)
    w = (m.mu, 1.0 - m.mu)
    mix = lambda a, b: w[0] * a + w[1] * b  # noqa: E731
    hw = {k: float(np.hypot(w[0] * s_low.half_width[k], w[1] * s_hi.half_width[k]))
          for k in s_low.half_width}
    return SimStats(mix(s_low.avg_penalty, s_hi.avg_penalty), mix(s_low.avg_error, s_hi.avg_error),
                    mix(s_low.rate, s_hi.rate), hw, T, seed)


# --- AoI-optimal baseline -------------------------------------------------


def aoi_rate(m: int, p_s: float) -> float:
    """Update rate of "send iff age >= m" (ages start at 1)."""
    return 1.0 / (1.0 + p_s * (m - 1))


def aoi_threshold(lam: float, p_s: float, K: int = 200, tol: float = 1e-9,
                  max_iter: int = 100_000):
    """Optimal age threshold of the Lagrangian AoI problem, by RVIA on ages ``1..K``.

    Returns ``None`` if the truncated problem never sends.
    """
    p_f = 1.0 - p_s
    cost = np.arange(1, K + 1, dtype=float)

    def step(V):
        nxt = np.append(V[1:], V[-1])
        q0 = cost + nxt
        q1 = cost + lam + p_s * V[0] + p_f * nxt
        return q0, q1

    # deterministic idle climb makes the chain periodic when p_s = 1
    V, _, q0, q1, _, _ = relative_value_iteration(step, K, tol, max_iter, damping=0.5)
    send = np.flatnonzero(q1 < q0)
    return int(send[0]) + 1 if send.size else None


def aoi_baseline(params: SourceChannelParams, eps_lambda: float = 1e-6, K: int | None = None) -> Policy:
    """Rate-constrained AoI-optimal policy: randomized age threshold meeting ``delta``.

    Solved with the same Lagrangian recipe as the AoII problem (value
    iteration for a fixed multiplier, bisection on the multiplier).
    """
    delta, p_s = params.delta, params.p_s
    if delta >= 1.0:
        return Policy(np.ones(1), observe="age", name="aoi(always)")
    m_guess = int(np.ceil((1.0 / delta - 1.0) / p_s)) + 2
    K = K or max(200, 4 * m_guess)

    def rate(lam):
        m = aoi_threshold(lam, p_s, K)
        if m is None:
            raise NoConvergence(f"AoI search hit the truncation K={K}")
        return m, aoi_rate(m, p_s)

    lo, hi = 0.0, 1.0
    m_hi, c = rate(hi)
    while c > delta:
        lo, hi = hi, 2.0 * hi
        m_hi, c = rate(hi)
    m_lo, _ = rate(lo)
    while m_hi - m_lo > 1 and hi - lo > eps_lambda:
        mid = 0.5 * (lo + hi)
        m_mid, c = rate(mid)
        if c > delta:
            lo, m_lo = mid, m_mid
        else:
            hi, m_hi = mid, m_mid
    m_low = m_hi - 1
    p = np.zeros(m_hi + 1)
    p[m_hi] = 1.0
    if m_low >= 1:
        # cycle of j = m_low idle-ish ages then geometric retries; rate = 1/(p_s j + 1 - q p_s)
        q = (p_s * m_low + 1.0 - 1.0 / delta) / p_s
        p[m_low] = min(max(q, 0.0), 1.0)
    # index = age; age 0 never occurs
    return Policy(p, observe="age", name=f"aoi({m_low},{m_hi})")
