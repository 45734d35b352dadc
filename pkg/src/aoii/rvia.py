"""Relative value iteration on a truncated state space.

This is the independent dynamic-programming oracle for the closed forms: it
only uses the transition kernel and the penalty values, never the formulas of
:mod:`aoii.closed_form`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence
from .model import Action, PenaltySpec, SourceChannelParams, transition_distribution

RVIA_TOL = 1e-9
RVIA_MAX_ITER = 100_000


@dataclass
class RviaResult:
    V: np.ndarray  # differential cost-to-go over 0..K, V[0] == 0
    theta_est: float
    greedy: np.ndarray  # Action per state; state 0 reported IDLE
    iterations: int
    residual: float
    margin: np.ndarray  # transmit-minus-idle Q difference per state

    @property
    def K(self) -> int:
        return len(self.V) - 1

    @property
    def threshold(self):
        """First state whose margin is negative, or ``None`` if sending never pays.

        State 0 takes part so that "send from S=1 and V(1) > lam/(beta-a)"
        reads as threshold 0, the convention of the threshold search.
        """
        neg = np.flatnonzero(self.margin < 0)
        return int(neg[0]) if neg.size else None


def relative_value_iteration(step, n_states, tol=RVIA_TOL, max_iter=RVIA_MAX_ITER, damping=1.0):
    """Iterate ``V <- T(V) - T(V)(0)`` with synchronous sweeps.

    ``step(V)`` returns the idle and transmit Q-values ``(q0, q1)`` over all
    states.  With ``damping < 1`` the aperiodicity transform
    ``V <- (1-d) V + d T(V)`` is applied, which leaves the optimal policy
    unchanged and scales the average cost by ``d``.
    Returns ``(V, theta, q0, q1, iterations, residual)``.
    """
    V = np.zeros(n_states)
    residual = np.inf
    for it in range(1, max_iter + 1):
        q0, q1 = step(V)
        TV = np.minimum(q0, q1)
        if damping != 1.0:
            TV = (1.0 - damping) * V + damping * TV
        new = TV - TV[0]
        residual = float(np.max(np.abs(new - V)))
        V = new
        if residual <= tol:
            theta = float(TV[0]) / damping
            q0, q1 = step(V)
            return V, theta, q0, q1, it, residual
    raise NoConvergence(f"RVIA residual {residual:.3e} after {max_iter} iterations")


def default_truncation(threshold_hint=None) -> int:
    return max(200, 4 * int(threshold_hint or 0))


def rvia(lam: float, params: SourceChannelParams, f: PenaltySpec, K: int | None = None,
         tol: float = RVIA_TOL, max_iter: int = RVIA_MAX_ITER, threshold_hint=None) -> RviaResult:
    """Solve the Lagrangian average-cost MDP for fixed ``lam`` by RVIA.

    States ``0..K``; the growth transition out of ``K`` loops back to ``K``.
    """
    K = default_truncation(threshold_hint) if K is None else int(K)
    al, be, a = params.alpha, params.beta, params.a
    cost = f.values(np.arange(K + 1))

    def step(V):
        nxt = np.append(V[1:], V[K])  # V(S+1), with S=K looping to K
        q0 = cost + be * nxt + (1.0 - be) * V[0]
        q1 = cost + lam + a * nxt + (1.0 - a) * V[0]
        # state 0: both actions lead to (alpha, 1-alpha) over {0, 1}
        q0[0] = cost[0] + al * V[0] + (1.0 - al) * V[1]
        q1[0] = q0[0] + lam
        return q0, q1

    V, theta, q0, q1, it, res = relative_value_iteration(step, K + 1, tol, max_iter)
    nxt = np.append(V[1:], V[K])
    margin = lam + (a - be) * nxt
    greedy = np.where(margin < 0, Action.TRANSMIT, Action.IDLE).astype(np.int8)
    greedy[0] = Action.IDLE
    return RviaResult(V, theta, greedy, it, res, margin)


def check_monotone(result: RviaResult, tol: float = 1e-9) -> bool:
    """True iff the value estimate is non-decreasing over ``0..K``."""
    return bool(np.all(np.diff(result.V) >= -tol))


def check_threshold_structure(result: RviaResult) -> bool:
    """True iff the greedy actions on ``1..K`` are some IDLEs followed by TRANSMITs."""
    g = np.asarray(result.greedy[1:])
    return bool(np.all(np.diff(g) >= 0))


def threshold_matrix(n, params: SourceChannelParams, K: int) -> np.ndarray:
    """Transition matrix of the threshold-``n`` chain on ``0..K`` (``None`` = never).

    Built straight from :func:`transition_distribution`; growth out of ``K``
    stays at ``K``.
    """
    P = np.zeros((K + 1, K + 1))
    for S in range(K + 1):
        psi = Action.TRANSMIT if (n is not None and S >= n) else Action.IDLE
        for nxt, prob in transition_distribution(S, psi, params):
            P[S, min(nxt, K)] += prob
    return P


def power_iteration_stationary(n, params: SourceChannelParams, K: int = 400,
                               tol: float = 1e-15, max_iter: int = 1_000_000) -> np.ndarray:
    """Stationary law of the truncated threshold chain by repeated ``pi <- pi P``."""
    P = threshold_matrix(n, params, K)
    pi = np.zeros(K + 1)
    pi[0] = 1.0
    for _ in range(max_iter):
        new = pi @ P
        if np.max(np.abs(new - pi)) <= tol:
            return new
        pi = new
    raise NoConvergence(f"power iteration did not settle within {max_iter} steps")
