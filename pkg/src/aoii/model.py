"""Source/channel parameters, penalty functions and the one-step kernel of S_t.

The transmitter tracks ``S_t``, the number of consecutive slots the receiver's
estimate has been wrong (``0`` when synchronized).  Without a delivery the
mismatch indicator ``d_t`` is a two-state Markov chain (``alpha`` = stay GOOD,
``beta`` = stay BAD); a transmission succeeds with probability ``p_s``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Callable

import numpy as np

from .errors import AdmissibilityViolation, ParamError, RangeError

K_PROBE = 10_000


class Action(IntEnum):
    IDLE = 0
    TRANSMIT = 1


@dataclass(frozen=True)
class SourceChannelParams:
    """Validated system parameters.

    ``a`` is the probability that a mismatch persists when a packet is sent
    and ``vartheta`` the update rate of "transmit whenever S != 0".
    """

    alpha: float
    beta: float
    p_s: float
    delta: float = 1.0
    a: float = field(init=False)
    vartheta: float = field(init=False)

    def __post_init__(self):
        _check_open(self.alpha, "alpha", 0.0, 1.0, closed_right=False)
        _check_open(self.beta, "beta", 0.0, 1.0)
        _check_open(self.p_s, "p_s", 0.0, 1.0)
        _check_open(self.delta, "delta", 0.0, 1.0)
        p_f = 1.0 - self.p_s
        a = p_f * self.beta + (1.0 - self.beta) * self.p_s
        if a >= self.beta:
            raise AdmissibilityViolation(
                f"a = {a:.6g} >= beta = {self.beta:.6g}: transmitting cannot reduce the mismatch"
            )
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "vartheta", (1.0 - self.alpha) / (2.0 - self.alpha - a))

    @property
    def p_f(self) -> float:
        return 1.0 - self.p_s

    def with_delta(self, delta: float) -> "SourceChannelParams":
        return replace(self, delta=delta)


def _check_open(x, name, lo, hi, closed_right=True):
    ok = lo < x <= hi if closed_right else lo < x < hi
    if not (isinstance(x, (int, float)) and math.isfinite(x) and ok):
        right = "]" if closed_right else ")"
        raise RangeError(f"{name}={x!r} outside ({lo}, {hi}{right}")


def validate(alpha: float, beta: float, p_s: float, delta: float = 1.0) -> SourceChannelParams:
    """Check raw parameters and return them with ``a`` and ``vartheta`` populated."""
    return SourceChannelParams(float(alpha), float(beta), float(p_s), float(delta))


def transition_distribution(S: int, psi: Action | int, params: SourceChannelParams):
    """Return ``[(next_state, probability), ...]`` for one slot.

    In state 0 the action is irrelevant.  Otherwise the mismatch grows with
    probability ``beta`` when idle and ``a`` when transmitting.
    """
    if S < 0:
        raise ValueError(f"state must be non-negative, got {S}")
    if S == 0:
        return [(0, params.alpha), (1, 1.0 - params.alpha)]
    grow = params.a if psi else params.beta
    return [(S + 1, grow), (0, 1.0 - grow)]


@dataclass(frozen=True)
class PenaltySpec:
    """A non-decreasing dissatisfaction function ``f`` over states.

    For a bounded spec, ``f`` is evaluated at ``min(S, s_thresh)`` so that the
    state space can be truncated at ``s_thresh``.  ``func`` must accept a
    non-negative integer; :meth:`values` vectorizes it when possible.
    """

    func: Callable
    name: str = "custom"
    s_thresh: int | None = None
    level: float | None = None
    epsilon: float | None = None

    @property
    def bounded(self) -> bool:
        return self.s_thresh is not None

    @property
    def kind(self) -> str:
        return "bounded" if self.bounded else "unbounded"

    def __call__(self, S: int) -> float:
        if self.s_thresh is not None and S > self.s_thresh:
            S = self.s_thresh
        return float(self.func(S))

    def values(self, ks) -> np.ndarray:
        ks = np.asarray(ks, dtype=np.int64)
        if self.s_thresh is not None:
            ks = np.minimum(ks, self.s_thresh)
        try:
            out = np.asarray(self.func(ks), dtype=float)
            if out.shape == ks.shape:
                return out
        except Exception:
            pass
        return np.array([float(self.func(int(k))) for k in ks.ravel()]).reshape(ks.shape)

    @classmethod
    def unbounded(cls, func, name="custom", k_probe=K_PROBE):
        spec = cls(func, name=name)
        check_penalty(spec, k_probe)
        return spec

    @classmethod
    def bounded_by(cls, func, level=None, epsilon=1e-3, s_thresh=None, name="custom",
                   search_limit=10**6):
        """Build a bounded spec.

        Without ``s_thresh`` the truncation state is the smallest ``S`` with
        ``level - f(S) < epsilon``.
        """
        if epsilon is None or epsilon <= 0:
            raise ParamError("epsilon must be positive")
        if s_thresh is None:
            if level is None:
                raise ParamError("either s_thresh or level is required")
            s_thresh = next(
                (S for S in range(search_limit) if level - float(func(S)) < epsilon), None
            )
            if s_thresh is None:
                raise ParamError(f"f does not come within {epsilon} of {level}")
        if s_thresh < 1:
            raise ParamError("s_thresh must be at least 1")
        if level is None:
            level = float(func(s_thresh))
        if level - float(func(s_thresh)) >= epsilon:
            raise ParamError(f"f({s_thresh}) is not within {epsilon} of the level {level}")
        spec = cls(func, name=name, s_thresh=int(s_thresh), level=float(level),
                   epsilon=float(epsilon))
        check_penalty(spec)
        return spec


def check_penalty(spec: PenaltySpec, k_probe: int = K_PROBE) -> None:
    """Raise :class:`ParamError` unless ``f >= 0`` and non-decreasing on the probe range."""
    top = spec.s_thresh if spec.bounded else k_probe
    vals = spec.values(np.arange(top + 1))
    if not np.all(np.isfinite(vals)):
        raise ParamError(f"{spec.name}: non-finite penalty values")
    if np.any(vals < 0):
        raise ParamError(f"{spec.name}: negative penalty at S={int(np.argmax(vals < 0))}")
    drops = np.flatnonzero(np.diff(vals) < 0)
    if drops.size:
        raise ParamError(f"{spec.name}: f decreases between S={drops[0]} and S={drops[0] + 1}")
