"""Catalog of dissatisfaction functions used by the shipped experiments."""
from __future__ import annotations

import math
from functools import partial
from dataclasses import dataclass, field

import numpy as np

from .errors import ParamError
from .model import PenaltySpec

# Exact saturation: any positive epsilon satisfies level - f(s_thresh) < epsilon.
_EXACT = 1e-12


def _positive(**kw):
    for name, v in kw.items():
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise ParamError(f"{name} must be positive, got {v!r}")


@dataclass(frozen=True)
class Video:
    gamma: float = 1.0
    alpha0: float = 4.0
    rho: float = 0.8
    c: float = 2.0
    tau: float = field(init=False)

    def __post_init__(self):
        _positive(gamma=self.gamma, alpha0=self.alpha0, rho=self.rho, c=self.c)
        object.__setattr__(self, "tau", 1.0 + self.alpha0 * self.rho + self.c)


@dataclass(frozen=True)
class Weibull:
    gamma: float = 1.0
    rho: float = 1.0

    def __post_init__(self):
        _positive(gamma=self.gamma, rho=self.rho)


@dataclass(frozen=True)
class Fire:
    F_max: float = 10.0
    F_init: float = 1.0
    gamma_growth: float = 0.1

    def __post_init__(self):
        _positive(F_max=self.F_max, F_init=self.F_init, gamma_growth=self.gamma_growth)
        if self.F_max < self.F_init:
            raise ParamError("F_max must be at least F_init")


# Module-level kernels (bound with functools.partial) keep every spec picklable
# for process pools.


def _scalar(out):
    return out if out.ndim else float(out)


def _video(S, p):
    S = np.asarray(S, dtype=float)
    return _scalar(p.gamma * S * (p.alpha0 + (S - 1) * (p.tau + p.rho * (S - 1) + p.c * p.rho * (S - 2))))


def _weibull(S, p):
    return _scalar(-np.expm1(-((np.asarray(S, dtype=float) / p.gamma) ** p.rho)))


def _fire(S, p):
    S = np.asarray(S, dtype=float)
    return _scalar(np.where(S == 0, 0.0, np.minimum(p.F_max, p.F_init * np.exp(p.gamma_growth * S))))


def _linear(S):
    return _scalar(np.asarray(S, dtype=float))


def _error(S):
    return _scalar((np.asarray(S) != 0).astype(float))


def _time_threshold(S, zeta):
    return _scalar((np.asarray(S, dtype=float) >= zeta).astype(float))


def video_f(p: Video = Video()) -> PenaltySpec:
    """Accumulated distortion of a concealed error burst of length ``S`` (cubic in ``S``)."""
    return PenaltySpec.unbounded(partial(_video, p=p), name="video")


def weibull_f(p: Weibull = Weibull(), eps: float = 1e-3) -> PenaltySpec:
    """Breakdown probability ``1 - exp(-(S/gamma)**rho)``, truncated where it is within ``eps`` of 1."""
    if not 0.0 < eps < 1.0:
        raise ParamError(f"eps must lie in (0, 1), got {eps}")
    return PenaltySpec.bounded_by(partial(_weibull, p=p), level=1.0, epsilon=eps, name="weibull")


def fire_f(p: Fire = Fire()) -> PenaltySpec:
    """Fire damage ``min(F_max, F_init exp(gamma S))`` with ``f(0) = 0``; saturation is exact."""
    s_thresh = math.ceil(math.log(p.F_max / p.F_init) / p.gamma_growth)
    s_thresh = max(s_thresh, 1)
    return PenaltySpec.bounded_by(partial(_fire, p=p), level=p.F_max, epsilon=_EXACT,
                                  s_thresh=s_thresh, name="fire")


def linear_f() -> PenaltySpec:
    return PenaltySpec.unbounded(_linear, name="linear")


def error_f() -> PenaltySpec:
    """Indicator of a mismatch; its optimal policy is the error-optimal one."""
    return PenaltySpec.bounded_by(_error, level=1.0, epsilon=_EXACT, s_thresh=1, name="error")


def time_threshold_f(zeta: float) -> PenaltySpec:
    """``1{S >= zeta}``: mismatches shorter than ``zeta`` slots are tolerated."""
    _positive(zeta=zeta)
    s_thresh = max(math.ceil(zeta), 1)
    return PenaltySpec.bounded_by(partial(_time_threshold, zeta=zeta), level=1.0, epsilon=_EXACT,
                                  s_thresh=s_thresh, name=f"time_threshold({zeta:g})")


CATALOG = {
    "linear": lambda **kw: linear_f(),
    "error": lambda **kw: error_f(),
    "video": lambda **kw: video_f(Video(**kw)),
    "weibull": lambda eps=1e-3, **kw: weibull_f(Weibull(**kw), eps=eps),
    "fire": lambda **kw: fire_f(Fire(**kw)),
    "time_threshold": lambda zeta=1.0: time_threshold_f(zeta),
}


def make_penalty(name: str, **params) -> PenaltySpec:
    """Build a catalog penalty by name; unknown names raise :class:`ParamError`."""
    try:
        ctor = CATALOG[name]
    except KeyError:
        raise ParamError(f"unknown penalty {name!r}; choose from {sorted(CATALOG)}") from None
    try:
        return ctor(**params)
    except TypeError as exc:
        raise ParamError(f"bad parameters for {name}: {exc}") from None
