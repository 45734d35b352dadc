"""Plain-text ``key = value`` experiment configuration.

One key per line, ``#`` starts a comment, lists are comma separated.  Penalty
parameters use a ``penalty.`` prefix (``penalty.gamma = 1``).
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields

from .applications import CATALOG, make_penalty
from .errors import ConfigError
from .model import PenaltySpec, SourceChannelParams, validate

MODES = ("analytic", "simulate", "both")
POLICIES = ("optimal", "error_optimal", "aoi", "threshold", "never", "always")


def _floats(v):
    return [float(x) for x in v.split(",") if x.strip()]


def _ints(v):
    return [int(float(x)) for x in v.split(",") if x.strip()]


def _names(v):
    return [x.strip() for x in v.split(",") if x.strip()]


def _opt_int(v):
    return None if v.strip().lower() in ("", "none", "never") else int(v)


@dataclass
class ExperimentConfig:
    alpha: float = 0.2
    beta: float = 0.9
    p_s: float = 0.8
    delta_grid: list = field(default_factory=lambda: [1.0])
    penalty: str = "linear"
    penalty_params: dict = field(default_factory=dict)
    T: int = 10**7
    seeds: list = field(default_factory=lambda: [1])
    eps_lambda: float = 1e-6
    rvia_tol: float = 1e-9
    mode: str = "analytic"
    jobs: int = 1
    policy: str = "optimal"
    threshold: int | None = None
    # oracle grid for `verify`
    alpha_grid: list = field(default_factory=lambda: [0.1, 0.3, 0.5])
    beta_grid: list = field(default_factory=lambda: [0.7, 0.9])
    p_s_grid: list = field(default_factory=lambda: [0.6, 0.9])
    lambda_grid: list = field(default_factory=lambda: [0.0, 0.5, 2.0, 10.0])
    penalty_grid: list = field(default_factory=lambda: ["linear", "weibull", "error"])
    explicit: set = field(default_factory=set, repr=False, compare=False)  # keys set by the user

    def params(self, delta: float | None = None) -> SourceChannelParams:
        d = self.delta_grid[0] if delta is None else delta
        return validate(self.alpha, self.beta, self.p_s, d)

    def make_penalty(self) -> PenaltySpec:
        return make_penalty(self.penalty, **self.penalty_params)

    def check(self) -> "ExperimentConfig":
        """Validate cross-field invariants; raises model/penalty errors or ConfigError."""
        for name in ("delta_grid", "seeds", "alpha_grid", "beta_grid", "p_s_grid",
                     "lambda_grid", "penalty_grid"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must not be empty")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.policy not in POLICIES:
            raise ConfigError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if self.policy == "threshold" and (self.threshold is None or self.threshold < 0):
            raise ConfigError("policy = threshold needs a non-negative `threshold`")
        if self.T < 1 or self.jobs < 1 or self.eps_lambda <= 0 or self.rvia_tol <= 0:
            raise ConfigError("T, jobs, eps_lambda and rvia_tol must be positive")
        for name in [self.penalty, *self.penalty_grid]:
            if name not in CATALOG:
                raise ConfigError(f"unknown penalty {name!r}; choose from {sorted(CATALOG)}")
        if any(lam < 0 for lam in self.lambda_grid):
            raise ConfigError("lambda_grid values must be non-negative")
        for d in self.delta_grid:
            self.params(d)
        self.make_penalty()
        return self

    def resolved(self) -> str:
        """Every setting, defaults included, in the same ``key = value`` syntax."""
        lines = []
        for fl in fields(self):
            if fl.name == "explicit":
                continue
            v = getattr(self, fl.name)
            if fl.name == "penalty_params":
                lines += [f"penalty.{k} = {v[k]!r}" for k in sorted(v)]
                continue
            if isinstance(v, list):
                v = ", ".join(repr(x) if not isinstance(x, str) else x for x in v)
            lines.append(f"{fl.name} = {'none' if v is None else v}")
        return "\n".join(lines) + "\n"


_PARSERS = {
    "alpha": float, "beta": float, "p_s": float,
    "delta": lambda v: [float(v)], "delta_grid": _floats,
    "penalty": str.strip,
    "T": lambda v: int(float(v)), "slots": lambda v: int(float(v)),
    "seed": lambda v: [int(v)], "seeds": _ints,
    "eps_lambda": float, "rvia_tol": float,
    "mode": str.strip, "jobs": int, "policy": str.strip, "threshold": _opt_int,
    "alpha_grid": _floats, "beta_grid": _floats, "p_s_grid": _floats,
    "lambda_grid": _floats, "penalty_grid": _names,
}
_TARGET = {"delta": "delta_grid", "slots": "T", "seed": "seeds"}


def _penalty_value(v):
    try:
        return float(v)
    except ValueError:
        raise ConfigError(f"penalty parameters must be numeric, got {v!r}") from None


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    cfg = base or ExperimentConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith("penalty."):
            cfg.penalty_params[key[len("penalty."):]] = _penalty_value(value)
            cfg.explicit.add("penalty_params")
            continue
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            parsed = _PARSERS[key](value)
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from None
        setattr(cfg, _TARGET.get(key, key), parsed)
        cfg.explicit.add(_TARGET.get(key, key))
    return cfg


def load_config(path: str | None, base: ExperimentConfig | None = None) -> ExperimentConfig:
    if path is None:
        return base or ExperimentConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, base)
