"""Domain types and parameter validation.

All types are frozen dataclasses. ``SystemConfig`` round-trips through a JSON
document whose keys are ``n, k, lambda, mu0, mu1, p, power``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

from .errors import InvalidParameter

__all__ = [
    "PowerModel",
    "SystemConfig",
    "TandemOccupancy",
    "FullState",
    "Transition",
    "Estimate",
    "MetricsReport",
    "ApproxReport",
    "validate",
    "power_levels",
    "stage_servers",
    "reference_config",
]


@dataclass(frozen=True)
class PowerModel:
    """Per-server power draw at the two service rates.

    ``kind`` is ``"quadratic"`` (power ``alpha * mu**2``) or ``"explicit"``
    (``P0`` and ``P1`` given directly).
    """

    kind: str = "quadratic"
    alpha: float = 1.0
    P0: Optional[float] = None
    P1: Optional[float] = None

    @classmethod
    def quadratic(cls, alpha=1.0):
        return cls("quadratic", alpha=float(alpha))

    @classmethod
    def explicit(cls, P0, P1):
        return cls("explicit", alpha=0.0, P0=float(P0), P1=float(P1))

    @classmethod
    def parse(cls, text: str) -> "PowerModel":
        """Parse ``quadratic:<alpha>`` or ``explicit:<P0>,<P1>``."""
        kind, _, rest = text.partition(":")
        kind = kind.strip().lower()
        try:
            if kind == "quadratic":
                return cls.quadratic(float(rest) if rest else 1.0)
            if kind == "explicit":
                a, b = rest.split(",")
                return cls.explicit(float(a), float(b))
        except ValueError as exc:
            raise InvalidParameter("power", f"cannot parse {text!r}") from exc
        raise InvalidParameter("power", f"unknown power model {text!r}")

    def to_dict(self):
        if self.kind == "quadratic":
            return {"kind": "quadratic", "alpha": self.alpha}
        return {"kind": "explicit", "P0": self.P0, "P1": self.P1}

    @classmethod
    def from_dict(cls, d) -> "PowerModel":
        if not isinstance(d, dict):
            raise InvalidParameter("power", "expected an object")
        kind = d.get("kind")
        allowed = {"quadratic": {"kind", "alpha"}, "explicit": {"kind", "P0", "P1"}}
        if kind not in allowed:
            raise InvalidParameter("power", f"unknown kind {kind!r}")
        extra = set(d) - allowed[kind]
        if extra:
            raise InvalidParameter("power", f"unknown keys {sorted(extra)}")
        if kind == "quadratic":
            return cls.quadratic(d.get("alpha", 1.0))
        try:
            return cls.explicit(d["P0"], d["P1"])
        except KeyError as exc:
            raise InvalidParameter("power", f"missing {exc.args[0]}") from exc


def power_levels(power: PowerModel, mu0: float, mu1: float) -> tuple[float, float]:
    """Return ``(P0, P1)``, the power of one busy server at each rate."""
    if power.kind == "quadratic":
        return power.alpha * mu0 * mu0, power.alpha * mu1 * mu1
    if power.kind == "explicit":
        return float(power.P0), float(power.P1)
    raise InvalidParameter("power", f"unknown kind {power.kind!r}")


_CONFIG_KEYS = ("n", "k", "lambda", "mu0", "mu1", "p", "power")


@dataclass(frozen=True)
class SystemConfig:
    """One (n, k) fork-join system with probabilistic two-rate slowdown.

    Attributes
    ----------
    n : int
        Number of servers each query is forked to.
    k : int
        Number of responses after which the query departs.
    lam : float
        Poisson arrival rate (serialized as ``lambda``).
    mu0, mu1 : float
        Low and high service rates.
    p : float
        Probability that a server picks ``mu1`` at the start of a service.
    power : PowerModel
    """

    n: int
    k: int
    lam: float
    mu0: float
    mu1: float
    p: float
    power: PowerModel = field(default_factory=PowerModel.quadratic)

    @property
    def power_levels(self):
        return power_levels(self.power, self.mu0, self.mu1)

    def replace(self, **changes) -> "SystemConfig":
        from dataclasses import replace

        return replace(self, **changes)

    def to_dict(self):
        return {
            "n": self.n,
            "k": self.k,
            "lambda": self.lam,
            "mu0": self.mu0,
            "mu1": self.mu1,
            "p": self.p,
            "power": self.power.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d, partial=False) -> "SystemConfig | dict":
        """Build a config from a JSON object, rejecting unknown keys.

        With ``partial=True`` missing keys are allowed and a plain dict of
        keyword arguments is returned instead (used when merging CLI flags).
        """
        if not isinstance(d, dict):
            raise InvalidParameter("config", "expected a JSON object")
        extra = set(d) - set(_CONFIG_KEYS)
        if extra:
            raise InvalidParameter("config", f"unknown keys {sorted(extra)}")
        kw = {}
        for key in _CONFIG_KEYS:
            if key not in d:
                continue
            val = d[key]
            name = "lam" if key == "lambda" else key
            if key == "power":
                kw[name] = PowerModel.from_dict(val)
            elif key in ("n", "k"):
                if isinstance(val, bool) or not isinstance(val, int):
                    raise InvalidParameter(key, "must be an integer")
                kw[name] = val
            else:
                if isinstance(val, bool) or not isinstance(val, (int, float)):
                    raise InvalidParameter(key, "must be a number")
                kw[name] = float(val)
        if partial:
            return kw
        missing = [k for k in _CONFIG_KEYS if k != "power" and k not in d]
        if missing:
            raise InvalidParameter(missing[0], "missing")
        return cls(**kw)

    @classmethod
    def from_json(cls, text: str) -> "SystemConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidParameter("config", f"malformed JSON: {exc}") from exc
        return cls.from_dict(d)


def reference_config(p=0.6, lam=0.5, n=20, k=18, alpha=1.0) -> SystemConfig:
    """The evaluation setup: ``mu1 = k/n``, ``mu0 = 0.6 k/n``, quadratic power."""
    return SystemConfig(n, k, lam, 0.6 * k / n, k / n, p, PowerModel.quadratic(alpha))


def validate(config: SystemConfig) -> SystemConfig:
    """Return ``config`` unchanged if every invariant holds.

    Raises
    ------
    InvalidParameter
        For the first violated invariant, naming the offending field.
    """
    c = config
    if isinstance(c.n, bool) or not isinstance(c.n, int) or c.n < 1:
        raise InvalidParameter("n", "must be a positive integer")
    if isinstance(c.k, bool) or not isinstance(c.k, int) or c.k < 1:
        raise InvalidParameter("k", "must be a positive integer")
    if c.k > c.n:
        raise InvalidParameter("k", "k ≤ n violated")
    if not (math.isfinite(c.lam) and c.lam >= 0):
        raise InvalidParameter("lambda", "must be finite and >= 0")
    if not (math.isfinite(c.mu0) and c.mu0 > 0):
        raise InvalidParameter("mu0", "must be > 0")
    if not (math.isfinite(c.mu1) and c.mu1 > 0):
        raise InvalidParameter("mu1", "must be > 0")
    if c.mu0 > c.mu1:
        raise InvalidParameter("mu0", "mu0 ≤ mu1 violated")
    if not (0.0 <= c.p <= 1.0):
        raise InvalidParameter("p", "must lie in [0, 1]")
    if not isinstance(c.power, PowerModel):
        raise InvalidParameter("power", "must be a PowerModel")
    if c.power.kind == "quadratic" and not (math.isfinite(c.power.alpha) and c.power.alpha > 0):
        raise InvalidParameter("power", "alpha must be > 0")
    P0, P1 = power_levels(c.power, c.mu0, c.mu1)
    if not (P0 > 0 and P1 > 0):
        raise InvalidParameter("power", "P0 and P1 must be > 0")
    if c.mu1 > c.mu0 and not P1 > P0:
        raise InvalidParameter("power", "P1 > P0 required when mu1 > mu0")
    return config


def stage_servers(y, n):
    """Pooled server counts ``N_0(y) .. N_{k-1}(y)`` for occupancy ``y``.

    The last stage always has ``n - k + 1`` servers; an empty stage lends its
    servers to the stage before it.
    """
    k = len(y)
    N = [0] * k
    N[k - 1] = n - k + 1
    for i in range(k - 2, -1, -1):
        N[i] = 1 + (N[i + 1] if y[i + 1] == 0 else 0)
    return N


@dataclass(frozen=True)
class TandemOccupancy:
    """``y[i]`` queries currently hold exactly ``i`` completed responses."""

    y: tuple

    def __post_init__(self):
        object.__setattr__(self, "y", tuple(int(v) for v in self.y))
        if not self.y:
            raise InvalidParameter("y", "must have length k >= 1")
        if any(v < 0 for v in self.y):
            raise InvalidParameter("y", "entries must be >= 0")

    @property
    def k(self):
        return len(self.y)

    def total(self):
        return sum(self.y)


@dataclass(frozen=True)
class FullState:
    """Tandem occupancy plus the number of high-rate servers at each stage.

    ``n`` is carried so that the bound ``h[i] <= N_i(y)`` can be checked on
    construction; it does not take part in equality.
    """

    y: tuple
    h: tuple
    n: int = field(compare=False, default=0)

    def __post_init__(self):
        y = tuple(int(v) for v in self.y)
        h = tuple(int(v) for v in self.h)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "h", h)
        if len(y) != len(h) or not y:
            raise InvalidParameter("h", "y and h must both have length k")
        if any(v < 0 for v in y) or any(v < 0 for v in h):
            raise InvalidParameter("h", "entries must be >= 0")
        for i in range(len(y)):
            if y[i] == 0 and h[i] != 0:
                raise InvalidParameter("h", f"stage {i} is empty but h[{i}]={h[i]}")
        if self.n:
            N = stage_servers(y, self.n)
            for i in range(len(y)):
                if h[i] > N[i]:
                    raise InvalidParameter("h", f"h[{i}]={h[i]} exceeds N_{i}(y)={N[i]}")

    @classmethod
    def empty(cls, k, n=0):
        return cls((0,) * k, (0,) * k, n)


@dataclass(frozen=True)
class Transition:
    target: FullState
    rate: float
    label: tuple

    def __post_init__(self):
        if not self.rate > 0:
            raise InvalidParameter("rate", "transition rates must be > 0")


@dataclass(frozen=True)
class Estimate:
    """A point estimate with its standard error and 95% CI half-width."""

    mean: float
    se: float = 0.0
    ci: float = 0.0

    def to_dict(self):
        return {"mean": self.mean, "se": self.se, "ci": self.ci}


@dataclass(frozen=True)
class MetricsReport:
    """Long-run time averages from a simulation or an exact chain solution.

    ``mean_power`` always equals ``P0*(M - Mh) + P1*Mh`` for the reported
    means because the estimators are linear in the same integrals.
    """

    mean_queries: Estimate
    mean_active: Estimate
    mean_high_rate: Estimate
    mean_power: Estimate
    mean_sojourn: Estimate
    horizon: float = 0.0
    completed: int = 0
    seed: Optional[int] = None
    high_start_fraction: float = float("nan")
    service_starts: int = 0
    nonstationary: bool = False
    replications: tuple = ()

    def to_dict(self):
        return {
            "R": self.mean_queries.to_dict(),
            "M": self.mean_active.to_dict(),
            "Mh": self.mean_high_rate.to_dict(),
            "P": self.mean_power.to_dict(),
            "sojourn": self.mean_sojourn.to_dict(),
            "horizon": self.horizon,
            "completed": self.completed,
            "seed": self.seed,
            "high_start_fraction": self.high_start_fraction,
            "service_starts": self.service_starts,
            "nonstationary": self.nonstationary,
        }


APPROX_CSV_HEADER = ("n", "k", "lambda", "mu0", "mu1", "p", "mu_bar", "stable",
                     "lambda_max", "R", "sojourn", "M", "Mh", "P")


def fmt(x) -> str:
    """Locale-independent 12-significant-digit rendering used in every CSV."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if x is None:
        return ""
    return format(float(x), ".12g")


@dataclass(frozen=True)
class ApproxReport:
    """Closed-form metrics of the independent tandem-queue approximation.

    Metric fields are ``None`` when the configuration is unstable.
    """

    config: SystemConfig
    mu_bar: float
    lambda_max: float
    stable: bool
    stability_margin: float
    n_bar: Optional[tuple] = None
    rho: Optional[tuple] = None
    pi0: Optional[tuple] = None
    mean_queries: Optional[float] = None
    mean_sojourn: Optional[float] = None
    mean_active: Optional[float] = None
    mean_high_rate: Optional[float] = None
    mean_power: Optional[float] = None

    def csv_row(self):
        c = self.config
        return [fmt(v) for v in (c.n, c.k, c.lam, c.mu0, c.mu1, c.p, self.mu_bar,
                                 self.stable, self.lambda_max, self.mean_queries,
                                 self.mean_sojourn, self.mean_active,
                                 self.mean_high_rate, self.mean_power)]

    def to_dict(self):
        return {
            "config": self.config.to_dict(),
            "mu_bar": self.mu_bar,
            "lambda_max": self.lambda_max,
            "stable": self.stable,
            "stability_margin": self.stability_margin,
            "n_bar": list(self.n_bar) if self.n_bar is not None else None,
            "rho": list(self.rho) if self.rho is not None else None,
            "pi0": list(self.pi0) if self.pi0 is not None else None,
            "R": self.mean_queries,
            "sojourn": self.mean_sojourn,
            "M": self.mean_active,
            "Mh": self.mean_high_rate,
            "P": self.mean_power,
        }
