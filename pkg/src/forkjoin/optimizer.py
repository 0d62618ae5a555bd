"""Choosing the high-rate probability ``p``: tradeoff curves and SLA-constrained power minimization.

Everything here is evaluated with the closed-form approximation.  The mean
number of queries decreases in ``p`` (faster service on average), so the
smallest ``p`` meeting a latency bound is found by bisection.  Mean power is
*not* assumed monotone and is minimized by a grid scan with a bounded local
refinement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from scipy.optimize import minimize_scalar

from . import approx
from .errors import Infeasible, InvalidParameter, SlaInfeasible
from .model import SystemConfig, fmt, validate

__all__ = [
    "TradeoffPoint",
    "SlaQuery",
    "SlaResult",
    "TRADEOFF_CSV_HEADER",
    "tradeoff_curve",
    "feasible_p_threshold",
    "min_power_for_sla",
]

TRADEOFF_CSV_HEADER = ("p", "stable", "R", "sojourn", "M", "Mh", "P")


@dataclass(frozen=True)
class TradeoffPoint:
    """Approximate metrics at one ``p``; metric fields are ``None`` when unstable."""

    p: float
    stable: bool
    R: Optional[float] = None
    sojourn: Optional[float] = None
    M: Optional[float] = None
    Mh: Optional[float] = None
    P: Optional[float] = None

    def csv_row(self):
        return [fmt(v) for v in (self.p, self.stable, self.R, self.sojourn, self.M, self.Mh, self.P)]


def _point(config: SystemConfig, p: float) -> TradeoffPoint:
    rep = approx.report(config.replace(p=p))
    if not rep.stable:
        return TradeoffPoint(p, False)
    return TradeoffPoint(p, True, rep.mean_queries, rep.mean_sojourn, rep.mean_active,
                         rep.mean_high_rate, rep.mean_power)


def tradeoff_curve(config: SystemConfig, lam: Optional[float] = None,
                   p_values: Sequence[float] = ()) -> list[TradeoffPoint]:
    """Evaluate the approximation at each ``p`` for a fixed arrival rate."""
    base = config if lam is None else config.replace(lam=lam)
    for p in p_values:
        if not 0.0 <= p <= 1.0:
            raise InvalidParameter("p", f"{p} outside [0, 1]")
    return [_point(base, float(p)) for p in p_values]


def feasible_p_threshold(config: SystemConfig, lam: Optional[float] = None) -> float:
    """Boundary ``p_min`` of the stable set ``{p : lam < (n/k) mu_bar(p)}``.

    The set is the open interval ``(p_min, 1]``, or all of ``[0, 1]`` when
    ``p = 0`` is already stable, in which case 0 is returned.

    Raises
    ------
    Infeasible
        If ``lam >= (n/k) mu1``, i.e. not even ``p = 1`` is stable.
    """
    lam = config.lam if lam is None else lam
    n, k, mu0, mu1 = config.n, config.k, config.mu0, config.mu1
    top = n / k * mu1
    if lam >= top:
        raise Infeasible(top)
    if lam < n / k * mu0:
        return 0.0
    # mu_bar(p) = lam k / n  <=>  p/mu1 + (1-p)/mu0 = n / (k lam)
    p = (1.0 / mu0 - n / (k * lam)) / (1.0 / mu0 - 1.0 / mu1)
    return min(max(p, 0.0), 1.0)


@dataclass(frozen=True)
class SlaQuery:
    """A latency bound on mean queries or on mean sojourn time."""

    lam: float
    R_max: Optional[float] = None
    T_max: Optional[float] = None
    p_grid_step: float = 0.01
    refine_tol: float = 1e-6

    def __post_init__(self):
        if (self.R_max is None) == (self.T_max is None):
            raise InvalidParameter("constraint", "give exactly one of R_max and T_max")
        bound = self.R_max if self.R_max is not None else self.T_max
        if not bound > 0:
            raise InvalidParameter("constraint", "bound must be > 0")
        if not 0.0 < self.p_grid_step <= 0.25:
            raise InvalidParameter("p_grid_step", "must lie in (0, 0.25]")
        if not self.refine_tol > 0:
            raise InvalidParameter("refine_tol", "must be > 0")

    @property
    def limit(self) -> float:
        """Bound expressed in mean queries (Little's law for sojourn bounds)."""
        return self.R_max if self.R_max is not None else self.lam * self.T_max


@dataclass(frozen=True)
class SlaResult:
    p_star: float
    point: TradeoffPoint
    binding: bool
    p_sla: float
    p_min: float

    def __iter__(self):
        yield self.p_star
        yield self.point

    def to_dict(self):
        return {
            "p_star": self.p_star,
            "R": self.point.R,
            "sojourn": self.point.sojourn,
            "P": self.point.P,
            "binding": self.binding,
        }


def _meets(config, p, limit):
    pt = _point(config, p)
    return pt.stable and pt.R <= limit


def _smallest_feasible_p(config, limit, p_min, tol):
    """Bisection keeping ``lo`` infeasible and ``hi`` feasible; returns ``hi``."""
    if p_min == 0.0 and _meets(config, 0.0, limit):
        return 0.0
    lo, hi = p_min, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _meets(config, mid, limit):
            hi = mid
        else:
            lo = mid
    return hi


def min_power_for_sla(config: SystemConfig, query: SlaQuery) -> SlaResult:
    """Smallest mean power over the ``p`` that are stable and meet the SLA.

    Raises
    ------
    Infeasible
        If no ``p`` is stable at ``query.lam``.
    SlaInfeasible
        If even ``p = 1`` violates the bound.
    """
    base = config.replace(lam=query.lam)
    validate(base)
    p_min = feasible_p_threshold(base)
    limit = query.limit
    best_at_1 = _point(base, 1.0)
    if not best_at_1.R <= limit:
        raise SlaInfeasible(best_at_1.R, limit)

    tol = query.refine_tol
    p_sla = _smallest_feasible_p(base, limit, p_min, tol)
    start = max(p_min, p_sla)

    step = query.p_grid_step
    grid = [start]
    j = math.floor(start / step) + 1
    while j * step < 1.0:
        grid.append(j * step)
        j += 1
    grid.append(1.0)

    scored = []
    for p in grid:
        pt = _point(base, p)
        if pt.stable and pt.R <= limit:
            scored.append((pt.P, p, pt))
    best_P, best_p, best_pt = min(scored, key=lambda s: (s[0], s[1]))

    i = grid.index(best_p)
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    if b > a:
        def objective(p):
            pt = _point(base, p)
            return pt.P if pt.stable and pt.R <= limit else math.inf

        res = minimize_scalar(objective, bounds=(a, b), method="bounded",
                              options={"xatol": tol})
        if res.success and res.fun < best_P:
            best_p = float(res.x)
            best_pt = _point(base, best_p)
            best_P = best_pt.P

    binding = math.isfinite(limit) and p_sla > 0.0 and best_p - p_sla <= tol
    return SlaResult(best_p, best_pt, bool(binding), p_sla, p_min)
