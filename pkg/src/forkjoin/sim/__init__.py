"""Stochastic simulation of the fork-join system.

Two independent simulators share one output format:

* :func:`simulate_ctmc` samples trajectories of the lumped ``(y, h)`` chain;
* :func:`simulate_des` runs an event-driven model of ``n`` explicit FCFS
  servers with cancel-on-``k``.

Each replication gets its own seed spawned from ``settings.seed`` and, inside
it, an independent PCG64 stream per server (plus one for arrivals).  The
kernels come in a compiled and a pure-Python flavour that produce
bit-identical output; the compiled one is used when importable unless
``FORKJOIN_BACKEND=python`` is set.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from ..errors import InvalidParameter, NoCompletions
from ..model import Estimate, MetricsReport, SystemConfig, power_levels, validate
from . import _pykernels

try:
    from . import _kernels as _ckernels
except ImportError:  # no compiler at install time
    _ckernels = None

__all__ = [
    "MODES",
    "SimSettings",
    "ReplicationResult",
    "EventLog",
    "SojournEstimate",
    "available_backends",
    "default_backend",
    "replication_seeds",
    "run_replication",
    "simulate",
    "simulate_ctmc",
    "simulate_des",
    "estimate_sojourn",
    "REPLICATION_CSV_HEADER",
]

MODES = ("ctmc_trajectory", "server_des")
REPLICATION_CSV_HEADER = ("replication", "seed", "horizon", "R", "M", "Mh", "P",
                          "sojourn", "little_residual")


def available_backends():
    return ("compiled", "python") if _ckernels is not None else ("python",)


def default_backend():
    forced = os.environ.get("FORKJOIN_BACKEND", "").strip().lower()
    if forced in ("python", "py"):
        return "python"
    if forced == "compiled" and _ckernels is None:
        raise ImportError("compiled kernels requested but forkjoin.sim._kernels is not built")
    return "compiled" if _ckernels is not None else "python"


def _kernel_module(backend):
    backend = backend or default_backend()
    if backend == "python":
        return _pykernels
    if backend == "compiled":
        if _ckernels is None:
            raise ImportError("forkjoin.sim._kernels is not built")
        return _ckernels
    raise InvalidParameter("backend", f"unknown backend {backend!r}")


@dataclass(frozen=True)
class SimSettings:
    """Run length, seeding and simulator choice.

    ``warmup=None`` means 10% of the horizon.
    """

    horizon: float = 1e5
    warmup: Optional[float] = None
    seed: int = 0
    replications: int = 5
    mode: str = "server_des"

    def __post_init__(self):
        if not (isinstance(self.horizon, (int, float)) and math.isfinite(self.horizon)
                and self.horizon > 0):
            raise InvalidParameter("horizon", "must be a positive finite number")
        w = self.effective_warmup
        if not (0.0 <= w < self.horizon):
            raise InvalidParameter("warmup", "0 <= warmup < horizon violated")
        if isinstance(self.replications, bool) or not isinstance(self.replications, int) \
                or self.replications < 1:
            raise InvalidParameter("replications", "must be an integer >= 1")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) \
                or not 0 <= self.seed < 2**64:
            raise InvalidParameter("seed", "must be an integer in [0, 2^64)")
        if self.mode not in MODES:
            raise InvalidParameter("mode", f"must be one of {MODES}")

    @property
    def effective_warmup(self) -> float:
        return 0.1 * self.horizon if self.warmup is None else float(self.warmup)

    def to_dict(self):
        return {
            "horizon": self.horizon,
            "warmup": self.effective_warmup,
            "seed": self.seed,
            "replications": self.replications,
            "mode": self.mode,
        }


def replication_seeds(seed: int, replications: int) -> list[int]:
    """Independent 64-bit seeds, one per replication."""
    children = np.random.SeedSequence(seed).spawn(replications)
    return [int(c.generate_state(1, np.uint64)[0]) for c in children]


def _streams(rep_seed, count):
    return [np.random.Generator(np.random.PCG64(s))
            for s in np.random.SeedSequence(rep_seed).spawn(count)]


@dataclass(frozen=True)
class EventLog:
    """Arrival and departure times of queries completed inside the window."""

    arrival: np.ndarray
    departure: np.ndarray
    lam: float = float("nan")
    warmup: float = 0.0
    horizon: float = float("nan")

    def __len__(self):
        return len(self.arrival)

    def write_csv(self, path):
        """Columns: ``query,arrival,departure``; one row per completed query."""
        with open(path, "w") as fh:
            fh.write("query,arrival,departure\n")
            for i, (a, d) in enumerate(zip(self.arrival.tolist(), self.departure.tolist())):
                fh.write(f"{i},{a:.17g},{d:.17g}\n")

    @classmethod
    def read_csv(cls, path, lam=float("nan")):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.size == 0:
            return cls(np.empty(0), np.empty(0), lam)
        return cls(data[:, 1].copy(), data[:, 2].copy(), lam)


@dataclass(frozen=True)
class ReplicationResult:
    replication: int
    seed: int
    horizon: float
    warmup: float
    R: float
    M: float
    Mh: float
    P: float
    sojourn: float
    little_residual: float
    completed: int
    service_starts: int
    high_starts: int
    quarter_R: tuple
    events: Optional[EventLog] = field(default=None, repr=False, compare=False)

    def csv_row(self):
        return (self.replication, self.seed, self.horizon, self.R, self.M, self.Mh,
                self.P, self.sojourn, self.little_residual)


def _little_residual(R, lam, sojourn):
    if R == 0.0 and (lam == 0.0 or sojourn == 0.0):
        return 0.0
    if R == 0.0 or math.isnan(sojourn):
        return float("nan")
    return abs(R - lam * sojourn) / R


def run_replication(config: SystemConfig, settings: SimSettings, replication: int,
                    rep_seed: int, backend=None, record=False) -> ReplicationResult:
    """One independent replication with the given seed."""
    kern = _kernel_module(backend)
    n, k = config.n, config.k
    warmup = settings.effective_warmup
    horizon = float(settings.horizon)
    args = (n, k, float(config.lam), float(config.mu0), float(config.mu1), float(config.p),
            horizon, warmup)
    if settings.mode == "server_des":
        g = _streams(rep_seed, n + 1)
        out = kern.run_des(*args, g[0], g[1:], record)
    else:
        g = _streams(rep_seed, 1)
        out = kern.run_ctmc(*args, g[0], record)

    span = horizon - warmup
    R = out["int_R"] / span
    M = out["int_M"] / span
    Mh = out["int_Mh"] / span
    P0, P1 = power_levels(config.power, config.mu0, config.mu1)
    P = P0 * (M - Mh) + P1 * Mh
    if out["soj_n"] > 0:
        soj = out["soj_sum"] / out["soj_n"]
    else:
        soj = 0.0 if config.lam == 0 else float("nan")
    events = None
    if record:
        events = EventLog(np.asarray(out["log_arrival"], dtype=float),
                          np.asarray(out["log_departure"], dtype=float),
                          config.lam, warmup, horizon)
    return ReplicationResult(
        replication=replication,
        seed=rep_seed,
        horizon=horizon,
        warmup=warmup,
        R=R,
        M=M,
        Mh=Mh,
        P=P,
        sojourn=soj,
        little_residual=_little_residual(R, config.lam, soj),
        completed=int(out["soj_n"]),
        service_starts=int(out["starts"]),
        high_starts=int(out["high_starts"]),
        quarter_R=tuple(x / (span / 4.0) for x in out["quarter_R"]),
        events=events,
    )


def _estimate(values):
    v = np.asarray(values, dtype=float)
    m = float(v.mean())
    if len(v) < 2 or not np.all(np.isfinite(v)):
        return Estimate(m, float("nan"), float("nan"))
    se = float(v.std(ddof=1) / math.sqrt(len(v)))
    return Estimate(m, se, float(stats.t.ppf(0.975, len(v) - 1) * se))


def _aggregate(reps, settings):
    first = sum(r.quarter_R[0] for r in reps)
    last = sum(r.quarter_R[3] for r in reps)
    starts = sum(r.service_starts for r in reps)
    high = sum(r.high_starts for r in reps)
    return MetricsReport(
        mean_queries=_estimate([r.R for r in reps]),
        mean_active=_estimate([r.M for r in reps]),
        mean_high_rate=_estimate([r.Mh for r in reps]),
        mean_power=_estimate([r.P for r in reps]),
        mean_sojourn=_estimate([r.sojourn for r in reps]),
        horizon=float(settings.horizon),
        completed=sum(r.completed for r in reps),
        seed=settings.seed,
        high_start_fraction=high / starts if starts else float("nan"),
        service_starts=starts,
        nonstationary=bool(last > 2.0 * first),
        replications=tuple(reps),
    )


def simulate(config: SystemConfig, settings: SimSettings, backend=None, threads=1,
             record=False) -> MetricsReport:
    """Run all replications (in parallel when ``threads > 1``) and aggregate.

    Results do not depend on ``threads``: each replication owns its streams
    and the reduction runs in replication order.
    """
    validate(config)
    seeds = replication_seeds(settings.seed, settings.replications)
    jobs = list(enumerate(seeds))

    def one(job):
        return run_replication(config, settings, job[0], job[1], backend, record)

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reps = list(pool.map(one, jobs))
    else:
        reps = [one(j) for j in jobs]
    return _aggregate(reps, settings)


def _with_mode(settings, mode):
    if settings.mode == mode:
        return settings
    from dataclasses import replace
    return replace(settings, mode=mode)


def simulate_ctmc(config: SystemConfig, settings: SimSettings, backend=None, threads=1,
                  record=False) -> MetricsReport:
    """Trajectory sampling of the lumped chain; ``settings.mode`` is overridden."""
    return simulate(config, _with_mode(settings, "ctmc_trajectory"), backend, threads, record)


def simulate_des(config: SystemConfig, settings: SimSettings, backend=None, threads=1,
                 record=False) -> MetricsReport:
    """Server-level discrete-event simulation; ``settings.mode`` is overridden."""
    return simulate(config, _with_mode(settings, "server_des"), backend, threads, record)


@dataclass(frozen=True)
class SojournEstimate:
    mean: float
    se: float
    ci: float
    count: int
    little_residual: float = float("nan")


def estimate_sojourn(log: EventLog, mean_queries=None, lam=None, batches=20) -> SojournEstimate:
    """Mean sojourn time of the logged queries with a batch-means 95% CI.

    Queries are split in arrival order into ``batches`` contiguous groups to
    absorb serial correlation.  If ``mean_queries`` is given, the relative
    Little's-law residual ``|R - lam * T| / R`` is reported as well.

    Raises
    ------
    NoCompletions
        If the log holds no completed query.
    """
    s = np.asarray(log.departure, dtype=float) - np.asarray(log.arrival, dtype=float)
    if s.size == 0:
        raise NoCompletions("no query completed inside the measurement window")
    mean = float(s.mean())
    b = min(batches, s.size)
    if b >= 2:
        means = np.array([c.mean() for c in np.array_split(s, b)])
        se = float(means.std(ddof=1) / math.sqrt(b))
        ci = float(stats.t.ppf(0.975, b - 1) * se)
    else:
        se = ci = float("nan")
    lam = log.lam if lam is None else lam
    resid = float("nan")
    if mean_queries is not None and lam is not None and not math.isnan(lam):
        resid = _little_residual(float(mean_queries), float(lam), mean)
    return SojournEstimate(mean, se, ci, int(s.size), resid)
