"""Closed-form metrics of the independent tandem-queue approximation.

Each stage ``i`` is treated as an M/M/1 queue with a fixed service capacity
``N_bar[i] * mu_bar``, where ``mu_bar`` is the harmonic mean of the two rates
weighted by ``p`` and ``N_bar`` is the mean number of pooled servers.  The
resulting product-form equilibrium gives every metric in closed form.

All functions are pure and raise :class:`~forkjoin.errors.Unstable` (carrying
``lambda_max``) outside the stability region ``lam < (n/k) mu_bar``.  At
``lam == 0`` they return the empty-system limits.
"""
from __future__ import annotations

import math

from .errors import DegenerateRatio, Unstable
from .model import ApproxReport, SystemConfig, power_levels, validate

__all__ = [
    "mean_service_rate",
    "stability_region",
    "virtual_servers",
    "queue_loads",
    "mean_queries",
    "mean_sojourn",
    "mean_active_servers",
    "mean_active_servers_alt",
    "mean_high_rate_servers",
    "mean_power",
    "large_system_sojourn",
    "report",
]


def mean_service_rate(p, mu0, mu1):
    """Reciprocal of the mean service time when ``mu1`` is picked w.p. ``p``."""
    return 1.0 / (p / mu1 + (1.0 - p) / mu0)


def stability_region(config: SystemConfig):
    """Return ``(stable, lambda_max)`` with ``lambda_max = (n/k) mu_bar``."""
    lam_max = config.n / config.k * mean_service_rate(config.p, config.mu0, config.mu1)
    return config.lam < lam_max, lam_max


def _require_stable(config):
    stable, lam_max = stability_region(config)
    if not stable:
        raise Unstable(config.lam, lam_max)
    return lam_max


def virtual_servers(n, k, lam, mu_bar):
    """Mean pooled server count per stage, ``(n-i) - (k-1-i) lam/mu_bar``.

    Raises
    ------
    Unstable
        If some stage has ``N_bar[i] * mu_bar <= lam``.
    """
    x = lam / mu_bar
    n_bar = tuple((n - i) - (k - 1 - i) * x for i in range(k))
    if lam > 0 and any(N * mu_bar <= lam for N in n_bar):
        raise Unstable(lam, n / k * mu_bar)
    return n_bar


def queue_loads(n_bar, lam, mu_bar):
    """Per-stage load ``rho_i`` and empty probability ``pi_i(0) = 1 - rho_i``."""
    rho = tuple(lam / (N * mu_bar) for N in n_bar)
    if any(r >= 1.0 for r in rho):
        k = len(n_bar)
        n = n_bar[-1] + k - 1
        raise Unstable(lam, n / k * mu_bar)
    return rho, tuple(1.0 - r for r in rho)


def _mu_bar(config):
    return mean_service_rate(config.p, config.mu0, config.mu1)


def mean_queries(config: SystemConfig) -> float:
    """Mean number of queries, a sum of per-stage M/M/1 means."""
    _require_stable(config)
    n, k, lam, mb = config.n, config.k, config.lam, _mu_bar(config)
    return sum(lam / ((n - i) * mb - (k - i) * lam) for i in range(k))


def mean_sojourn(config: SystemConfig) -> float:
    """Mean sojourn time; by Little's law ``mean_queries / lam``."""
    _require_stable(config)
    n, k, lam, mb = config.n, config.k, config.lam, _mu_bar(config)
    return sum(1.0 / ((n - i) * mb - (k - i) * lam) for i in range(k))


def _busy_probabilities(config):
    """``p_i``: probability that stage ``i`` is the first occupied stage."""
    mb = _mu_bar(config)
    n_bar = virtual_servers(config.n, config.k, config.lam, mb)
    _, pi0 = queue_loads(n_bar, config.lam, mb)
    probs = []
    prefix = 1.0
    for e in pi0:
        probs.append((1.0 - e) * prefix)
        prefix *= e
    return probs, prefix, pi0


def mean_active_servers(config: SystemConfig) -> float:
    """Mean number of busy servers.

    When stage ``i`` is the first occupied one, ``n - i`` servers are busy.
    The result is checked against :func:`mean_active_servers_alt`.
    """
    _require_stable(config)
    probs, _, _ = _busy_probabilities(config)
    m = sum((config.n - i) * q for i, q in enumerate(probs))
    alt = mean_active_servers_alt(config)
    assert abs(m - alt) <= 1e-9 * max(1.0, abs(m)), (m, alt)
    return m


def mean_active_servers_alt(config: SystemConfig) -> float:
    """Same quantity written with cumulative empty probabilities.

    ``(n-k)(1 - p_n) + sum_j (1 - pi_0(0)...pi_j(0))`` where ``p_n`` is the
    probability that every stage is empty.
    """
    _require_stable(config)
    _, p_empty, pi0 = _busy_probabilities(config)
    total = 0.0
    prefix = 1.0
    for e in pi0:
        prefix *= e
        total += 1.0 - prefix
    return (config.n - config.k) * (1.0 - p_empty) + total


def mean_high_rate_servers(config: SystemConfig) -> float:
    return config.p * mean_active_servers(config)


def mean_power(config: SystemConfig) -> float:
    P0, P1 = power_levels(config.power, config.mu0, config.mu1)
    return mean_active_servers(config) * (P0 + (P1 - P0) * config.p)


def large_system_sojourn(config: SystemConfig) -> float:
    """Logarithmic sojourn approximation for large ``n, k`` at fixed ``k/n``.

    Raises
    ------
    DegenerateRatio
        If ``k == n`` (the formula has a log singularity).
    """
    _require_stable(config)
    n, k, lam, mb = config.n, config.k, config.lam, _mu_bar(config)
    if k >= n:
        raise DegenerateRatio("k == n makes ln(1 - k/n) singular")
    c = k / n
    diff = mb - lam
    # removable singularity at lam == mu_bar
    if abs(diff) <= 1e-12 * mb:
        return (c / mb) / (1.0 - c)
    return (math.log1p(-c * lam / mb) - math.log1p(-c)) / diff


def report(config: SystemConfig) -> ApproxReport:
    """Evaluate every closed form; metric fields stay ``None`` if unstable."""
    validate(config)
    mb = _mu_bar(config)
    stable, lam_max = stability_region(config)
    base = dict(config=config, mu_bar=mb, lambda_max=lam_max, stable=stable,
                stability_margin=lam_max - config.lam)
    if not stable:
        return ApproxReport(**base)
    n_bar = virtual_servers(config.n, config.k, config.lam, mb)
    rho, pi0 = queue_loads(n_bar, config.lam, mb)
    m = mean_active_servers(config)
    P0, P1 = power_levels(config.power, config.mu0, config.mu1)
    return ApproxReport(
        **base,
        n_bar=n_bar,
        rho=rho,
        pi0=pi0,
        mean_queries=mean_queries(config),
        mean_sojourn=mean_sojourn(config),
        mean_active=m,
        mean_high_rate=config.p * m,
        mean_power=m * (P0 + (P1 - P0) * config.p),
    )
