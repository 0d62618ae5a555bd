"""Exact (Y, H) Markov chain of the fork-join system and a truncated solver.

State ``z = (y, h)``: ``y[i]`` queries hold ``i`` completed responses and
``h[i]`` of the ``N_i(y)`` servers working on stage ``i`` run at the high
rate.  Transition rules:

* arrival (rate ``lam``): a query joins stage 0; if stage 0 was empty its
  ``N_0`` pooled servers draw their rates, ``h_0 ~ Binomial(N_0, p)``;
* completion at stage ``i`` (rate ``h_i mu1 + (N_i - h_i) mu0``): the
  completing server re-draws its rate, and if the query lands on an empty
  stage ``i+1`` the pool serving it there re-draws binomially.

When the pool of stage ``i`` splits off with the departing query only the
completing server stays behind, so its fresh draw alone determines the new
``h_i``.  Stages that become empty have ``h = 0``.

The stationary solver works on a box truncation ``y_i <= y_max`` and is only
meant for tiny instances.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import EmptyStage, NotConverged, Reducible, StateSpaceTooLarge
from .model import Estimate, FullState, MetricsReport, SystemConfig, TandemOccupancy
from .model import Transition, power_levels, stage_servers, validate

__all__ = [
    "active_servers",
    "apply_move",
    "binomial_pmf",
    "enumerate_transitions",
    "TransitionSet",
    "TruncatedChain",
    "build_truncated_chain",
    "stationary_distribution",
    "chain_metrics",
    "single_rate_rates",
    "dump_edge_list",
]

DEFAULT_STATE_CAP = 5_000_000


def active_servers(y, n, k=None):
    """``N_i(y)``: servers able to work on the head query of each stage."""
    if isinstance(y, TandemOccupancy):
        y = y.y
    if k is not None and len(y) != k:
        raise ValueError("occupancy length must equal k")
    return stage_servers(y, n)


def apply_move(y, i):
    """Occupancy after move ``a_i``: arrival (0), stage hop, or departure (k)."""
    if isinstance(y, TandemOccupancy):
        y = y.y
    y = list(y)
    k = len(y)
    if i == 0:
        y[0] += 1
        return tuple(y)
    if not 1 <= i <= k:
        raise ValueError(f"move index must lie in [0, {k}]")
    if y[i - 1] == 0:
        raise EmptyStage(i - 1)
    y[i - 1] -= 1
    if i < k:
        y[i] += 1
    return tuple(y)


def binomial_pmf(N, p):
    return [math.comb(N, b) * p**b * (1.0 - p) ** (N - b) for b in range(N + 1)]


@dataclass(frozen=True)
class TransitionSet:
    source: FullState
    transitions: tuple
    total_rate: float


def _merge(out, y, h, rate, label, n):
    if rate <= 0.0:
        return
    key = (y, h)
    if key in out:
        prev_rate, labels = out[key]
        out[key] = (prev_rate + rate, labels + (label,))
    else:
        out[key] = (rate, (label,))


def enumerate_transitions(z: FullState, config: SystemConfig) -> TransitionSet:
    """Every transition out of ``z`` with its rate.

    Transitions leading to the same target are merged and carry the tuple of
    merged labels.  Labels are ``("arrival", b)`` and
    ``("completion", stage, class, redraw, b)`` with class/redraw in
    ``{"high", "low"}`` and ``b`` the binomial draw at a newly occupied stage
    (``None`` when no draw happens).
    """
    n, k, lam, mu0, mu1, p = config.n, config.k, config.lam, config.mu0, config.mu1, config.p
    y, h = z.y, z.h
    N = stage_servers(y, n)
    out = {}

    if lam > 0:
        y2 = apply_move(y, 0)
        if y[0] > 0:
            _merge(out, y2, h, lam, ("arrival", None), n)
        else:
            N0 = stage_servers(y2, n)[0]
            for b, w in enumerate(binomial_pmf(N0, p)):
                h2 = (b,) + h[1:]
                _merge(out, y2, h2, lam * w, ("arrival", b), n)

    for i in range(k):
        if y[i] == 0:
            continue
        y2 = apply_move(y, i + 1)
        high, low = h[i] * mu1, (N[i] - h[i]) * mu0
        pooled = i < k - 1 and y[i + 1] == 0
        # (server class, redraw, rate, change of h_i when the pool stays)
        branches = (
            ("high", "high", high * p, 0),
            ("high", "low", high * (1.0 - p), -1),
            ("low", "high", low * p, 1),
            ("low", "low", low * (1.0 - p), 0),
        )
        if pooled:
            N2 = stage_servers(y2, n)[i + 1]
            draws = list(enumerate(binomial_pmf(N2, p)))
        else:
            draws = [(None, 1.0)]
        for cls, redraw, rate, dh in branches:
            if rate <= 0.0:
                continue
            hl = list(h)
            if y2[i] == 0:
                hl[i] = 0
            elif pooled:
                hl[i] = 1 if redraw == "high" else 0
            else:
                hl[i] = h[i] + dh
            for b, w in draws:
                if b is not None:
                    hl[i + 1] = b
                _merge(out, y2, tuple(hl), rate * w, ("completion", i, cls, redraw, b), n)

    transitions = tuple(
        Transition(FullState(ty, th, n), rate, labels)
        for (ty, th), (rate, labels) in out.items()
    )
    total = math.fsum(t.rate for t in transitions)
    return TransitionSet(z, transitions, total)


def single_rate_rates(y, n, mu, lam):
    """Rates of the occupancy-only chain when both service rates equal ``mu``.

    Returns a dict ``{target_y: rate}``.
    """
    N = stage_servers(y, n)
    k = len(y)
    rates = {}
    if lam > 0:
        rates[apply_move(y, 0)] = lam
    for i in range(1, k + 1):
        if y[i - 1] > 0:
            rates[apply_move(y, i)] = N[i - 1] * mu
    return rates


@dataclass
class TruncatedChain:
    """Reachable states with ``max(y) <= y_max`` and their sparse generator."""

    config: SystemConfig
    y_max: int
    states: list
    index: dict
    generator: sp.csr_matrix

    @property
    def size(self):
        return len(self.states)


def build_truncated_chain(config: SystemConfig, y_max: int = 60, cap: int = DEFAULT_STATE_CAP):
    """Breadth-first enumeration from the empty state.

    Transitions that would push any ``y_i`` above ``y_max`` are dropped, and
    the diagonal holds minus the retained outflow.

    Raises
    ------
    StateSpaceTooLarge
        If the state count provably exceeds, or the enumeration reaches, ``cap``.
    """
    validate(config)
    n, k = config.n, config.k
    # every occupancy in the box is reachable, so this is a lower bound
    lower = (y_max + 1) ** k
    if lower > cap:
        raise StateSpaceTooLarge(lower, cap)
    start = FullState.empty(k, n)
    index = {(start.y, start.h): 0}
    states = [start]
    rows, cols, vals = [], [], []
    queue = deque([start])
    while queue:
        z = queue.popleft()
        src = index[(z.y, z.h)]
        outflow = 0.0
        for t in enumerate_transitions(z, config).transitions:
            tgt = t.target
            if max(tgt.y) > y_max:
                continue
            key = (tgt.y, tgt.h)
            j = index.get(key)
            if j is None:
                j = len(states)
                if j >= cap:
                    raise StateSpaceTooLarge(j + 1, cap)
                index[key] = j
                states.append(tgt)
                queue.append(tgt)
            rows.append(src)
            cols.append(j)
            vals.append(t.rate)
            outflow += t.rate
        rows.append(src)
        cols.append(src)
        vals.append(-outflow)
    m = len(states)
    Q = sp.csr_matrix((vals, (rows, cols)), shape=(m, m))
    return TruncatedChain(config, y_max, states, index, Q)


def _reachable(adj, start=0):
    seen = np.zeros(adj.shape[0], dtype=bool)
    seen[start] = True
    frontier = [start]
    indptr, indices = adj.indptr, adj.indices
    while frontier:
        nxt = []
        for s in frontier:
            for t in indices[indptr[s]:indptr[s + 1]]:
                if not seen[t]:
                    seen[t] = True
                    nxt.append(t)
        frontier = nxt
    return seen


def stationary_distribution(chain: TruncatedChain, tol=1e-10, max_iter=1_000_000, check_every=50):
    """Stationary vector of the truncated chain by uniformization.

    Power iteration on ``P = I + Q / L`` with ``L`` the largest exit rate.
    Stops once ``||pi Q||_inf < tol``.

    Raises
    ------
    Reducible
        If some retained state cannot reach, or be reached from, the empty state.
    NotConverged
        If ``max_iter`` iterations do not bring the residual below ``tol``.
    """
    Q = chain.generator
    m = Q.shape[0]
    if m == 1:
        return np.ones(1)
    off = Q - sp.diags(Q.diagonal())
    off = off.tocsr()
    off.eliminate_zeros()
    if not _reachable(off).all() or not _reachable(off.T.tocsr()).all():
        raise Reducible("truncated chain is not irreducible on its retained states")
    L = float(np.max(-Q.diagonal()))
    P = (sp.identity(m, format="csr") + Q / L).T.tocsr()
    QT = Q.T.tocsr()
    pi = np.full(m, 1.0 / m)
    residual = math.inf
    for it in range(1, max_iter + 1):
        pi = P @ pi
        if it % check_every == 0:
            pi /= pi.sum()
            residual = float(np.max(np.abs(QT @ pi)))
            if residual < tol:
                pi = np.clip(pi, 0.0, None)
                return pi / pi.sum()
    raise NotConverged(max_iter, residual)


def chain_metrics(chain: TruncatedChain, pi, config: SystemConfig | None = None) -> MetricsReport:
    """Exact long-run averages under the stationary vector ``pi``."""
    config = config or chain.config
    n = config.n
    R = np.array([sum(z.y) for z in chain.states], dtype=float)
    Mh = np.array([sum(z.h) for z in chain.states], dtype=float)
    M = np.array(
        [sum(N for N, yi in zip(stage_servers(z.y, n), z.y) if yi > 0) for z in chain.states],
        dtype=float,
    )
    r, m, mh = float(pi @ R), float(pi @ M), float(pi @ Mh)
    P0, P1 = power_levels(config.power, config.mu0, config.mu1)
    soj = r / config.lam if config.lam > 0 else 0.0
    return MetricsReport(
        mean_queries=Estimate(r),
        mean_active=Estimate(m),
        mean_high_rate=Estimate(mh),
        mean_power=Estimate(P0 * (m - mh) + P1 * mh),
        mean_sojourn=Estimate(soj),
        horizon=math.inf,
    )


def dump_edge_list(chain: TruncatedChain, edges_path, states_path):
    """Write ``src dst rate`` lines and an ``index y h`` state table."""
    Q = chain.generator.tocoo()
    with open(edges_path, "w") as fh:
        for s, d, r in sorted(zip(Q.row.tolist(), Q.col.tolist(), Q.data.tolist())):
            if s != d:
                fh.write(f"{s} {d} {r:.17g}\n")
    with open(states_path, "w") as fh:
        for i, z in enumerate(chain.states):
            fh.write(f"{i} {','.join(map(str, z.y))} {','.join(map(str, z.h))}\n")
