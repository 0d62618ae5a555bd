import math

import numpy as np
import pytest
from scipy import stats

from forkjoin import approx, ctmc
from forkjoin.errors import InvalidParameter, NoCompletions
from forkjoin.model import SystemConfig, reference_config
from forkjoin.sim import (EventLog, SimSettings, _pykernels, available_backends, default_backend,
                          estimate_sojourn, replication_seeds, simulate, simulate_ctmc,
                          simulate_des)

compiled_only = pytest.mark.skipif("compiled" not in available_backends(),
                                   reason="compiled kernels not built")




def test_settings_validation():
    assert SimSettings(horizon=100.0).effective_warmup == 10.0
    for bad in (dict(horizon=0.0), dict(horizon=10.0, warmup=10.0), dict(replications=0),
                dict(mode="gillespie"), dict(seed=-1)):
        with pytest.raises(InvalidParameter):
            SimSettings(**bad)


def test_replication_seeds_are_stable_and_distinct():
    a = replication_seeds(42, 5)
    assert a == replication_seeds(42, 5)
    assert len(set(a)) == 5
    assert a[:3] == replication_seeds(42, 3)


@compiled_only
@pytest.mark.parametrize("mode", ["server_des", "ctmc_trajectory"])
@pytest.mark.parametrize("n, k, lam, p", [(20, 18, 0.5, 0.6), (3, 2, 0.6, 0.3), (4, 4, 0.1, 1.0),
                                          (2, 1, 0.0, 0.5), (5, 3, 1.2, 0.0)])
def test_backends_are_bit_identical(mode, n, k, lam, p):
    c = SystemConfig(n=n, k=k, lam=lam, mu0=0.54, mu1=0.9, p=p)
    s = SimSettings(horizon=3000.0, seed=11, replications=2, mode=mode)
    a = simulate(c, s, backend="compiled", record=True)
    b = simulate(c, s, backend="python", record=True)
    for ra, rb in zip(a.replications, b.replications):
        assert ra == rb
        assert np.array_equal(ra.events.arrival, rb.events.arrival)
        assert np.array_equal(ra.events.departure, rb.events.departure)


def test_results_do_not_depend_on_threads():
    c = reference_config()
    s = SimSettings(horizon=5000.0, seed=3, replications=4)
    assert simulate_des(c, s, threads=1) == simulate_des(c, s, threads=3)


def test_lambda_zero_gives_zero_metrics():
    for f in (simulate_des, simulate_ctmc):
        r = f(reference_config(lam=0.0), SimSettings(horizon=1000.0, replications=2))
        for est in (r.mean_queries, r.mean_active, r.mean_high_rate, r.mean_power, r.mean_sojourn):
            assert est.mean == 0.0


def test_two_servers_one_needed_is_mm1():
    """(2,1) at p=1: both copies race, so the system is M/M/1 with rate 2*mu1."""
    lam, mu = 0.8, 0.9
    c = SystemConfig(n=2, k=1, lam=lam, mu0=0.54, mu1=mu, p=1.0)
    r = simulate_des(c, SimSettings(horizon=2e5, seed=5, replications=10))
    rho = lam / (2 * mu)
    q = stats.t.ppf(0.9995, 9)
    assert abs(r.mean_queries.mean - rho / (1 - rho)) <= q * r.mean_queries.se
    assert abs(r.mean_active.mean - 2 * rho) <= q * r.mean_active.se
    assert r.mean_high_rate.mean == r.mean_active.mean


def test_trajectory_sampler_matches_solver():
    c = SystemConfig(n=3, k=2, lam=0.0, mu0=0.54, mu1=0.9, p=0.5)
    c = c.replace(lam=0.5 * approx.stability_region(c)[1])
    chain = ctmc.build_truncated_chain(c, y_max=30)
    exact = ctmc.chain_metrics(chain, ctmc.stationary_distribution(chain, tol=1e-12))
    r = simulate_ctmc(c, SimSettings(horizon=2e5, seed=9, replications=20))
    q = stats.t.ppf(0.9995, 19)
    for attr in ("mean_queries", "mean_active", "mean_high_rate", "mean_power"):
        est, ref = getattr(r, attr), getattr(exact, attr).mean
        assert abs(est.mean - ref) <= q * est.se, attr


def test_simulators_agree_when_rates_are_equal():
    """With mu0 == mu1 rate classes cannot influence the dynamics."""
    c = SystemConfig(n=4, k=3, lam=0.7, mu0=0.8, mu1=0.8, p=0.5)
    s = SimSettings(horizon=2e5, seed=21, replications=10)
    d, t = simulate_des(c, s), simulate_ctmc(c, s)
    q = stats.t.ppf(0.9995, 9)
    for attr in ("mean_queries", "mean_active"):
        a, b = getattr(d, attr), getattr(t, attr)
        assert abs(a.mean - b.mean) <= q * math.hypot(a.se, b.se), attr
    # in the server-level model each busy server is high-rate with probability p
    ratio = d.mean_high_rate.mean / d.mean_active.mean
    assert ratio == pytest.approx(0.5, abs=0.01)


@pytest.mark.parametrize("mode", ["server_des", "ctmc_trajectory"])
def test_statistical_identities(mode):
    c = reference_config(p=0.6, lam=0.4)
    r = simulate(c, SimSettings(horizon=1e5, seed=8, replications=4, mode=mode))
    assert max(x.little_residual for x in r.replications) <= 0.02
    sigma = math.sqrt(0.6 * 0.4 / r.service_starts)
    assert abs(r.high_start_fraction - 0.6) <= 3 * sigma
    assert not r.nonstationary


def test_overload_is_flagged():
    c = reference_config(p=1.0, lam=1.05)
    r = simulate_des(c, SimSettings(horizon=2e4, seed=1, replications=2))
    assert r.nonstationary


def test_power_estimate_is_linear(eval_config):
    r = simulate_des(eval_config, SimSettings(horizon=5000.0, replications=2))
    P0, P1 = 0.54**2, 0.81
    for x in r.replications:
        assert x.P == pytest.approx(P0 * (x.M - x.Mh) + P1 * x.Mh)


def test_estimate_sojourn_from_event_log(tmp_path):
    c = reference_config(p=0.6, lam=0.3)
    r = simulate_des(c, SimSettings(horizon=5e4, seed=2, replications=1), record=True)
    rep = r.replications[0]
    est = estimate_sojourn(rep.events, mean_queries=rep.R)
    assert est.mean == pytest.approx(rep.sojourn, rel=1e-12)
    assert est.count == rep.completed
    assert est.ci > 0 and est.little_residual <= 0.02
    path = tmp_path / "events.csv"
    rep.events.write_csv(path)
    again = EventLog.read_csv(path, lam=0.3)
    assert np.array_equal(again.arrival, rep.events.arrival)


def test_estimate_sojourn_requires_completions():
    with pytest.raises(NoCompletions):
        estimate_sojourn(EventLog(np.empty(0), np.empty(0), 0.1))


def test_python_kernel_runs_directly():
    g = [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(0).spawn(3)]
    out = _pykernels.run_des(2, 1, 0.3, 0.54, 0.9, 0.5, 100.0, 10.0, g[0], g[1:])
    assert out["departures"] <= out["arrivals"]


def test_backend_override(monkeypatch):
    monkeypatch.setenv("FORKJOIN_BACKEND", "python")
    assert default_backend() == "python"
    monkeypatch.delenv("FORKJOIN_BACKEND")
    assert default_backend() == available_backends()[0]
