"""Acceptance criteria, one test each.

Every test records a single ``[PASS]``/``[FAIL]`` line (shown in the pytest
terminal summary, or printed directly when this file is run as a script) and
then asserts the criterion exactly as stated.  Nothing is loosened: a
criterion that the implementation cannot meet fails with its measured numbers.

Run with ``pytest tests/test_acceptance.py`` (about two minutes with the
compiled kernels).
"""
import functools
import math
import random
from collections import defaultdict

import pytest

from forkjoin import approx, ctmc
from forkjoin.cli import main
from forkjoin.model import SystemConfig, reference_config, stage_servers, FullState
from forkjoin.optimizer import SlaQuery, min_power_for_sla
from forkjoin.sim import SimSettings, simulate_ctmc, simulate_des

from conftest import ACCEPTANCE_LINES, find_series, point_at

SIMULATORS = {"des": simulate_des, "ctmc": simulate_ctmc}


def record(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number} ({title}): {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


@functools.lru_cache(maxsize=None)
def long_run(kind, p, lam, horizon=1e6, replications=5, seed=20240601):
    return SIMULATORS[kind](reference_config(p=p, lam=lam),
                            SimSettings(horizon=horizon, seed=seed, replications=replications))


# 1 ---------------------------------------------------------------------------

def test_criterion_1_closed_form_fidelity():
    targets = [
        ("R(p=0.3,lam=0.11)", approx.mean_queries, 0.3, 0.11, 0.427986),
        ("R(p=0.6,lam=0.5)", approx.mean_queries, 0.6, 0.5, 2.961862),
        ("Mh(p=0.6,lam=0.5)", approx.mean_high_rate_servers, 0.6, 0.5, 7.587295),
        ("P(p=0.6,lam=0.5)", approx.mean_power, 0.6, 0.5, 7.620679),
        ("P(p=1,lam=0.5)", approx.mean_power, 1.0, 0.5, 8.120012),
    ]
    parts, ok = [], True
    for name, f, p, lam, want in targets:
        got = f(reference_config(p=p, lam=lam))
        good = abs(got - want) <= 1e-5
        ok &= good
        parts.append(f"{name}={got:.6f} (target {want}, {'ok' if good else 'off'})")
    record(1, "closed-form fidelity", ok, "; ".join(parts))
    assert ok


# 2 ---------------------------------------------------------------------------

def test_criterion_2_simulation_fidelity(figure_series):
    parts, ok = [], True
    for p in (0.3, 0.6):
        R_ref = find_series(figure_series, "lambda", "R", "sim", p=p)
        Mh_ref = find_series(figure_series, "lambda", "Mh", "sim", p=p)
        for lam in (0.2, 0.5):
            for kind in SIMULATORS:
                r = long_run(kind, p, lam)
                for label, est, ref in (("R", r.mean_queries.mean, point_at(R_ref, lam)),
                                        ("Mh", r.mean_high_rate.mean, point_at(Mh_ref, lam))):
                    rel = abs(est - ref) / ref
                    good = rel <= 0.05
                    ok &= good
                    if not good:
                        parts.append(f"{kind} {label}(p={p},lam={lam})={est:.4f} vs {ref:.4f} "
                                     f"({rel:+.1%})".replace("+", ""))
    detail = "all 16 comparisons within 5%" if ok else "outside 5%: " + "; ".join(parts)
    record(2, "simulation fidelity", ok, detail)
    assert ok


# 3 ---------------------------------------------------------------------------

def test_criterion_3_approximation_tightness():
    worst, where = 0.0, None
    for lam in (0.11, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7):
        sim = long_run("des", 0.6, lam).mean_queries.mean
        rel = abs(approx.mean_queries(reference_config(p=0.6, lam=lam)) - sim) / sim
        if rel > worst:
            worst, where = rel, lam
    ok = worst < 0.15
    record(3, "approximation tightness", ok,
           f"max |approx-sim|/sim for R at p=0.6, lam<=0.7 is {worst:.1%} (at lam={where})")
    assert ok


# 4 ---------------------------------------------------------------------------

def test_criterion_4_oracle_triangle():
    parts, ok = [], True
    for n, k in ((2, 1), (3, 2)):
        c = SystemConfig(n=n, k=k, lam=0.0, mu0=0.54, mu1=0.9, p=0.5)
        c = c.replace(lam=0.5 * approx.stability_region(c)[1])
        R_trunc = {}
        for y_max in (40, 60):
            chain = ctmc.build_truncated_chain(c, y_max=y_max)
            exact = ctmc.chain_metrics(chain, ctmc.stationary_distribution(chain, tol=1e-13))
            R_trunc[y_max] = exact.mean_queries.mean
        gap = abs(R_trunc[60] - R_trunc[40])
        if gap >= 1e-8:
            ok = False
            parts.append(f"({n},{k}) truncation gap {gap:.1e}")
        s = SimSettings(horizon=1e6, seed=20240602, replications=5)
        for kind, f in SIMULATORS.items():
            r = f(c, s)
            for label, attr in (("R", "mean_queries"), ("M", "mean_active"),
                                ("Mh", "mean_high_rate"), ("P", "mean_power")):
                est, ref = getattr(r, attr), getattr(exact, attr).mean
                if abs(est.mean - ref) > est.ci:
                    ok = False
                    parts.append(f"({n},{k}) {kind} {label} {est.mean:.4f}±{est.ci:.4f} "
                                 f"vs solver {ref:.4f}")
    detail = "solver, both simulators and truncation agree" if ok else "; ".join(parts)
    record(4, "oracle triangle", ok, detail)
    assert ok


# 5 ---------------------------------------------------------------------------

def test_criterion_5_reduction_properties():
    rng = random.Random(5)
    worst = 0.0
    for _ in range(1000):
        n = rng.randint(1, 8)
        k = rng.randint(1, n)
        mu, lam, p = rng.uniform(0.1, 2.0), rng.uniform(0.0, 2.0), rng.random()
        c = SystemConfig(n=n, k=k, lam=lam, mu0=mu, mu1=mu, p=p)
        y = tuple(rng.randint(0, 4) for _ in range(k))
        N = stage_servers(y, n)
        z = FullState(y, tuple(rng.randint(0, N[i]) if y[i] else 0 for i in range(k)), n)
        marg = defaultdict(float)
        for t in ctmc.enumerate_transitions(z, c).transitions:
            marg[t.target.y] += t.rate
        ref = ctmc.single_rate_rates(y, n, mu, lam)
        if set(marg) != set(ref):
            worst = math.inf
            break
        worst = max(worst, max(abs(marg[y2] - r) / r for y2, r in ref.items()) if ref else 0.0)
    mm1 = 0.0
    for n, mu, lam in ((1, 1.0, 0.5), (4, 0.54, 1.5), (6, 0.9, 2.7)):
        c = SystemConfig(n=n, k=1, lam=lam, mu0=mu, mu1=mu, p=0.5)
        chain = ctmc.build_truncated_chain(c, y_max=120)
        m = ctmc.chain_metrics(chain, ctmc.stationary_distribution(chain, tol=1e-14))
        rho = lam / (n * mu)
        mm1 = max(mm1, abs(m.mean_queries.mean - rho / (1 - rho)),
                  abs(m.mean_sojourn.mean - 1 / (n * mu - lam)))
    ok = worst <= 1e-12 and mm1 <= 1e-10
    record(5, "reduction properties", ok,
           f"max rel. rate error over 1000 states {worst:.1e}; (n,1) vs M/M/1 max abs error {mm1:.1e}")
    assert ok


# 6 ---------------------------------------------------------------------------

def test_criterion_6_statistical_identities():
    parts, ok = [], True
    for kind in SIMULATORS:
        r = long_run(kind, 0.6, 0.5)
        little = max(x.little_residual for x in r.replications)
        ratio = r.mean_high_rate.mean / r.mean_active.mean
        ratio_dev = abs(ratio - 0.6) / 0.6
        sigma = math.sqrt(0.6 * 0.4 / r.service_starts)
        z = abs(r.high_start_fraction - 0.6) / sigma
        good = little <= 0.02 and ratio_dev <= 0.02 and z <= 3
        ok &= good
        parts.append(f"{kind}: Little {little:.2%}, Mh/M={ratio:.4f} ({ratio_dev:.1%} from p), "
                     f"high-start fraction {r.high_start_fraction:.5f} ({z:.1f} sigma)")
    record(6, "statistical identities", ok, "; ".join(parts))
    assert ok


# 7 ---------------------------------------------------------------------------

def test_criterion_7_stability_boundary():
    lm1 = approx.stability_region(reference_config(p=1.0))[1]
    lm0 = approx.stability_region(reference_config(p=0.0))[1]
    ok = abs(lm1 - 1.0) < 1e-12 and abs(lm0 - 0.6) < 1e-12
    parts = [f"lambda_max(p=1)={lm1:.12g}, lambda_max(p=0)={lm0:.12g}"]
    for kind, f in SIMULATORS.items():
        for p in (0.6, 1.0):
            lam = 1.05 * approx.stability_region(reference_config(p=p))[1]
            r = f(reference_config(p=p, lam=lam), SimSettings(horizon=1e5, seed=7, replications=3))
            q = [sum(x.quarter_R[j] for x in r.replications) / 3 for j in range(4)]
            good = q[3] > 2 * q[0] and r.nonstationary
            ok &= good
            parts.append(f"{kind} p={p}: quarter means {q[0]:.0f} -> {q[3]:.0f}")
    record(7, "stability boundary", ok, "; ".join(parts))
    assert ok


# 8 ---------------------------------------------------------------------------

def test_criterion_8_optimizer(capsys):
    c = reference_config()
    res = min_power_for_sla(c, SlaQuery(lam=0.5, R_max=3.0))
    R = approx.mean_queries(c.replace(p=res.p_star))
    cert = approx.mean_queries(c.replace(p=res.p_star - 1e-6)) > 3.0 >= R
    code = main(["optimize", "--lambda", "0.5", "--max-queries", "0.1"])
    capsys.readouterr()
    ok = 0.5 < res.p_star < 0.6 and 3.0 - 1e-4 <= R <= 3.0 and cert and code == 3
    record(8, "optimizer", ok, f"p_star={res.p_star:.7f}, R(p_star)={R:.7f}, certificate "
           f"{'holds' if cert else 'broken'}, infeasible SLA exit code {code}")
    assert ok


# 9 ---------------------------------------------------------------------------

def test_criterion_9_determinism(tmp_path, capsys):
    commands = {
        "approx": ["approx", "--p", "0.6", "--lambda", "0.5"],
        "simulate": ["simulate", "--lambda", "0.5", "--horizon", "5000", "--replications", "3",
                     "--seed", "42", "--threads", "2", "--events"],
        "simulate-ctmc": ["simulate", "--mode", "ctmc", "--lambda", "0.3", "--horizon", "5000",
                          "--replications", "2", "--seed", "7"],
        "sweep": ["sweep", "--var", "lambda", "--start", "0.1", "--stop", "0.3", "--step", "0.1",
                  "--sim", "--horizon", "2000", "--replications", "2"],
        "optimize": ["optimize", "--lambda", "0.5", "--max-queries", "3.0"],
        "validate": ["validate", "--horizon", "5000"],
    }
    mismatched = []
    for name, argv in commands.items():
        a, b = tmp_path / name / "a", tmp_path / name / "b"
        main(argv + ["--out", str(a)])
        main(["replay", str(a / "manifest.json"), "--out", str(b)])
        files_a = sorted(f.relative_to(a) for f in a.rglob("*") if f.is_file())
        files_b = sorted(f.relative_to(b) for f in b.rglob("*") if f.is_file())
        if files_a != files_b or any((a / f).read_bytes() != (b / f).read_bytes() for f in files_a):
            mismatched.append(name)
    capsys.readouterr()
    ok = not mismatched
    record(9, "determinism", ok, f"{len(commands)} commands replayed from manifests; "
           + ("all outputs bit-identical" if ok else f"differences in {mismatched}"))
    assert ok


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
