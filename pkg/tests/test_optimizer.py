import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from forkjoin import approx
from forkjoin.errors import Infeasible, InvalidParameter, SlaInfeasible
from forkjoin.model import reference_config
from forkjoin.optimizer import (SlaQuery, feasible_p_threshold, min_power_for_sla,
                                tradeoff_curve)


def test_threshold_examples():
    c = reference_config()
    assert feasible_p_threshold(c, 0.5) == 0.0
    p = feasible_p_threshold(c, 0.8)
    # 0.6 / (1 - 0.4 p) = 0.8
    assert p == pytest.approx(0.625, abs=1e-12)
    assert 20 / 18 * approx.mean_service_rate(p, c.mu0, c.mu1) == pytest.approx(0.8)
    with pytest.raises(Infeasible):
        feasible_p_threshold(c, 1.1)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.6, 0.999))
def test_threshold_is_the_stability_boundary(lam):
    c = reference_config(lam=lam)
    p = feasible_p_threshold(c)
    assert not approx.stability_region(c.replace(p=max(p - 1e-9, 0.0)))[0]
    assert approx.stability_region(c.replace(p=min(p + 1e-9, 1.0)))[0]


def test_tradeoff_curve_flags_and_values():
    pts = tradeoff_curve(reference_config(), 0.5, [0.0, 0.05, 0.6, 1.0])
    assert all(pt.stable for pt in pts)
    assert pts[2].R == pytest.approx(2.961862, abs=1e-6)
    assert pts[3].R == pytest.approx(1.905600, abs=1e-6)
    assert all(pt.stable is False and pt.R is None
               for pt in tradeoff_curve(reference_config(), 1.2, [0.0, 0.5, 1.0]))


def test_tradeoff_mean_queries_strictly_decrease():
    pts = tradeoff_curve(reference_config(), 0.7, np.linspace(0, 1, 101))
    R = [pt.R for pt in pts if pt.stable]
    assert len(R) > 10 and all(a > b for a, b in zip(R, R[1:]))


def test_sla_binding_root():
    c = reference_config()
    res = min_power_for_sla(c, SlaQuery(lam=0.5, R_max=3.0))
    assert 0.5 < res.p_star < 0.6
    R = approx.mean_queries(c.replace(p=res.p_star))
    assert 3.0 - 1e-4 <= R <= 3.0
    # bisection certificate
    assert approx.mean_queries(c.replace(p=res.p_star - 1e-6)) > 3.0
    assert res.binding
    assert res.to_dict()["p_star"] == res.p_star


def test_sojourn_bound_is_converted_with_little():
    c = reference_config()
    a = min_power_for_sla(c, SlaQuery(lam=0.5, R_max=3.0))
    b = min_power_for_sla(c, SlaQuery(lam=0.5, T_max=6.0))
    assert a.p_star == b.p_star


def test_unconstrained_minimum_on_grid():
    res = min_power_for_sla(reference_config(), SlaQuery(lam=0.5, R_max=math.inf))
    grid = np.linspace(0, 1, 101)
    best = min(pt.P for pt in tradeoff_curve(reference_config(), 0.5, grid) if pt.stable)
    assert res.point.P <= best + 1e-12
    assert not res.binding


def test_sla_rejections():
    with pytest.raises(SlaInfeasible) as exc:
        min_power_for_sla(reference_config(), SlaQuery(lam=0.5, R_max=0.1))
    assert exc.value.best_value == pytest.approx(1.905600, abs=1e-6)
    with pytest.raises(Infeasible):
        min_power_for_sla(reference_config(), SlaQuery(lam=1.2, R_max=10.0))
    with pytest.raises(InvalidParameter):
        SlaQuery(lam=0.5, R_max=1.0, T_max=2.0)
    with pytest.raises(InvalidParameter):
        SlaQuery(lam=0.5, R_max=1.0, p_grid_step=0.5)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 0.95), st.floats(1.0, 40.0))
def test_sla_answer_is_feasible(lam, R_max):
    c = reference_config(lam=lam)
    q = SlaQuery(lam=lam, R_max=R_max)
    try:
        res = min_power_for_sla(c, q)
    except SlaInfeasible:
        assert approx.mean_queries(c.replace(p=1.0)) > R_max
        return
    assert res.point.stable and res.point.R <= R_max + 1e-9
    assert res.p_star >= res.p_sla - 1e-12
