import json

import pytest
from hypothesis import given, strategies as st

from forkjoin.errors import InvalidParameter
from forkjoin.model import (FullState, PowerModel, SystemConfig, TandemOccupancy, fmt,
                            reference_config, power_levels, stage_servers, validate)


def test_reference_config_values():
    c = reference_config()
    assert (c.n, c.k, c.mu1) == (20, 18, 0.9)
    assert c.mu0 == pytest.approx(0.54)
    assert power_levels(c.power, c.mu0, c.mu1) == pytest.approx((0.54**2, 0.81))


@pytest.mark.parametrize("changes, name", [
    (dict(k=0), "k"),
    (dict(k=21), "k"),
    (dict(p=1.5), "p"),
    (dict(p=-0.1), "p"),
    (dict(lam=-1.0), "lambda"),
    (dict(mu0=0.0), "mu0"),
    (dict(mu0=1.0), "mu0"),
])
def test_validate_rejects(changes, name):
    with pytest.raises(InvalidParameter) as exc:
        validate(reference_config().replace(**changes))
    assert name in str(exc.value)


def test_k_above_n_message():
    with pytest.raises(InvalidParameter, match="k ≤ n violated"):
        validate(SystemConfig(n=2, k=3, lam=0.1, mu0=0.5, mu1=1.0, p=0.5))


@given(
    n=st.integers(1, 40),
    data=st.data(),
    lam=st.floats(0, 5, allow_nan=False),
    mu1=st.floats(0.01, 10),
    frac=st.floats(0.01, 1.0),
    p=st.floats(0, 1),
)
def test_json_round_trip(n, data, lam, mu1, frac, p):
    k = data.draw(st.integers(1, n))
    c = SystemConfig(n=n, k=k, lam=lam, mu0=mu1 * frac, mu1=mu1, p=p)
    assert SystemConfig.from_json(c.to_json()) == c


def test_unknown_and_malformed_config():
    d = reference_config().to_dict()
    d["speed"] = 1
    with pytest.raises(InvalidParameter):
        SystemConfig.from_dict(d)
    with pytest.raises(InvalidParameter, match="malformed JSON"):
        SystemConfig.from_json("{not json")


def test_power_model_parse():
    assert PowerModel.parse("quadratic:1") == PowerModel.quadratic(1.0)
    e = PowerModel.parse("explicit:0.2,0.9")
    assert power_levels(e, 0.5, 1.0) == (0.2, 0.9)
    with pytest.raises(InvalidParameter):
        PowerModel.parse("cubic:2")


def test_stage_servers_recursion():
    # idle downstream capacity pools upward
    assert tuple(stage_servers((0, 0, 0), 5)) == (5, 4, 3)
    assert tuple(stage_servers((1, 1, 1), 5)) == (1, 1, 3)
    assert tuple(stage_servers((2, 0, 1), 5)) == (2, 1, 3)
    assert tuple(stage_servers((0, 3, 0), 5)) == (1, 4, 3)


def test_full_state_invariants():
    FullState((1, 0), (1, 0), n=3)
    with pytest.raises(InvalidParameter):
        FullState((0, 1), (1, 0))          # h on an empty stage
    with pytest.raises(InvalidParameter):
        FullState((1, 0), (4, 0), n=3)     # more high servers than pooled ones
    with pytest.raises(InvalidParameter):
        TandemOccupancy((1, -1))


def test_fmt():
    assert fmt(2.961862329412) == "2.96186232941"
    assert fmt(True) == "true"
    assert fmt(None) == ""
    assert fmt(3) == "3"
    assert json.loads(reference_config().to_json())["lambda"] == 0.5
