import math
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluidcc import (ConfigError, DomainError, LossModel, ModelParams, NoEquilibrium,
                     equilibrium_rate, rate_derivative, window_derivative)

# brute-force scan of g over 10^6 grid points, bracket refined with scipy's brentq
EQUILIBRIUM_ORACLE = {
    ("finite", 10.0, 10): 8.023270265129774,
    ("finite", 10.0, 5): 6.814552765959093,
    ("finite", 5.0, 10): 4.4188059972043146,
    ("infinite", 10.0, 10): 9.711432939175925,
    ("infinite", 10.0, 5): 8.377528814156785,
}


def params(variant="finite", C=10.0, B=10, T=0.5, **kw):
    kw.setdefault("initial_rate_x0", min(1.0, C))
    return ModelParams(LossModel(variant, C, B), T, **kw)


def test_window_derivative_loss_free():
    assert window_derivative(params(), 7.0, 0.0) == 1 / 0.5


def test_window_derivative_full_loss():
    assert window_derivative(params(), 5.0, 10.0) == pytest.approx(-25.0)


def test_window_derivative_two_terms():
    # (1 - 0.03125)/0.5 - 5*0.03125*2/2 = 1.9375 - 0.15625
    assert window_derivative(params(B=5), 2.0, 5.0) == pytest.approx(1.78125, abs=1e-12)


@pytest.mark.parametrize("x_now", [0.0, 3.0, 10.0])
def test_rate_derivative_loss_free(x_now):
    assert rate_derivative(params(), x_now, 0.0) == 1 / 0.25


def test_rate_derivative_two_terms():
    # p = 0.8^10 = 0.1073741824; (1-p)/0.25 - 8*p*4/2
    assert rate_derivative(params(), 4.0, 8.0) == pytest.approx(1.852516352, abs=1e-9)


@pytest.mark.parametrize("key", sorted(EQUILIBRIUM_ORACLE))
def test_equilibrium_matches_brute_force(key):
    variant, C, B = key
    x_s = equilibrium_rate(LossModel(variant, C, B), 0.5)
    assert x_s == pytest.approx(EQUILIBRIUM_ORACLE[key], abs=1e-9)
    p = LossModel(variant, C, B).probability(x_s)
    assert abs(x_s - math.sqrt(2 * (1 - p) / p) / 0.5) < 1e-9
    assert abs(rate_derivative(params(variant, C, B), x_s, x_s)) < 1e-9


def test_equilibrium_absent_when_fixed_point_exceeds_capacity():
    with pytest.raises(NoEquilibrium):
        equilibrium_rate(LossModel("infinite", 5.0, 10), 0.5)


@dataclass
class AlwaysLose:
    capacity_C: float = 10.0

    def probability(self, rate_x):
        return 1.0


def test_equilibrium_with_certain_loss_is_boundary():
    with pytest.raises(NoEquilibrium):
        equilibrium_rate(AlwaysLose(), 0.5)


@pytest.mark.parametrize("variant,C,B", [("finite", 10.0, 10), ("finite", 10.0, 5),
                                          ("finite", 5.0, 10), ("infinite", 10.0, 10)])
def test_equilibrium_decreases_when_rtt_doubles(variant, C, B):
    loss = LossModel(variant, C, B)
    assert equilibrium_rate(loss, 1.0) < equilibrium_rate(loss, 0.5)


def test_equilibrium_rejects_bad_rtt():
    with pytest.raises(ConfigError):
        equilibrium_rate(LossModel("finite", 10, 10), 0.0)


@settings(max_examples=200, deadline=None)
@given(variant=st.sampled_from(["finite", "infinite"]),
       C=st.floats(0.5, 100), B=st.integers(1, 50), T=st.floats(0.01, 2.0),
       a=st.floats(0, 1), b=st.floats(0, 1))
def test_rate_form_is_window_form_over_T(variant, C, B, T, a, b):
    pr = params(variant, C, B, T)
    x, xd = a * C, b * C
    assert rate_derivative(pr, x, xd) == pytest.approx(
        window_derivative(pr, x * T, xd) / T, rel=1e-12, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(C=st.floats(0.5, 100), B=st.integers(1, 50), T=st.floats(0.01, 2.0),
       a=st.floats(0, 1))
def test_sign_structure(C, B, T, a):
    pr = params("finite", C, B, T)
    assert rate_derivative(pr, a * C, 0.0) > 0
    x_now = 2 / (T * T * C) * (1 + a) + 1e-9
    assert rate_derivative(pr, x_now, C) < 0


@pytest.mark.parametrize("fn", [rate_derivative, window_derivative])
def test_negative_inputs_are_domain_errors(fn):
    with pytest.raises(DomainError):
        fn(params(), -1.0, 1.0)
    with pytest.raises(DomainError):
        fn(params(), 1.0, -1.0)


@pytest.mark.parametrize("kw", [
    dict(T=0.0), dict(T=-1.0), dict(T=0.5, step_dt=0.0), dict(T=0.5, horizon=0.001),
    dict(T=0.5, initial_rate_x0=0.0), dict(T=0.5, initial_rate_x0=11.0),
])
def test_model_params_invariants(kw):
    T = kw.pop("T")
    with pytest.raises(ConfigError):
        params(T=T, **kw)


def test_default_step_is_rtt_over_64():
    assert params().step_dt == 0.5 / 64
    assert params().delay_steps == 64


@pytest.mark.parametrize("dt", [0.5 / 3, 0.3, 0.5 / 2.5])
def test_delay_must_be_integer_multiple_of_step(dt):
    with pytest.raises(ConfigError):
        params(step_dt=dt).delay_steps


def test_grid_size_limit():
    with pytest.raises(ConfigError):
        params(step_dt=1e-6, T=1e-4 * 4 / 100, horizon=1e3).n_steps


def test_brute_force_oracle_is_self_consistent():
    # re-derive one oracle value with a fresh grid scan so the frozen table stays honest
    x = np.linspace(1e-5, 10.0, 10**6)
    p = (x / 10.0) ** 10
    g = x - np.sqrt(2 * (1 - p) / p) / 0.5
    i = int(np.flatnonzero(np.sign(g[1:]) != np.sign(g[:-1]))[0])
    assert x[i] <= EQUILIBRIUM_ORACLE[("finite", 10.0, 10)] <= x[i + 1]
