import math
from dataclasses import replace

import numpy as np
import pytest

from fluidcc import (ConfigError, LossModel, ModelParams, equilibrium_rate, integrate,
                     rate_derivative)
from fluidcc.integrator import hermite


def row_params(C=10.0, B=10, variant="finite", **kw):
    return ModelParams(LossModel(variant, C, B), 0.5, **kw)


def closed_form_first_rtt(params, t):
    """Solution of dx/dt = a - b x with the delayed rate frozen at x0."""
    x0 = params.initial_rate_x0
    p = params.loss.probability(x0)
    T = params.rtt_T
    a = (1 - p) / T**2
    b = x0 * p / 2
    if b == 0:
        return x0 + a * t
    return x0 * np.exp(-b * t) + a * (-np.expm1(-b * t)) / b


def test_grid_is_uniform(row1_trajectory):
    tr = row1_trajectory
    dt = tr.params.step_dt
    assert tr.times[0] == 0.0
    assert np.allclose(np.diff(tr.times), dt, rtol=0, atol=1e-12)
    assert tr.times[-1] == pytest.approx(tr.params.horizon)
    assert len(tr.rates) == len(tr.derivatives) == len(tr.times)


def test_rates_stay_in_domain(table_row):
    C, B = table_row
    for variant in ("finite", "infinite"):
        tr = integrate(row_params(C, B, variant))
        assert tr.rates.min() >= 0.0
        assert tr.rates.max() <= C


def test_stored_derivatives_match_rhs(row1_trajectory):
    tr = row1_trajectory
    for i in range(len(tr)):
        expected = rate_derivative(tr.params, float(tr.rates[i]), tr.delayed_rate_at_index(i))
        assert abs(tr.derivatives[i] - expected) <= 1e-12


def test_deterministic(table_row):
    C, B = table_row
    a = integrate(row_params(C, B))
    b = integrate(row_params(C, B))
    assert a.rates.tobytes() == b.rates.tobytes()
    assert a.derivatives.tobytes() == b.derivatives.tobytes()


@pytest.mark.parametrize("x0", [1.0, 3.0, 9.5])
def test_first_rtt_matches_closed_form(table_row, x0):
    C, B = table_row
    params = row_params(C, B, initial_rate_x0=min(x0, C))
    tr = integrate(params)
    k = params.delay_steps
    exact = closed_form_first_rtt(params, tr.times[:k + 1])
    assert np.max(np.abs(tr.rates[:k + 1] - exact)) < 1e-6


def test_delayed_argument_is_history_before_T(row1_trajectory):
    tr = row1_trajectory
    k = tr.params.delay_steps
    for i in range(k + 1):
        assert tr.delayed_rate_at_index(i) == tr.params.initial_rate_x0
    for t in np.linspace(0, tr.params.rtt_T, 37):
        assert tr.delayed_rate_at(float(t)) == tr.params.initial_rate_x0


def test_self_convergence_order():
    runs = {k: integrate(row_params(step_dt=0.5 / k)) for k in (16, 32, 64)}
    e1 = np.max(np.abs(runs[16].rates - runs[32].rates[::2]))
    e2 = np.max(np.abs(runs[32].rates - runs[64].rates[::2]))
    assert e1 / e2 >= 4.0
    assert math.log2(e1 / e2) >= 2.0


@pytest.mark.parametrize("variant", ["finite", "infinite"])
def test_equilibrium_history_is_a_fixed_point(variant):
    loss = LossModel(variant, 10.0, 10)
    x_s = equilibrium_rate(loss, 0.5)
    tr = integrate(ModelParams(loss, 0.5, initial_rate_x0=x_s, horizon=20.0))
    assert np.max(np.abs(tr.rates - x_s)) < 1e-6


def test_row1_oscillates():
    tr = integrate(row_params())
    d = tr.derivatives
    changes = np.count_nonzero(np.sign(d[1:]) != np.sign(d[:-1]))
    assert changes >= 4
    assert 8.0 < tr.rates.max() < 10.0


def test_short_horizon_stays_in_history_regime():
    tr = integrate(row_params(horizon=0.4))
    assert np.all(tr.derivatives > 0)


@pytest.mark.parametrize("dt", [0.5 / 3, 0.5 / 2, 0.2])
def test_rejects_misaligned_delay(dt):
    with pytest.raises(ConfigError):
        integrate(row_params(step_dt=dt))


def test_rejects_huge_grid():
    params = ModelParams(LossModel("finite", 10, 10), 4e-8, step_dt=1e-8, horizon=2.0)
    with pytest.raises(ConfigError):
        integrate(params)


def test_hermite_reproduces_cubics():
    f = lambda t: 2 * t**3 - t**2 + 0.5 * t + 3
    df = lambda t: 6 * t**2 - 2 * t + 0.5
    a, h = 0.3, 0.25
    for s in np.linspace(0, 1, 11):
        assert hermite(f(a), df(a), f(a + h), df(a + h), h, s) == pytest.approx(f(a + s * h), abs=1e-12)


def test_rate_at_interpolates_grid_values(row1_trajectory):
    tr = row1_trajectory
    for i in (0, 5, 100, len(tr) - 1):
        assert tr.rate_at(float(tr.times[i])) == pytest.approx(float(tr.rates[i]), abs=1e-12)
    assert tr.rate_at(-0.1) == tr.params.initial_rate_x0


def test_replace_keeps_derived_step():
    p = row_params()
    q = replace(p, horizon=60.0)
    assert q.step_dt == p.step_dt and q.horizon == 60.0
