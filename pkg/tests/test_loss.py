import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluidcc import ConfigError, DomainError, LossModel, Variant, loss_probability


def mm1b_blocking_by_summation(rho, B):
    """Stationary probability of a full M/M/1/B system: rho^B / sum_k rho^k."""
    weights = [rho**k for k in range(B + 1)]
    return weights[-1] / math.fsum(weights)


@pytest.mark.parametrize("C,B,x,expected", [
    (10, 10, 0.0, 0.0),
    (10, 10, 10.0, 1.0),
    (10, 5, 5.0, 0.03125),
])
def test_finite_examples(C, B, x, expected):
    assert loss_probability(LossModel(Variant.FINITE, C, B), x) == pytest.approx(expected, abs=1e-15)


def test_finite_clamps_above_capacity():
    assert loss_probability(LossModel("finite", 10, 3), 25.0) == 1.0


@pytest.mark.parametrize("C,B", [(10, 10), (3.5, 1), (1000, 200)])
def test_infinite_zero_rate(C, B):
    assert loss_probability(LossModel("infinite", C, B), 0.0) == 0.0


@pytest.mark.parametrize("B", [1, 5, 10, 50])
def test_infinite_limit_at_capacity(B):
    model = LossModel("infinite", 10.0, B)
    limit = 1.0 / (B + 1)
    below = loss_probability(model, 10.0 * (1 - 1e-9))
    above = loss_probability(model, 10.0 * (1 + 1e-9))
    assert below == pytest.approx(limit, abs=1e-6)
    assert above == pytest.approx(limit, abs=1e-6)
    assert loss_probability(model, 10.0) == limit


@pytest.mark.parametrize("eps", [1e-3, 1e-5, 1e-7, 1e-8])
@pytest.mark.parametrize("B", [1, 10, 100])
def test_infinite_continuous_across_one(eps, B):
    model = LossModel("infinite", 7.0, B)
    gap = abs(loss_probability(model, 7.0 * (1 - eps)) - loss_probability(model, 7.0 * (1 + eps)))
    assert gap < 10 * eps * B


@pytest.mark.parametrize("B", range(1, 21))
def test_infinite_matches_summation_oracle(B):
    model = LossModel("infinite", 1.0, B)
    for i in range(1, 200):
        rho = i / 100.0
        if abs(rho - 1.0) < 1e-12:
            continue
        assert loss_probability(model, rho) == pytest.approx(
            mm1b_blocking_by_summation(rho, B), abs=1e-12)


def test_large_buffer_does_not_overflow():
    model = LossModel("infinite", 10.0, 10**6)
    assert 0.0 <= loss_probability(model, 20.0) <= 1.0
    assert loss_probability(model, 20.0) == pytest.approx(0.5)
    assert loss_probability(LossModel("finite", 10.0, 10**6), 9.99) == 0.0


@pytest.mark.parametrize("kwargs", [
    dict(variant="finite", capacity_C=0.0, buffer_B=5),
    dict(variant="finite", capacity_C=-1.0, buffer_B=5),
    dict(variant="finite", capacity_C=10.0, buffer_B=0),
    dict(variant="finite", capacity_C=10.0, buffer_B=10**6 + 1),
    dict(variant="finite", capacity_C=10.0, buffer_B=2.5),
    dict(variant="red", capacity_C=10.0, buffer_B=5),
])
def test_invalid_models_rejected(kwargs):
    with pytest.raises(ConfigError):
        LossModel(**kwargs)


def test_negative_rate_is_domain_error():
    with pytest.raises(DomainError):
        loss_probability(LossModel("finite", 10, 10), -0.1)


variants = st.sampled_from([Variant.FINITE, Variant.INFINITE])
capacities = st.floats(min_value=0.1, max_value=1e4, allow_nan=False)
buffers = st.integers(min_value=1, max_value=1000)


@settings(max_examples=300, deadline=None)
@given(variant=variants, C=capacities, B=buffers,
       frac=st.floats(min_value=0.0, max_value=2.0))
def test_probability_in_unit_interval(variant, C, B, frac):
    p = loss_probability(LossModel(variant, C, B), frac * C)
    assert 0.0 <= p <= 1.0


@settings(max_examples=300, deadline=None)
@given(variant=variants, C=capacities, B=buffers,
       a=st.floats(min_value=0.0, max_value=1.0), b=st.floats(min_value=0.0, max_value=1.0))
def test_probability_monotone_on_capacity_range(variant, C, B, a, b):
    lo, hi = sorted((a, b))
    model = LossModel(variant, C, B)
    assert loss_probability(model, lo * C) <= loss_probability(model, hi * C)
