import json
from pathlib import Path

import pytest

from fluidcc import ConfigError, PacketSimConfig, run_packet_sim
from fluidcc.packetsim import Phase, config_for

GOLDEN = json.loads((Path(__file__).parent / "golden" / "reference_runs.json").read_text())


@pytest.fixture(scope="module")
def table_runs():
    return {(C, B): run_packet_sim(config_for(C, B, 0.5)) for C, B in
            [(10.0, 10), (10.0, 5), (5.0, 10)]}


def test_loss_free_slow_start_doubles_per_rtt():
    rtt = 0.1
    result = run_packet_sim(PacketSimConfig(10_000.0, 10**9, rtt, duration=0.55))
    assert result.drops == 0
    for k in range(1, 6):
        t = k * rtt + rtt / 2
        cwnd = [w for tt, w in result.cwnd_trace if tt <= t][-1]
        assert cwnd == 2**k
    assert all(ph is Phase.SLOW_START for _, ph in result.phase_trace)


def test_conservation(table_runs):
    for r in table_runs.values():
        assert r.sent == r.delivered + r.drops + r.in_flight
        assert r.in_flight >= 0


def test_queue_never_exceeds_buffer(table_runs):
    for (C, B), r in table_runs.items():
        assert max(q for _, q in r.queue_trace) <= B
        assert r.max_queue == B  # drop tail is reached under a persistent backlog


def test_throughput_bounded_by_capacity(table_runs):
    for (C, B), r in table_runs.items():
        assert r.achieved_throughput <= C
        assert r.tail_throughput() <= C


@pytest.mark.parametrize("C,B", [(10.0, 10), (5.0, 10)])
def test_backlogged_utilisation(table_runs, C, B):
    assert table_runs[(C, B)].achieved_throughput >= 0.7 * C


def test_sawtooth_peaks(table_runs):
    for r in table_runs.values():
        peaks = r.sawtooth_peaks()
        assert len(peaks) >= 3
        assert all(w >= 2 for _, w in peaks)


def test_deterministic():
    a = run_packet_sim(config_for(10.0, 10, 0.5))
    b = run_packet_sim(config_for(10.0, 10, 0.5))
    assert a.cwnd_trace == b.cwnd_trace
    assert a.queue_trace == b.queue_trace
    assert a.delivery_times == b.delivery_times


@pytest.mark.parametrize("key,C,B", [("C10-B10", 10.0, 10), ("C10-B5", 10.0, 5),
                                     ("C5-B10", 5.0, 10)])
def test_matches_golden_reference(table_runs, key, C, B):
    r = table_runs[(C, B)]
    g = GOLDEN["packet"][key]
    assert len(r.sawtooth_peaks()) == g["peaks"]
    assert (r.sent, r.delivered, r.drops) == (g["sent"], g["delivered"], g["drops"])
    assert (r.timeouts, r.fast_retransmits) == (g["timeouts"], g["fast_retransmits"])
    assert r.tail_throughput() == pytest.approx(g["tail_throughput"], abs=1e-12)


def test_fast_recovery_enters_and_leaves(table_runs):
    phases = [ph for _, ph in table_runs[(10.0, 10)].phase_trace]
    i = phases.index(Phase.FAST_RECOVERY)
    assert phases[i + 1] in (Phase.CONGESTION_AVOIDANCE, Phase.SLOW_START)


def test_rto_floor():
    assert PacketSimConfig(10, 10, 0.1, 5).rto == 1.0
    assert PacketSimConfig(10, 10, 0.8, 5).rto == 1.6


@pytest.mark.parametrize("kw", [
    dict(capacity_C=0, buffer_B=10, base_rtt=0.5, duration=10),
    dict(capacity_C=10, buffer_B=0, base_rtt=0.5, duration=10),
    dict(capacity_C=10, buffer_B=10, base_rtt=0.0, duration=10),
    dict(capacity_C=10, buffer_B=10, base_rtt=0.5, duration=0.5),
    dict(capacity_C=10, buffer_B=10, base_rtt=0.5, duration=10, init_cwnd=0.5),
])
def test_invalid_config(kw):
    with pytest.raises(ConfigError):
        PacketSimConfig(**kw)
