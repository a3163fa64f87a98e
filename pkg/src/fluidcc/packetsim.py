"""Discrete-event simulation of one TCP Reno flow through a Drop Tail bottleneck.

Topology: sender -> router queue (capacity ``buffer_B`` packets including the
one in service, service rate ``capacity_C``) -> receiver.  The receiver-side
link is treated as infinitely fast; the whole two-way propagation delay
``base_rtt`` is split evenly between the data and ACK directions.

Sender state machine (one ACK per segment, no delayed ACKs, unbounded
receiver window):

* slow start: ``cwnd += 1`` per new ACK until ``cwnd >= ssthresh``
* congestion avoidance: ``cwnd += 1 / cwnd`` per new ACK
* 3 duplicate ACKs: ``ssthresh = max(cwnd / 2, 2)``, retransmit,
  ``cwnd = ssthresh + 3``, inflate by 1 per further duplicate, deflate to
  ``ssthresh`` on the next new ACK
* timeout after ``max(2 * base_rtt, 1 s)`` without progress:
  ``ssthresh = max(cwnd / 2, 2)``, ``cwnd = 1``, go back to ``snd_una``
"""

from __future__ import annotations

import enum
import heapq
import math
from collections import deque
from dataclasses import dataclass, field

from .errors import ConfigError


class Phase(str, enum.Enum):
    SLOW_START = "SlowStart"
    CONGESTION_AVOIDANCE = "CongestionAvoidance"
    FAST_RECOVERY = "FastRecovery"


@dataclass(frozen=True)
class PacketSimConfig:
    capacity_C: float
    buffer_B: int
    base_rtt: float
    duration: float
    init_cwnd: float = 1.0
    init_ssthresh: float = 64.0
    seed: int = 0  # unused: the simulator is deterministic

    def __post_init__(self) -> None:
        if not math.isfinite(self.capacity_C) or self.capacity_C <= 0:
            raise ConfigError(f"capacity_C must be > 0, got {self.capacity_C}")
        if isinstance(self.buffer_B, float) and self.buffer_B.is_integer():
            object.__setattr__(self, "buffer_B", int(self.buffer_B))
        if not isinstance(self.buffer_B, int) or self.buffer_B < 1:
            raise ConfigError(f"buffer_B must be an integer >= 1, got {self.buffer_B!r}")
        if not math.isfinite(self.base_rtt) or self.base_rtt <= 0:
            raise ConfigError(f"base_rtt must be > 0, got {self.base_rtt}")
        if not math.isfinite(self.duration) or self.duration <= self.base_rtt:
            raise ConfigError(
                f"duration must exceed base_rtt ({self.base_rtt}), got {self.duration}"
            )
        if self.init_cwnd < 1:
            raise ConfigError(f"init_cwnd must be >= 1, got {self.init_cwnd}")
        if self.init_ssthresh < 2:
            raise ConfigError(f"init_ssthresh must be >= 2, got {self.init_ssthresh}")

    @property
    def rto(self) -> float:
        return max(2.0 * self.base_rtt, 1.0)


@dataclass
class PacketSimResult:
    config: PacketSimConfig
    cwnd_trace: list[tuple[float, float]]
    queue_trace: list[tuple[float, int]]
    phase_trace: list[tuple[float, Phase]]
    delivery_times: list[float] = field(repr=False)
    loss_events: list[tuple[float, float, Phase]] = field(repr=False)
    sent: int = 0
    drops: int = 0
    delivered: int = 0
    in_flight: int = 0
    timeouts: int = 0
    fast_retransmits: int = 0
    max_queue: int = 0

    @property
    def achieved_throughput(self) -> float:
        return self.delivered / self.config.duration

    def throughput_between(self, start: float, end: float) -> float:
        """Packets/s reaching the receiver in ``[start, end)``."""
        if end <= start:
            raise ValueError("end must exceed start")
        count = sum(1 for t in self.delivery_times if start <= t < end)
        return count / (end - start)

    def tail_throughput(self, fraction: float = 2.0 / 3.0) -> float:
        d = self.config.duration
        return self.throughput_between(d - d * fraction, d)

    def sawtooth_peaks(self) -> list[tuple[float, float]]:
        """(time, cwnd) at each loss reaction taken from congestion avoidance."""
        return [(t, w) for t, w, ph in self.loss_events
                if ph is Phase.CONGESTION_AVOIDANCE]


# event kinds, ordered so simultaneous events resolve deterministically
_SERVICE_DONE, _RECV, _ACK, _TIMEOUT = range(4)


class _Sim:
    def __init__(self, cfg: PacketSimConfig) -> None:
        self.cfg = cfg
        self.now = 0.0
        self.events: list = []
        self.counter = 0
        self.service_time = 1.0 / cfg.capacity_C
        self.one_way = cfg.base_rtt / 2.0

        # sender
        self.cwnd = float(cfg.init_cwnd)
        self.ssthresh = float(cfg.init_ssthresh)
        self.phase = Phase.SLOW_START if self.cwnd < self.ssthresh else Phase.CONGESTION_AVOIDANCE
        self.snd_una = 0
        self.snd_nxt = 0
        self.dupacks = 0
        self.timer_gen = 0
        self.timer_armed = False

        # router
        self.queue: deque[int] = deque()
        self.busy = False

        # receiver
        self.rcv_nxt = 0
        self.out_of_order: set[int] = set()

        self.sent = 0
        self.drops = 0
        self.delivered = 0
        self.timeouts = 0
        self.fast_retransmits = 0
        self.max_queue = 0
        self.delivery_times: list[float] = []
        self.loss_events: list[tuple[float, float, Phase]] = []
        self.cwnd_trace = [(0.0, self.cwnd)]
        self.queue_trace = [(0.0, 0)]
        self.phase_trace = [(0.0, self.phase)]

    # -- bookkeeping -------------------------------------------------------
    def schedule(self, t: float, kind: int, arg: int = 0) -> None:
        heapq.heappush(self.events, (t, kind, self.counter, arg))
        self.counter += 1

    def set_cwnd(self, value: float) -> None:
        self.cwnd = value
        self.cwnd_trace.append((self.now, value))

    def set_phase(self, phase: Phase) -> None:
        if phase is not self.phase:
            self.phase = phase
            self.phase_trace.append((self.now, phase))

    def queue_len(self) -> int:
        return len(self.queue) + (1 if self.busy else 0)

    def log_queue(self) -> None:
        q = self.queue_len()
        self.max_queue = max(self.max_queue, q)
        self.queue_trace.append((self.now, q))

    def arm_timer(self) -> None:
        self.timer_gen += 1
        self.timer_armed = True
        self.schedule(self.now + self.cfg.rto, _TIMEOUT, self.timer_gen)

    def stop_timer(self) -> None:
        self.timer_gen += 1
        self.timer_armed = False

    # -- data path ---------------------------------------------------------
    def transmit(self, seq: int) -> None:
        self.sent += 1
        if not self.timer_armed:
            self.arm_timer()
        # sender sits directly on the bottleneck: arrival at the router is immediate
        if self.queue_len() >= self.cfg.buffer_B:
            self.drops += 1
            return
        if self.busy:
            self.queue.append(seq)
        else:
            self.busy = True
            self.schedule(self.now + self.service_time, _SERVICE_DONE, seq)
        self.log_queue()

    def try_send(self) -> None:
        while self.snd_nxt < self.snd_una + math.floor(self.cwnd + 1e-9):
            self.transmit(self.snd_nxt)
            self.snd_nxt += 1

    def on_service_done(self, seq: int) -> None:
        self.schedule(self.now + self.one_way, _RECV, seq)
        if self.queue:
            nxt = self.queue.popleft()
            self.schedule(self.now + self.service_time, _SERVICE_DONE, nxt)
        else:
            self.busy = False
        self.log_queue()

    def on_receive(self, seq: int) -> None:
        self.delivered += 1
        self.delivery_times.append(self.now)
        if seq == self.rcv_nxt:
            self.rcv_nxt += 1
            while self.rcv_nxt in self.out_of_order:
                self.out_of_order.remove(self.rcv_nxt)
                self.rcv_nxt += 1
        elif seq > self.rcv_nxt:
            self.out_of_order.add(seq)
        self.schedule(self.now + self.one_way, _ACK, self.rcv_nxt)

    # -- sender ------------------------------------------------------------
    def on_ack(self, ack: int) -> None:
        if ack > self.snd_una:
            if self.phase is Phase.FAST_RECOVERY:
                self.set_cwnd(self.ssthresh)
                self.set_phase(Phase.CONGESTION_AVOIDANCE)
            elif self.phase is Phase.SLOW_START:
                self.set_cwnd(self.cwnd + 1.0)
                if self.cwnd >= self.ssthresh:
                    self.set_phase(Phase.CONGESTION_AVOIDANCE)
            else:
                self.set_cwnd(self.cwnd + 1.0 / self.cwnd)
            self.snd_una = ack
            self.snd_nxt = max(self.snd_nxt, ack)
            self.dupacks = 0
            if self.snd_una < self.snd_nxt:
                self.arm_timer()
            else:
                self.stop_timer()
        elif ack == self.snd_una and self.snd_nxt > self.snd_una:
            self.dupacks += 1
            if self.phase is Phase.FAST_RECOVERY:
                self.set_cwnd(self.cwnd + 1.0)
            elif self.dupacks == 3:
                self.loss_events.append((self.now, self.cwnd, self.phase))
                self.fast_retransmits += 1
                self.ssthresh = max(self.cwnd / 2.0, 2.0)
                self.transmit(self.snd_una)
                self.set_cwnd(self.ssthresh + 3.0)
                self.set_phase(Phase.FAST_RECOVERY)
        self.try_send()

    def on_timeout(self, gen: int) -> None:
        if gen != self.timer_gen or not self.timer_armed:
            return
        self.timeouts += 1
        self.loss_events.append((self.now, self.cwnd, self.phase))
        self.ssthresh = max(self.cwnd / 2.0, 2.0)
        self.set_cwnd(1.0)
        self.set_phase(Phase.SLOW_START)
        self.dupacks = 0
        self.snd_nxt = self.snd_una
        self.timer_armed = False
        self.try_send()

    def run(self) -> PacketSimResult:
        self.try_send()
        end = self.cfg.duration
        handlers = {
            _SERVICE_DONE: self.on_service_done,
            _RECV: self.on_receive,
            _ACK: self.on_ack,
            _TIMEOUT: self.on_timeout,
        }
        while self.events and self.events[0][0] <= end:
            t, kind, _, arg = heapq.heappop(self.events)
            self.now = t
            handlers[kind](arg)
        in_flight = self.sent - self.drops - self.delivered
        return PacketSimResult(
            config=self.cfg,
            cwnd_trace=self.cwnd_trace,
            queue_trace=self.queue_trace,
            phase_trace=self.phase_trace,
            delivery_times=self.delivery_times,
            loss_events=self.loss_events,
            sent=self.sent,
            drops=self.drops,
            delivered=self.delivered,
            in_flight=in_flight,
            timeouts=self.timeouts,
            fast_retransmits=self.fast_retransmits,
            max_queue=self.max_queue,
        )


def run_packet_sim(config: PacketSimConfig) -> PacketSimResult:
    return _Sim(config).run()


def config_for(capacity_C: float, buffer_B: int, rtt_T: float,
               duration: float = 60.0, **kwargs) -> PacketSimConfig:
    """Packet-sim configuration matching a fluid run's (C, B, T)."""
    return PacketSimConfig(capacity_C=capacity_C, buffer_B=buffer_B,
                           base_rtt=rtt_T, duration=duration, **kwargs)

