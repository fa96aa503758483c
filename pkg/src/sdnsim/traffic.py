"""Constant-bitrate background traffic (iPerf analog) and flow QoS metrics.

A CBR source emits fixed-size datagrams at exact spacing payload_bits/rate.
Rates are payload rates: the wire additionally carries the 42-byte framing
overhead, as a real UDP generator would.  Emission timestamps are computed
with integer arithmetic from the flow start so long runs accumulate no drift.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional

from .core import US_PER_S, Engine
from .dataplane import DATA, FRAME_OVERHEAD_B, Host, Packet

THROUGHPUT_BIN_US = 100_000  # 100 ms bins


@dataclass
class CbrFlowSpec:
    name: str
    src: str
    dst: str
    rate_bps: float
    packet_size_b: int = 1470  # payload bytes per datagram
    start_us: int = 0
    stop_us: int = 0
    track_gap: bool = False

    def __post_init__(self) -> None:
        if self.rate_bps <= 0:
            raise ValueError(f"flow {self.name!r}: rate must be > 0")
        if self.packet_size_b <= 0:
            raise ValueError(f"flow {self.name!r}: packet size must be > 0")
        if self.start_us >= self.stop_us:
            raise ValueError(f"flow {self.name!r}: start must precede stop")

    def flow_key(self):
        return (self.src, self.dst, f"cbr:{self.name}")

    def spacing_num(self) -> int:
        return self.packet_size_b * 8 * US_PER_S

    def nominal_spacing_us(self) -> int:
        return int(self.spacing_num() // int(self.rate_bps))


class FlowStats:
    """Receiver-side accounting for one flow."""

    __slots__ = ("spec", "sent", "received", "received_payload_bits", "bins",
                 "arrivals_us")

    def __init__(self, spec: CbrFlowSpec):
        self.spec = spec
        self.sent = 0
        self.received = 0
        self.received_payload_bits = 0
        self.bins: Dict[int, int] = {}  # bin index -> payload bits
        self.arrivals_us: Optional[List[int]] = [] if spec.track_gap else None

    def on_rx(self, payload_bits: int, t_us: int) -> None:
        self.received += 1
        self.received_payload_bits += payload_bits
        idx = t_us // THROUGHPUT_BIN_US
        self.bins[idx] = self.bins.get(idx, 0) + payload_bits
        if self.arrivals_us is not None:
            self.arrivals_us.append(t_us)

    def window_bits(self, start_us: int, end_us: int) -> int:
        """Payload bits received in [start_us, end_us) summed from the bins."""
        b0 = start_us // THROUGHPUT_BIN_US
        b1 = end_us // THROUGHPUT_BIN_US
        return sum(bits for idx, bits in self.bins.items() if b0 <= idx < b1)

    def throughput_bps(self, start_us: int, end_us: int) -> float:
        if end_us <= start_us:
            return 0.0
        return self.window_bits(start_us, end_us) * US_PER_S / (end_us - start_us)


def packet_loss(stats: FlowStats, in_flight: int = 0) -> Optional[float]:
    """Loss ratio (sent - received - in_flight_at_horizon) / sent."""
    if stats.sent == 0:
        return None
    lost = stats.sent - stats.received - in_flight
    return lost / stats.sent


def recovery_gap(arrivals_us: List[int], failure_us: int,
                 nominal_spacing_us: int,
                 horizon_us: Optional[int] = None) -> Optional[int]:
    """Longest receiver inter-arrival gap ending after the failure time,
    minus the flow's nominal spacing.  None if traffic never resumes: the
    silence from the last arrival to the horizon dwarfs every closed gap."""
    best = None
    prev = None
    for t in arrivals_us:
        if prev is not None and t > failure_us:
            gap = t - prev
            if best is None or gap > best:
                best = gap
        prev = t
    if best is None:
        return None
    if horizon_us is not None and prev is not None:
        trailing = horizon_us - prev
        if trailing > best:
            return None
    return max(0, best - nominal_spacing_us)


class CbrSource:
    """Emits the flow's datagrams at exact spacing, one event per packet.

    When the host uplink is private to this flow, uncongested at this rate,
    and can never fail, the uplink transit is a pure constant delay, so the
    source schedules the switch arrival directly (uplink counters maintained)
    instead of a separate emission event per packet.
    """

    __slots__ = ("spec", "host", "engine", "stats", "_k", "_key", "_size",
                 "_num", "_rate", "_uplink", "_shortcut_delay_us", "_ingress")

    def __init__(self, spec: CbrFlowSpec, host: Host, engine: Engine,
                 stats: FlowStats, shortcut: bool = False):
        self.spec = spec
        self.host = host
        self.engine = engine
        self.stats = stats
        self._k = 0
        self._key = spec.flow_key()
        self._size = spec.packet_size_b + FRAME_OVERHEAD_B
        self._num = spec.spacing_num()
        self._rate = int(spec.rate_bps)
        self._uplink = host.port.out_dir
        ser = self._uplink.ser_us(self._size)
        self._shortcut_delay_us = ser + self._uplink.prop_us
        # spacing must cover the serialization or the uplink queue builds
        if shortcut and self.nominal_spacing_ok(ser):
            self._ingress = self._uplink.dst_node
        else:
            self._ingress = None

    def nominal_spacing_ok(self, ser_us: int) -> bool:
        return self.spec.nominal_spacing_us() >= ser_us

    def start(self) -> None:
        if self._ingress is not None:
            self.engine.schedule(self.spec.start_us + self._shortcut_delay_us,
                                 self._arrive)
        else:
            self.engine.schedule(self.spec.start_us, self._emit)

    def _emit(self, _arg=None) -> None:
        now = self.engine.now_us
        pkt = Packet(DATA, self._size, self._key, now)
        self.stats.sent += 1
        self.host.emit(pkt, now)
        self._k += 1
        nxt = self.spec.start_us + (self._k * self._num) // self._rate
        if nxt < self.spec.stop_us:
            self.engine.schedule(nxt, self._emit)

    def _arrive(self, _arg=None) -> None:
        now = self.engine.now_us
        emitted_at = now - self._shortcut_delay_us
        pkt = Packet(DATA, self._size, self._key, emitted_at)
        self.stats.sent += 1
        host = self.host
        host.n_emitted += 1
        up = self._uplink
        up.n_entered += 1
        up.n_delivered += 1
        self._ingress.rx(pkt, now)
        self._k += 1
        nxt = self.spec.start_us + (self._k * self._num) // self._rate
        if nxt < self.spec.stop_us:
            self.engine.schedule(nxt + self._shortcut_delay_us, self._arrive)


class CbrSink:
    """Passive receiver: pure accounting, no downstream effects."""

    __slots__ = ("stats_by_key",)

    def __init__(self):
        self.stats_by_key: Dict[tuple, FlowStats] = {}

    def register(self, stats: FlowStats) -> None:
        self.stats_by_key[stats.spec.flow_key()] = stats

    def on_rx(self, pkt: Packet, t_us: int) -> None:
        stats = self.stats_by_key.get(pkt.flow_key)
        if stats is not None:
            stats.on_rx((pkt.size - FRAME_OVERHEAD_B) * 8, t_us)
