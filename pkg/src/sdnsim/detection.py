"""Failure and congestion detection: per-link BFD sessions and LLDP rounds.

BFD endpoints exchange 66-byte control/echo packets over the monitored link
every tx_interval.  The packets ride the ordinary data queues, so congestion
can delay or drop them.  Timeout checks piggyback on the transmit timer
(granularity = one interval).  Two independent triggers feed the controller:

  * silence   - nothing received for longer than the detection time
                (multiplier + 1) * interval: the link is treated as failed and
                the local port stops counting as live for fast-failover.
  * congestion- the egress queue of the monitored direction has stayed at or
                above 90% occupancy for longer than the detection time while
                packets still flow.  This reports a congested (not failed)
                link and leaves port liveness alone.

LLDP: the controller probes every switch-to-switch link each update interval
and declares a link failed once it has been silent for strictly more than
detection_factor * update_interval at a round boundary.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional

from .core import Engine
from .dataplane import BFD_CTRL, BFD_ECHO, LLDP, FRAME_OVERHEAD_B, Link, Packet, Topology

log = logging.getLogger(__name__)

BFD_PACKET_B = 24 + FRAME_OVERHEAD_B    # 66 bytes on the wire
LLDP_PACKET_B = 58 + FRAME_OVERHEAD_B   # 100 bytes on the wire

UP = 1
DOWN = 0

# Egress queue occupancy fraction treated as congested (x10 to stay integral).
CONGESTION_OCCUPANCY_TENTHS = 9


def compute_detection_time(tx_interval_us: int, multiplier: int) -> int:
    """Detection time from the transmit interval and detection multiplier.

    Exact integer arithmetic: (multiplier + 1) * tx_interval.
    """
    if tx_interval_us <= 0:
        raise ValueError("tx_interval_us must be > 0")
    if multiplier < 0:
        raise ValueError("multiplier must be >= 0")
    return (multiplier + 1) * tx_interval_us


@dataclass
class BfdConfig:
    link: tuple            # (node_a, node_b)
    tx_interval_us: int
    multiplier: int
    enabled: bool = True

    def detection_time_us(self) -> int:
        return compute_detection_time(self.tx_interval_us, self.multiplier)


class BfdEndpoint:
    """One side of a BFD session, living on a switch port."""

    __slots__ = ("session", "node_id", "port", "out_dir", "peer", "engine",
                 "state", "last_rx_us", "up_streak", "congested_since_us",
                 "last_congestion_report_us", "down_at_us")

    def __init__(self, session: "BfdSession", node_id: str, port, out_dir, engine: Engine):
        self.session = session
        self.node_id = node_id
        self.port = port
        self.out_dir = out_dir
        self.peer: Optional[BfdEndpoint] = None
        self.engine = engine
        self.state = UP
        self.last_rx_us = 0
        self.up_streak = 0
        self.congested_since_us = -1
        self.last_congestion_report_us = -(1 << 62)
        self.down_at_us = -1

    # -- timers --------------------------------------------------------------

    def tick(self, _arg=None) -> None:
        now = self.engine.now_us
        cfg = self.session.config
        self._check_silence(now)
        self._check_congestion(now)
        if self.port.carrier:
            self._send(BFD_CTRL, now)
        self.engine.schedule(now + cfg.tx_interval_us, self.tick)

    def _send(self, kind: int, now: int) -> None:
        pkt = Packet(kind, BFD_PACKET_B, None, now, meta=self)
        self.session.topology.control_emitted += 1
        self.out_dir.send(pkt, now)

    def _check_silence(self, now: int) -> None:
        if self.state != UP:
            return
        if now - self.last_rx_us > self.session.detection_time_us:
            self.state = DOWN
            self.down_at_us = now
            self.up_streak = 0
            self.port.set_bfd_live(False)
            log.debug("bfd %s endpoint %s down at %d", self.session.config.link,
                      self.node_id, now)
            cb = self.session.on_down
            if cb is not None:
                cb(self.session.link, self.node_id, now)

    def _check_congestion(self, now: int) -> None:
        occ = self.out_dir.occupancy(now)
        if occ * 10 >= self.out_dir.queue_cap * CONGESTION_OCCUPANCY_TENTHS:
            if self.congested_since_us < 0:
                self.congested_since_us = now
            else:
                d = self.session.detection_time_us
                if (now - self.congested_since_us > d
                        and now - self.last_congestion_report_us >= d):
                    self.last_congestion_report_us = now
                    cb = self.session.on_congestion
                    if cb is not None:
                        cb(self.session.link, self.node_id, now)
        else:
            self.congested_since_us = -1

    # -- receive path ----------------------------------------------------------

    def on_rx(self, kind: int, now: int) -> None:
        gap = now - self.last_rx_us
        self.last_rx_us = now
        if self.state == DOWN:
            # Invented recovery rule: one anchoring reception, then
            # multiplier + 1 consecutive on-time receptions bring the session up.
            if gap <= 2 * self.session.config.tx_interval_us:
                self.up_streak += 1
            else:
                self.up_streak = 1
            if self.up_streak >= self.session.config.multiplier + 2:
                self.state = UP
                self.port.set_bfd_live(True)
                cb = self.session.on_up
                if cb is not None:
                    cb(self.session.link, self.node_id, now)
        if kind == BFD_CTRL:
            if self.port.carrier:
                self._send(BFD_ECHO, now)


class BfdSession:
    """A configured session: two endpoints on the two ports of one link."""

    def __init__(self, config: BfdConfig, link: Link, topology: Topology,
                 engine: Engine):
        self.config = config
        self.link = link
        self.topology = topology
        self.detection_time_us = config.detection_time_us()
        self.on_down: Optional[Callable[[Link, str, int], None]] = None
        self.on_up: Optional[Callable[[Link, str, int], None]] = None
        self.on_congestion: Optional[Callable[[Link, str, int], None]] = None
        self.a = BfdEndpoint(self, link.a_port.node_id, link.a_port, link.a2b, engine)
        self.b = BfdEndpoint(self, link.b_port.node_id, link.b_port, link.b2a, engine)
        self.a.peer = self.b
        self.b.peer = self.a

    def start(self) -> None:
        self.a.tick()
        self.b.tick()

    def endpoint_at(self, node_id: str) -> BfdEndpoint:
        if self.a.node_id == node_id:
            return self.a
        if self.b.node_id == node_id:
            return self.b
        raise KeyError(node_id)


@dataclass
class LldpConfig:
    update_interval_us: int = 12_000_000
    detection_factor: int = 2
    enabled: bool = True

    def __post_init__(self) -> None:
        if self.update_interval_us <= 0:
            raise ValueError("update_interval_us must be > 0")
        if self.detection_factor < 1:
            raise ValueError("detection_factor must be >= 1")


class LldpService:
    """Controller-driven topology discovery over the real data queues.

    Probes go out in both directions of every switch-to-switch link each
    round; a probe reaching the far switch is reported back to the controller
    after the control-channel delay and refreshes last_seen for the link.
    """

    def __init__(self, config: LldpConfig, topology: Topology, engine: Engine,
                 control_delay_us: int,
                 on_link_failed: Callable[[Link, str, int], None]):
        self.config = config
        self.topology = topology
        self.engine = engine
        self.control_delay_us = control_delay_us
        self.on_link_failed = on_link_failed
        self.last_seen_us: Dict[str, int] = {}
        self.declared: set = set()

    def start(self) -> None:
        if not self.config.enabled:
            return
        for link in self.topology.switch_links():
            self.last_seen_us[link.id] = 0
        self.engine.schedule(self.config.update_interval_us, self._round)

    def _round(self, _arg=None) -> None:
        now = self.engine.now_us
        horizon = self.config.detection_factor * self.config.update_interval_us
        for link in self.topology.switch_links():
            if link.id in self.declared:
                continue
            if now - self.last_seen_us[link.id] > horizon:
                self.declared.add(link.id)
                log.debug("lldp declares %s failed at %d", link.id, now)
                self.on_link_failed(link, "lldp", now)
        for link in self.topology.switch_links():
            if link.id in self.declared:
                continue
            for direction, port in ((link.a2b, link.a_port), (link.b2a, link.b_port)):
                if port.carrier:
                    pkt = Packet(LLDP, LLDP_PACKET_B, None, now, meta=link)
                    self.topology.control_emitted += 1
                    direction.send(pkt, now)
        self.engine.schedule(now + self.config.update_interval_us, self._round)

    def probe_arrived(self, link: Link, now: int) -> None:
        """Far switch saw the probe; controller learns after the control delay."""
        self.engine.schedule(now + self.control_delay_us, self._refresh, link)

    def _refresh(self, link: Link) -> None:
        seen = self.last_seen_us.get(link.id, 0)
        if self.engine.now_us > seen:
            self.last_seen_us[link.id] = self.engine.now_us


def make_control_dispatcher(topology: Topology,
                            lldp: Optional[LldpService]) -> Callable:
    """Build the per-switch hook that consumes link-local control packets."""

    def dispatch(pkt: Packet, now: int) -> None:
        topology.control_consumed += 1
        kind = pkt.kind
        if kind == BFD_CTRL or kind == BFD_ECHO:
            sender: BfdEndpoint = pkt.meta
            sender.peer.on_rx(kind, now)
        elif kind == LLDP and lldp is not None:
            lldp.probe_arrived(pkt.meta, now)

    return dispatch
