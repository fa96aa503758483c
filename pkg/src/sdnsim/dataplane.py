"""Data plane: hosts, switches, links, flow/group tables, failure injection.

Links are modeled as two independent directions, each a drop-tail FIFO with a
single serializing server: a packet entering a direction waits for the queue,
occupies the wire for size*8/capacity, then arrives prop_delay later.  Queue
capacity is counted in packets.

Packet.size is the on-wire size in bytes.  Application payloads are charged a
fixed 42-byte framing overhead (Ethernet+IP+UDP), so e.g. a 1470-byte iPerf
datagram occupies 1512 bytes of wire.

Two failure semantics:
  * PORT_DOWN      - both endpoint ports lose carrier, queued packets are
                     flushed, the controller gets a port-status notification.
  * TRANSPARENT_CUT- packets entering the direction after the cut are silently
                     discarded; port state and notifications are untouched.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

from .core import US_PER_S, Engine

log = logging.getLogger(__name__)

# Framing overhead charged per application packet (Ethernet 14 + IP 20 + UDP 8).
FRAME_OVERHEAD_B = 42

# Packet kinds.
DATA = 0
LLDP = 1
BFD_CTRL = 2
BFD_ECHO = 3
HTTP_REQ = 4
HTTP_CHUNK = 5
ACK = 6

KIND_NAMES = {
    DATA: "DATA",
    LLDP: "LLDP",
    BFD_CTRL: "BFD_CTRL",
    BFD_ECHO: "BFD_ECHO",
    HTTP_REQ: "HTTP_REQ",
    HTTP_CHUNK: "HTTP_CHUNK",
    ACK: "ACK",
}

FlowKey = Tuple[str, str, str]  # (src host, dst host, app tag)


class Packet:
    __slots__ = ("id", "kind", "size", "flow_key", "created_us", "meta")

    _next_id = 0

    def __init__(self, kind: int, size: int, flow_key: Optional[FlowKey],
                 created_us: int, meta=None):
        assert size > 0
        Packet._next_id += 1
        self.id = Packet._next_id
        self.kind = kind
        self.size = size  # on-wire bytes
        self.flow_key = flow_key
        self.created_us = created_us
        self.meta = meta

    def __repr__(self):
        return f"Packet({KIND_NAMES[self.kind]}, {self.size}B, {self.flow_key})"


class FailureMode(Enum):
    PORT_DOWN = "port_down"
    TRANSPARENT_CUT = "transparent_cut"


class Port:
    """One attachment point of a link at a node.

    carrier and live are derived flags kept in sync by refresh(), so the
    forwarding fast path reads one attribute instead of recombining three.
    """

    __slots__ = ("node_id", "index", "admin_up", "link_layer_up", "bfd_live",
                 "carrier", "live", "out_dir", "link")

    def __init__(self, node_id: str, index: int):
        self.node_id = node_id
        self.index = index
        self.admin_up = True
        self.link_layer_up = True
        # False while a BFD session on this port reports Down; True otherwise.
        self.bfd_live = True
        self.carrier = True
        self.live = True
        self.out_dir: Optional[LinkDir] = None
        self.link: Optional[Link] = None

    def refresh(self) -> None:
        self.carrier = self.admin_up and self.link_layer_up
        self.live = self.carrier and self.bfd_live

    def set_link_layer(self, up: bool) -> None:
        self.link_layer_up = up
        self.refresh()

    def set_bfd_live(self, live: bool) -> None:
        self.bfd_live = live
        self.refresh()

    def is_live(self) -> bool:
        """Watch-port liveness used by fast-failover buckets."""
        return self.admin_up and self.link_layer_up and self.bfd_live


class LinkDir:
    """One direction of a link: drop-tail FIFO plus serializing server."""

    __slots__ = ("name", "capacity_bps", "prop_us", "queue_cap", "cut",
                 "src_port", "dst_node", "_free_at", "_pending", "_flushed_at",
                 "engine", "fast_sink", "horizon_us", "drops_by_flow", "_ser_cache",
                 "n_entered", "n_delivered", "n_drop_queue", "n_drop_cut",
                 "n_drop_down", "n_drop_flush", "n_outstanding")

    def __init__(self, name: str, capacity_bps: float, prop_us: int,
                 queue_cap: int, engine: Engine):
        self.name = name
        self.capacity_bps = capacity_bps
        self.prop_us = prop_us
        self.queue_cap = queue_cap
        self.cut = False
        self.src_port: Optional[Port] = None
        self.dst_node = None  # Switch or Host, set by wiring
        self.engine = engine
        self._free_at = 0           # when the server finishes the current backlog
        self._pending = deque()     # service-end times of buffered packets
        self._flushed_at = -1       # packets still buffered at this time were discarded
        self.fast_sink = None       # set for terminal host links into passive sinks
        self.horizon_us = 0
        self.drops_by_flow: Optional[dict] = None  # shared per-flow drop tally
        self._ser_cache: dict = {}  # packet size -> serialization microseconds
        self.n_entered = 0
        self.n_delivered = 0
        self.n_drop_queue = 0
        self.n_drop_cut = 0
        self.n_drop_down = 0
        self.n_drop_flush = 0
        self.n_outstanding = 0

    def _attribute_drop(self, pkt: Packet) -> None:
        d = self.drops_by_flow
        if d is not None and pkt.flow_key is not None:
            d[pkt.flow_key] = d.get(pkt.flow_key, 0) + 1

    def ser_us(self, size_b: int) -> int:
        """Serialization time, integer microseconds, rounded up."""
        bits_us = size_b * 8 * US_PER_S
        cap = int(self.capacity_bps)
        return (bits_us + cap - 1) // cap

    def occupancy(self, now_us: int) -> int:
        """Packets buffered (waiting or serializing) at now_us."""
        pending = self._pending
        while pending and pending[0] <= now_us:
            pending.popleft()
        return len(pending)

    def backlog_us(self, now_us: int) -> int:
        """Time a new arrival would wait before its own serialization starts."""
        return self._free_at - now_us if self._free_at > now_us else 0

    def send(self, pkt: Packet, now_us: int) -> None:
        self.n_entered += 1
        if self.cut:
            self.n_drop_cut += 1
            self._attribute_drop(pkt)
            return
        if not self.src_port.carrier:
            self.n_drop_down += 1
            self._attribute_drop(pkt)
            return
        pending = self._pending
        while pending and pending[0] <= now_us:
            pending.popleft()
        if len(pending) >= self.queue_cap:
            self.n_drop_queue += 1
            self._attribute_drop(pkt)
            return
        size = pkt.size
        ser = self._ser_cache.get(size)
        if ser is None:
            ser = self.ser_us(size)
            self._ser_cache[size] = ser
        free = self._free_at
        end = (free if free > now_us else now_us) + ser
        self._free_at = end
        pending.append(end)
        deliver_at = end + self.prop_us
        if self.fast_sink is not None:
            # Terminal link into a passive sink: statistics are a pure function
            # of the delivery time, so skip the event.  Only allowed on links
            # that can never fail (enforced at wiring time).
            if deliver_at <= self.horizon_us:
                self.n_delivered += 1
                self.fast_sink(pkt, deliver_at)
            else:
                self.n_outstanding += 1
            return
        self.n_outstanding += 1
        self.engine.schedule(deliver_at, self._deliver, pkt)

    def _deliver(self, pkt: Packet) -> None:
        now = self.engine.now_us
        # Packets still buffered when the direction was flushed were discarded:
        # their serialization would have ended at or before the backlog that
        # existed at flush time.
        if now - self.prop_us <= self._flushed_at:
            self.n_drop_flush += 1
            self.n_outstanding -= 1
            self._attribute_drop(pkt)
            return
        self.n_delivered += 1
        self.n_outstanding -= 1
        self.dst_node.rx(pkt, now)

    def flush(self, now_us: int) -> None:
        """Discard everything still buffered (used by PORT_DOWN)."""
        self._flushed_at = self._free_at if self._free_at > now_us else now_us
        self._pending.clear()
        self._free_at = now_us


class Link:
    """Bidirectional link; endpoint a/b each expose a Port and a LinkDir."""

    def __init__(self, link_id: str, a_port: Port, b_port: Port,
                 a2b: LinkDir, b2a: LinkDir):
        self.id = link_id
        self.a_port = a_port
        self.b_port = b_port
        self.a2b = a2b
        self.b2a = b2a
        self.failed = False

    def dirs(self) -> Tuple[LinkDir, LinkDir]:
        return (self.a2b, self.b2a)

    def endpoints(self) -> Tuple[str, str]:
        return (self.a_port.node_id, self.b_port.node_id)


OUTPUT = 0
GROUP = 1


@dataclass
class FlowRule:
    match: FlowKey
    priority: int
    instruction: Tuple[int, object]  # (OUTPUT, Port) or (GROUP, group_id)


@dataclass
class Bucket:
    watch_port: Port
    out_port: Port  # equal to watch_port in this artifact

    def is_live(self) -> bool:
        return self.watch_port.is_live()


@dataclass
class GroupEntry:
    group_id: int
    buckets: List[Bucket] = field(default_factory=list)


class Switch:
    __slots__ = ("id", "ports", "rules", "groups", "control_rx", "drops_by_flow",
                 "n_drop_noroute", "n_drop_nogroup", "n_drop_nolive",
                 "n_drop_deadport", "n_forwarded")

    def __init__(self, switch_id: str):
        self.id = switch_id
        self.ports: List[Port] = []
        self.rules: Dict[FlowKey, FlowRule] = {}
        self.groups: Dict[int, GroupEntry] = {}
        # Hook invoked for link-local control packets (BFD/LLDP); wired by
        # the detection services.
        self.control_rx: Optional[Callable[[Packet, int], None]] = None
        self.drops_by_flow: Optional[dict] = None
        self.n_drop_noroute = 0
        self.n_drop_nogroup = 0
        self.n_drop_nolive = 0
        self.n_drop_deadport = 0
        self.n_forwarded = 0

    def _attribute_drop(self, pkt: Packet) -> None:
        d = self.drops_by_flow
        if d is not None and pkt.flow_key is not None:
            d[pkt.flow_key] = d.get(pkt.flow_key, 0) + 1

    def new_port(self) -> Port:
        p = Port(self.id, len(self.ports))
        self.ports.append(p)
        return p

    def set_flow_rules(self, rules: List[FlowRule]) -> None:
        """Replace the rules for the given matches (atomic between events)."""
        for r in rules:
            self.rules[r.match] = r

    def remove_flow_rule(self, match: FlowKey) -> None:
        self.rules.pop(match, None)

    def set_group(self, entry: GroupEntry) -> None:
        self.groups[entry.group_id] = entry

    def forward_decision(self, pkt: Packet):
        """Return the egress Port, or None (reason counted)."""
        rule = self.rules.get(pkt.flow_key)
        if rule is None:
            self.n_drop_noroute += 1
            self._attribute_drop(pkt)
            return None
        kind, target = rule.instruction
        if kind == OUTPUT:
            return target
        entry = self.groups.get(target)
        if entry is None:
            self.n_drop_nogroup += 1
            self._attribute_drop(pkt)
            return None
        for bucket in entry.buckets:
            if bucket.watch_port.is_live():
                return bucket.out_port
        self.n_drop_nolive += 1
        self._attribute_drop(pkt)
        return None

    def rx(self, pkt: Packet, now_us: int) -> None:
        # Hot path; mirrors forward_decision (the reference implementation)
        # with the lookups inlined.
        kind = pkt.kind
        if 0 < kind < HTTP_REQ:
            # link-local control (LLDP/BFD) never touches the flow tables
            if self.control_rx is not None:
                self.control_rx(pkt, now_us)
            return
        rule = self.rules.get(pkt.flow_key)
        if rule is None:
            self.n_drop_noroute += 1
            self._attribute_drop(pkt)
            return
        ikind, target = rule.instruction
        if ikind == OUTPUT:
            port = target
        else:
            entry = self.groups.get(target)
            if entry is None:
                self.n_drop_nogroup += 1
                self._attribute_drop(pkt)
                return
            port = None
            for bucket in entry.buckets:
                if bucket.watch_port.live:
                    port = bucket.out_port
                    break
            if port is None:
                self.n_drop_nolive += 1
                self._attribute_drop(pkt)
                return
        if port.carrier:
            self.n_forwarded += 1
            port.out_dir.send(pkt, now_us)
        else:
            self.n_drop_deadport += 1
            self._attribute_drop(pkt)


class Host:
    __slots__ = ("id", "switch_id", "port", "link", "agent", "n_emitted", "n_received")

    def __init__(self, host_id: str, switch_id: str):
        self.id = host_id
        self.switch_id = switch_id
        self.port: Optional[Port] = None       # host-side port
        self.link: Optional[Link] = None
        self.agent: Optional[Callable[[Packet, int], None]] = None
        self.n_emitted = 0
        self.n_received = 0

    def rx(self, pkt: Packet, now_us: int) -> None:
        self.n_received += 1
        if self.agent is not None:
            self.agent(pkt, now_us)

    def emit(self, pkt: Packet, now_us: int) -> None:
        self.n_emitted += 1
        self.port.out_dir.send(pkt, now_us)


class Topology:
    """Switches, hosts, and links, plus failure injection."""

    def __init__(self, engine: Engine):
        self.engine = engine
        self.switches: Dict[str, Switch] = {}
        self.hosts: Dict[str, Host] = {}
        self.links: Dict[str, Link] = {}
        # (node_a, node_b) in either order -> Link
        self._by_pair: Dict[Tuple[str, str], Link] = {}
        self.port_status_listener: Optional[Callable[[Link, int], None]] = None
        # Link-local control traffic (BFD/LLDP) enters and leaves the packet
        # economy outside of hosts; tallied here for conservation checks.
        self.control_emitted = 0
        self.control_consumed = 0
        # flow_key -> packets dropped anywhere, shared with switches and links
        self.flow_drops: Dict[FlowKey, int] = {}

    # -- construction ------------------------------------------------------

    def add_switch(self, switch_id: str) -> Switch:
        if switch_id in self.switches:
            raise ValueError(f"duplicate switch id {switch_id!r}")
        sw = Switch(switch_id)
        sw.drops_by_flow = self.flow_drops
        self.switches[switch_id] = sw
        return sw

    def add_host(self, host_id: str, switch_id: str) -> Host:
        if host_id in self.hosts or host_id in self.switches:
            raise ValueError(f"duplicate node id {host_id!r}")
        if switch_id not in self.switches:
            raise ValueError(f"host {host_id!r} attaches to unknown switch {switch_id!r}")
        h = Host(host_id, switch_id)
        self.hosts[host_id] = h
        return h

    def _node_port(self, node_id: str) -> Port:
        if node_id in self.switches:
            return self.switches[node_id].new_port()
        host = self.hosts[node_id]
        if host.port is not None:
            raise ValueError(f"host {node_id!r} already linked")
        host.port = Port(node_id, 0)
        return host.port

    def add_link(self, a: str, b: str, capacity_bps: float, prop_us: int,
                 queue_cap: int) -> Link:
        if capacity_bps <= 0:
            raise ValueError("capacity must be > 0")
        for n in (a, b):
            if n not in self.switches and n not in self.hosts:
                raise ValueError(f"link endpoint {n!r} is not a known node")
        pair = (a, b) if a <= b else (b, a)
        if pair in self._by_pair:
            raise ValueError(f"duplicate link {a}-{b}")
        link_id = f"{a}-{b}"
        a_port = self._node_port(a)
        b_port = self._node_port(b)
        a2b = LinkDir(f"{a}->{b}", capacity_bps, prop_us, queue_cap, self.engine)
        b2a = LinkDir(f"{b}->{a}", capacity_bps, prop_us, queue_cap, self.engine)
        a2b.drops_by_flow = self.flow_drops
        b2a.drops_by_flow = self.flow_drops
        link = Link(link_id, a_port, b_port, a2b, b2a)
        a_port.out_dir, a_port.link = a2b, link
        b_port.out_dir, b_port.link = b2a, link
        a2b.src_port, a2b.dst_node = a_port, self._node(b)
        b2a.src_port, b2a.dst_node = b_port, self._node(a)
        self.links[link_id] = link
        self._by_pair[pair] = link
        if a in self.hosts:
            self.hosts[a].link = link
        if b in self.hosts:
            self.hosts[b].link = link
        return link

    def _node(self, node_id: str):
        return self.switches.get(node_id) or self.hosts[node_id]

    def link_between(self, a: str, b: str) -> Link:
        pair = (a, b) if a <= b else (b, a)
        link = self._by_pair.get(pair)
        if link is None:
            raise KeyError(f"no link {a}-{b}")
        return link

    def dir_from(self, link: Link, from_node: str) -> LinkDir:
        if link.a_port.node_id == from_node:
            return link.a2b
        if link.b_port.node_id == from_node:
            return link.b2a
        raise KeyError(f"{from_node} is not an endpoint of {link.id}")

    def switch_links(self) -> List[Link]:
        return [l for l in self.links.values()
                if l.a_port.node_id in self.switches and l.b_port.node_id in self.switches]

    # -- failure injection ---------------------------------------------------

    def inject_failure(self, link: Link, mode: FailureMode, now_us: int) -> None:
        if link.failed:
            log.warning("failure injected on already-failed link %s: no-op", link.id)
            return
        link.failed = True
        if mode is FailureMode.TRANSPARENT_CUT:
            link.a2b.cut = True
            link.b2a.cut = True
            return
        # PORT_DOWN
        for port in (link.a_port, link.b_port):
            port.set_link_layer(False)
        for d in link.dirs():
            d.flush(now_us)
        if self.port_status_listener is not None:
            self.port_status_listener(link, now_us)

    def repair(self, link: Link, now_us: int) -> None:
        """Undo a failure (test support; scenarios never schedule repairs)."""
        link.failed = False
        link.a2b.cut = False
        link.b2a.cut = False
        for port in (link.a_port, link.b_port):
            port.set_link_layer(True)

    # -- accounting ----------------------------------------------------------

    def conservation_report(self) -> Dict[str, int]:
        emitted = sum(h.n_emitted for h in self.hosts.values())
        injected = sum(d.n_entered for l in self.links.values() for d in l.dirs())
        received = sum(h.n_received for h in self.hosts.values())
        drops = {
            "queue": 0, "cut": 0, "down": 0, "flush": 0,
            "noroute": 0, "nogroup": 0, "nolive": 0, "deadport": 0,
        }
        in_flight = 0
        for l in self.links.values():
            for d in l.dirs():
                drops["queue"] += d.n_drop_queue
                drops["cut"] += d.n_drop_cut
                drops["down"] += d.n_drop_down
                drops["flush"] += d.n_drop_flush
                in_flight += d.n_outstanding
                # fast-sink deliveries beyond the horizon stay outstanding
        for s in self.switches.values():
            drops["noroute"] += s.n_drop_noroute
            drops["nogroup"] += s.n_drop_nogroup
            drops["nolive"] += s.n_drop_nolive
            drops["deadport"] += s.n_drop_deadport
        return {
            "emitted": emitted,
            "control_emitted": self.control_emitted,
            "entered_links": injected,
            "received": received,
            "control_consumed": self.control_consumed,
            "dropped": sum(drops.values()),
            "in_flight": in_flight,
            **{f"drop_{k}": v for k, v in drops.items()},
        }
