"""Centralized controller: network view, routing, and recovery strategies.

Three mutually exclusive strategies:

  * restoration       - plain output rules per flow; on a failure report the
                        controller recomputes shortest paths for the affected
                        flows and replaces their rules.
  * static_protection - all simple paths (capped) between each flow's hosts
                        are pre-installed as fast-failover group buckets; the
                        controller never reacts to failures.
  * dpqoap            - static protection plus a periodic evaluation that
                        re-ranks backup buckets by measured remaining-path
                        latency, so failover lands on the currently best
                        alternative.

An orthogonal congestion policy (restoration runs only) moves a fixed
fraction of the flows crossing a congested link onto paths that avoid it.

All controller-to-switch interaction crosses a modeled out-of-band control
channel with a fixed one-way delay, and every recomputation costs a fixed
service time; the controller serializes its work.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .core import Engine
from .dataplane import (GROUP, OUTPUT, Bucket, FlowKey, FlowRule, GroupEntry,
                        Link, Port, Topology)

log = logging.getLogger(__name__)

INFINITE_LATENCY_US = 1 << 60


@dataclass
class DpqoapConfig:
    eval_interval_us: int  # how often alternative-path quality is re-ranked

    def __post_init__(self) -> None:
        if self.eval_interval_us <= 0:
            raise ValueError("eval_interval_us must be > 0")


@dataclass
class CongestionPolicy:
    reroute_fraction: float = 0.5
    cooldown_us: int = 10_000_000

    def __post_init__(self) -> None:
        if not (0.0 < self.reroute_fraction <= 1.0):
            raise ValueError("reroute_fraction must be in (0, 1]")


@dataclass
class ControllerConfig:
    strategy: str = "restoration"  # restoration | static_protection | dpqoap
    control_delay_us: int = 2_000
    compute_time_us: int = 2_000
    k_max: int = 8
    dpqoap: Optional[DpqoapConfig] = None
    congestion: Optional[CongestionPolicy] = None


class Path:
    """A simple path from a source host to a destination host."""

    __slots__ = ("switches", "hops", "dir_hops", "src", "dst")

    def __init__(self, src: str, dst: str, switches: Tuple[str, ...],
                 hops: List[Tuple[str, Port]], dir_hops: List[Tuple[str, str]]):
        self.src = src
        self.dst = dst
        self.switches = switches          # attachment switch sequence
        self.hops = hops                  # (switch_id, egress Port) incl. host egress
        self.dir_hops = dir_hops          # (link_id, from_node) for switch-switch hops

    def uses_link(self, link_id: str) -> bool:
        return any(lid == link_id for lid, _ in self.dir_hops)

    def uses_directed(self, link_id: str, from_node: str) -> bool:
        return (link_id, from_node) in self.dir_hops

    def hop_count(self) -> int:
        return len(self.dir_hops)

    def __repr__(self):
        return f"Path({'-'.join(self.switches)})"


@dataclass
class PoolEntry:
    flow_key: FlowKey
    group_id: int
    path: Path
    routable: bool = True


class NetworkView:
    """Controller-side picture of the data plane."""

    def __init__(self, topology: Topology):
        self.topology = topology
        self.failed_links: set = set()
        # (link_id, from_node) -> latest latency sample in microseconds
        self.link_latency_us: Dict[Tuple[str, str], int] = {}
        self.stale: set = set()
        self.host_locations: Dict[str, str] = {
            h.id: h.switch_id for h in topology.hosts.values()}
        # switch -> sorted list of (neighbor switch, link_id)
        self.adjacency: Dict[str, List[Tuple[str, str]]] = {}
        for sw in topology.switches:
            self.adjacency[sw] = []
        for link in topology.switch_links():
            a, b = link.endpoints()
            self.adjacency[a].append((b, link.id))
            self.adjacency[b].append((a, link.id))
        for sw in self.adjacency:
            self.adjacency[sw].sort()

    def mark_failed(self, link_id: str) -> bool:
        if link_id in self.failed_links:
            return False
        self.failed_links.add(link_id)
        self.stale.add(link_id)
        return True

    def mark_recovered(self, link_id: str) -> None:
        self.failed_links.discard(link_id)

    def latency(self, link_id: str, from_node: str) -> int:
        sample = self.link_latency_us.get((link_id, from_node))
        if sample is None:
            link = self.topology.links[link_id]
            return self.topology.dir_from(link, from_node).prop_us
        return sample


def measure_link_latency(topology: Topology, link: Link, from_node: str,
                         now_us: int) -> int:
    """Latency estimate for one direction: propagation plus queue backlog.

    Models a timestamped probe: a new arrival waits for the serialization
    backlog in front of it, then crosses the wire.
    """
    d = topology.dir_from(link, from_node)
    return d.prop_us + d.backlog_us(now_us)


def enumerate_simple_paths(adjacency: Dict[str, List[Tuple[str, str]]],
                           src_sw: str, dst_sw: str,
                           blocked_links: set) -> List[Tuple[Tuple[str, ...], Tuple[str, ...]]]:
    """All simple switch paths src_sw..dst_sw as (switch_seq, link_id_seq)."""
    results: List[Tuple[Tuple[str, ...], Tuple[str, ...]]] = []
    seq: List[str] = [src_sw]
    links: List[str] = []
    visited = {src_sw}

    def walk(node: str) -> None:
        if node == dst_sw:
            results.append((tuple(seq), tuple(links)))
            return
        for nxt, lid in adjacency[node]:
            if nxt in visited or lid in blocked_links:
                continue
            visited.add(nxt)
            seq.append(nxt)
            links.append(lid)
            walk(nxt)
            links.pop()
            seq.pop()
            visited.discard(nxt)

    walk(src_sw)
    return results


class Controller:
    def __init__(self, config: ControllerConfig, topology: Topology, engine: Engine):
        if config.strategy not in ("restoration", "static_protection", "dpqoap"):
            raise ValueError(f"unknown strategy {config.strategy!r}")
        if config.strategy == "dpqoap" and config.dpqoap is None:
            config.dpqoap = DpqoapConfig(eval_interval_us=2_000_000)
        self.config = config
        self.topology = topology
        self.engine = engine
        self.view = NetworkView(topology)
        self.pool: Dict[FlowKey, PoolEntry] = {}
        self.group_ids: Dict[Tuple[str, str], int] = {}
        self.group_paths: Dict[int, List[Path]] = {}
        self._next_gid = 1
        self._busy_until_us = 0
        self._last_reroute_us = -(1 << 62)
        self.reroute_events: List[dict] = []
        self.unroutable_flows: set = set()
        self.bucket_pushes = 0

    # -- path computation ------------------------------------------------------

    def compute_all_paths(self, src: str, dst: str,
                          k_max: Optional[int] = -1) -> List[Path]:
        """Simple paths between two hosts, ordered by
        (hop count, summed directed latency, lexicographic switch ids)."""
        view = self.view
        if src not in view.host_locations:
            raise KeyError(f"unknown host {src!r}")
        if dst not in view.host_locations:
            raise KeyError(f"unknown host {dst!r}")
        src_sw = view.host_locations[src]
        dst_sw = view.host_locations[dst]
        raw = enumerate_simple_paths(view.adjacency, src_sw, dst_sw,
                                     view.failed_links)
        scored = []
        for seq, lids in raw:
            lat = 0
            for i, lid in enumerate(lids):
                lat += view.latency(lid, seq[i])
            scored.append((len(lids), lat, seq, lids))
        scored.sort(key=lambda t: (t[0], t[1], t[2]))
        if k_max == -1:
            k_max = self.config.k_max
        if k_max is not None:
            scored = scored[:k_max]
        return [self._materialize(src, dst, seq, lids) for _, _, seq, lids in scored]

    def _materialize(self, src: str, dst: str, seq: Tuple[str, ...],
                     lids: Tuple[str, ...]) -> Path:
        topo = self.topology
        hops: List[Tuple[str, Port]] = []
        dir_hops: List[Tuple[str, str]] = []
        for i, lid in enumerate(lids):
            link = topo.links[lid]
            out_port = link.a_port if link.a_port.node_id == seq[i] else link.b_port
            hops.append((seq[i], out_port))
            dir_hops.append((lid, seq[i]))
        host_link = topo.hosts[dst].link
        egress = (host_link.a_port if host_link.a_port.node_id == seq[-1]
                  else host_link.b_port)
        hops.append((seq[-1], egress))
        return Path(src, dst, seq, hops, dir_hops)

    # -- provisioning (run start; no control-channel delay) ---------------------

    def group_id_for(self, src: str, dst: str) -> int:
        key = (src, dst)
        gid = self.group_ids.get(key)
        if gid is None:
            gid = self._next_gid
            self._next_gid += 1
            self.group_ids[key] = gid
        return gid

    def provision_flow(self, flow_key: FlowKey) -> None:
        src, dst, _tag = flow_key
        if self.config.strategy == "restoration":
            paths = self.compute_all_paths(src, dst, k_max=1)
            if not paths:
                self.unroutable_flows.add(flow_key)
                return
            path = paths[0]
            self._install_output_rules(flow_key, path)
            self.pool[flow_key] = PoolEntry(flow_key, 0, path)
        else:
            gid = self.group_id_for(src, dst)
            paths = self.group_paths.get(gid)
            if paths is None:
                paths = self.compute_all_paths(src, dst)
                self.group_paths[gid] = paths
            if not paths:
                self.unroutable_flows.add(flow_key)
                return
            for path in paths:
                self.install_proactive_rules(flow_key, path, gid)
            self.pool[flow_key] = PoolEntry(flow_key, gid, paths[0])

    def install_proactive_rules(self, flow_key: FlowKey, path: Path, gid: int) -> None:
        """Append each hop's egress port to the switch's bucket list for the
        group (creating the list if absent) and point the flow at the group."""
        topo = self.topology
        for sw_id, out_port in path.hops:
            sw = topo.switches[sw_id]
            entry = sw.groups.get(gid)
            if entry is None:
                entry = GroupEntry(gid, [])
                sw.set_group(entry)
            if all(b.out_port is not out_port for b in entry.buckets):
                entry.buckets.append(Bucket(out_port, out_port))
            sw.set_flow_rules([FlowRule(flow_key, 1, (GROUP, gid))])

    def _install_output_rules(self, flow_key: FlowKey, path: Path) -> None:
        for sw_id, out_port in path.hops:
            self.topology.switches[sw_id].set_flow_rules(
                [FlowRule(flow_key, 1, (OUTPUT, out_port))])

    # -- control-channel plumbing ----------------------------------------------

    def _compute_done_at(self, now: int) -> int:
        start = self._busy_until_us if self._busy_until_us > now else now
        done = start + self.config.compute_time_us
        self._busy_until_us = done
        return done

    def _schedule_install(self, done_us: int, apply_fn, arg) -> None:
        self.engine.schedule(done_us + self.config.control_delay_us, apply_fn, arg)

    # -- failure handling --------------------------------------------------------

    def handle_link_failed(self, arg) -> None:
        """Failure report reaching the controller (already past control delay)."""
        link, source, _reported_at = arg
        now = self.engine.now_us
        if not self.view.mark_failed(link.id):
            return
        log.debug("controller learned %s failed via %s at %d", link.id, source, now)
        if self.config.strategy != "restoration":
            return
        affected = [fk for fk, ent in self.pool.items()
                    if ent.routable and ent.path.uses_link(link.id)]
        if not affected:
            return
        done = self._compute_done_at(now)
        updates = []
        for fk in sorted(affected):
            ent = self.pool[fk]
            paths = self.compute_all_paths(fk[0], fk[1], k_max=1)
            if not paths:
                ent.routable = False
                self.unroutable_flows.add(fk)
                continue
            ent.path = paths[0]
            updates.append((fk, paths[0]))
        if updates:
            self._schedule_install(done, self._apply_output_updates, updates)

    def handle_link_recovered(self, arg) -> None:
        link, _source, _reported_at = arg
        self.view.mark_recovered(link.id)

    def _apply_output_updates(self, updates) -> None:
        for fk, path in updates:
            self._install_output_rules(fk, path)

    # -- congestion rerouting ------------------------------------------------------

    def handle_congestion(self, arg) -> None:
        """Congestion report (link, reporting endpoint node) past control delay."""
        link, from_node, _reported_at = arg
        now = self.engine.now_us
        policy = self.config.congestion
        if policy is None:
            return
        if now - self._last_reroute_us < policy.cooldown_us:
            return
        affected = sorted(fk for fk, ent in self.pool.items()
                          if ent.routable and ent.path.uses_directed(link.id, from_node))
        n = len(affected)
        if n == 0:
            return
        k = math.ceil(policy.reroute_fraction * n)
        moved = []
        done = self._compute_done_at(now)
        for fk in affected[:k]:
            ent = self.pool[fk]
            blocked = set(self.view.failed_links)
            blocked.add(link.id)
            paths = self._paths_avoiding(fk[0], fk[1], blocked)
            if not paths:
                log.debug("congestion reroute: no alternative for %s", fk)
                continue
            ent.path = paths[0]
            moved.append((fk, paths[0]))
        self._last_reroute_us = now
        self.reroute_events.append({
            "t_us": now, "link": link.id, "from_node": from_node,
            "n_traversing": n, "n_selected": k, "n_moved": len(moved),
        })
        if moved:
            self._schedule_install(done, self._apply_output_updates, moved)

    def _paths_avoiding(self, src: str, dst: str, blocked: set) -> List[Path]:
        view = self.view
        src_sw = view.host_locations[src]
        dst_sw = view.host_locations[dst]
        raw = enumerate_simple_paths(view.adjacency, src_sw, dst_sw, blocked)
        scored = []
        for seq, lids in raw:
            lat = sum(view.latency(lid, seq[i]) for i, lid in enumerate(lids))
            scored.append((len(lids), lat, seq, lids))
        scored.sort(key=lambda t: (t[0], t[1], t[2]))
        return [self._materialize(src, dst, seq, lids) for _, _, seq, lids in scored[:1]]

    # -- periodic alternative-path evaluation (dpqoap) ------------------------------

    def start_dpqoap(self) -> None:
        assert self.config.dpqoap is not None
        self.engine.schedule(self.config.dpqoap.eval_interval_us, self._evaluate)

    def _evaluate(self, _arg=None) -> None:
        now = self.engine.now_us
        self._sample_latencies(now)
        pushes: List[Tuple[str, int, List[Bucket]]] = []
        for gid, paths in self.group_paths.items():
            if not paths:
                continue
            ranked = sorted(paths, key=self._path_rank_key)
            primary = None
            for path in ranked:
                if self._path_active(path):
                    primary = path
                    break
            if primary is None:
                continue
            pushes.extend(self._organize_bucket_list(gid, primary))
        if pushes:
            self.engine.schedule(now + self.config.control_delay_us,
                                 self._apply_bucket_orders, pushes)
        self.engine.schedule(now + self.config.dpqoap.eval_interval_us,
                             self._evaluate)

    def _sample_latencies(self, now: int) -> None:
        topo = self.topology
        for link in topo.switch_links():
            a, b = link.endpoints()
            if link.id in self.view.failed_links:
                self.view.stale.add(link.id)
                continue
            self.view.link_latency_us[(link.id, a)] = measure_link_latency(
                topo, link, a, now)
            self.view.link_latency_us[(link.id, b)] = measure_link_latency(
                topo, link, b, now)

    def _path_rank_key(self, path: Path):
        lat = 0
        for lid, frm in path.dir_hops:
            if lid in self.view.failed_links:
                lat += INFINITE_LATENCY_US
            else:
                lat += self.view.latency(lid, frm)
        return (path.hop_count(), lat, path.switches)

    def _path_active(self, path: Path) -> bool:
        return all(lid not in self.view.failed_links for lid, _ in path.dir_hops)

    def _remaining_latency(self, path: Path, sw_id: str) -> int:
        total = 0
        seen = False
        for lid, frm in path.dir_hops:
            if frm == sw_id:
                seen = True
            if seen:
                if lid in self.view.failed_links:
                    total += INFINITE_LATENCY_US
                else:
                    total += self.view.latency(lid, frm)
        return total

    def _organize_bucket_list(self, gid: int, primary: Path):
        """Re-rank each primary-path switch's backup buckets by the summed
        latency of the remaining path through them; primary bucket stays first."""
        paths = self.group_paths[gid]
        pushes = []
        for sw_id, primary_port in primary.hops:
            sw = self.topology.switches[sw_id]
            entry = sw.groups.get(gid)
            if entry is None or len(entry.buckets) < 2:
                continue
            primary_bucket = None
            others = []
            for b in entry.buckets:
                if b.out_port is primary_port and primary_bucket is None:
                    primary_bucket = b
                else:
                    others.append(b)
            if primary_bucket is None:
                continue
            ranked = sorted(others, key=lambda b: self._bucket_remaining_latency(
                paths, sw_id, b))
            new_order = [primary_bucket] + ranked
            if [b.out_port for b in new_order] != [b.out_port for b in entry.buckets]:
                pushes.append((sw_id, gid, new_order))
        return pushes

    def _bucket_remaining_latency(self, paths: Sequence[Path], sw_id: str,
                                  bucket: Bucket) -> int:
        best = INFINITE_LATENCY_US
        for path in paths:
            for hop_sw, port in path.hops:
                if hop_sw == sw_id and port is bucket.out_port:
                    lat = self._remaining_latency(path, sw_id)
                    if lat < best:
                        best = lat
        return best

    def _apply_bucket_orders(self, pushes) -> None:
        for sw_id, gid, new_order in pushes:
            self.topology.switches[sw_id].set_group(GroupEntry(gid, new_order))
            self.bucket_pushes += 1
