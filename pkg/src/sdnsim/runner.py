"""Build a simulation from a scenario, drive it, and emit results.

A run produces a RunResult of plain dictionaries (picklable for the sweep
runner).  Conservation invariants are verified after every run and a
violation raises with diagnostics.  CSV output is canonical: rows sorted,
floats formatted with fixed precision, the fully resolved config embedded in
a comment header, so identical seeds yield byte-identical files.
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .controller import Controller
from .core import Engine, US_PER_S
from .dash import DashClient, DashServer, qoe_aggregate
from .dataplane import FailureMode, Topology
from .detection import BfdSession, LldpService, make_control_dispatcher
from .presets import case_group, preset
from .scenario import ScenarioConfig
from .traffic import (THROUGHPUT_BIN_US, CbrSink, CbrSource, FlowStats,
                      packet_loss, recovery_gap)


class ConservationError(AssertionError):
    """A run-level invariant was violated; carries diagnostics."""


@dataclass
class RunResult:
    case: str
    config: dict
    events_processed: int
    duration_us: int
    flows: Dict[str, dict] = field(default_factory=dict)
    qoe: Optional[dict] = None
    buffer_series: Dict[str, list] = field(default_factory=dict)
    reroute_events: List[dict] = field(default_factory=list)
    conservation: Dict[str, int] = field(default_factory=dict)
    unroutable_flows: List[tuple] = field(default_factory=list)


class Simulation:
    """Owns the engine and all wired components for one scenario."""

    def __init__(self, cfg: ScenarioConfig):
        cfg.validate()
        self.cfg = cfg
        self.engine = Engine(cfg.seed)
        self.topology = Topology(self.engine)
        self._build_topology()
        self.controller = Controller(cfg.controller_config(), self.topology,
                                     self.engine)
        self.flow_stats: Dict[str, FlowStats] = {}
        self.flow_drops = self.topology.flow_drops
        self._sinks: Dict[str, CbrSink] = {}
        self._sources: List[CbrSource] = []
        self.dash_clients: List[DashClient] = []
        self._build_detection()
        self._build_traffic()
        self._build_dash()
        self._provision()
        self._schedule_failures()

    # -- construction -------------------------------------------------------

    def _build_topology(self) -> None:
        topo = self.topology
        for sw in self.cfg.topology.switches:
            topo.add_switch(sw)
        for h in self.cfg.topology.hosts:
            topo.add_host(h.id, h.switch)
        for l in self.cfg.topology.links:
            topo.add_link(l.a, l.b, l.capacity_bps, l.prop_delay_us,
                          l.queue_capacity)
        for h in self.cfg.topology.hosts:
            topo.add_link(h.id, h.switch, h.link_capacity_bps,
                          h.link_prop_delay_us, h.link_queue_capacity)

    def _build_detection(self) -> None:
        cfg = self.cfg
        engine = self.engine
        topo = self.topology
        ctl = self.controller
        delay = cfg.control_delay_us

        def on_port_status(link, now):
            engine.schedule(now + delay, ctl.handle_link_failed,
                            (link, "port_status", now))

        topo.port_status_listener = on_port_status

        self.lldp = None
        if cfg.lldp.enabled:
            def lldp_failed(link, source, now):
                ctl.handle_link_failed((link, source, now))
            self.lldp = LldpService(cfg.lldp, topo, engine, delay, lldp_failed)

        self.bfd_sessions: List[BfdSession] = []
        for bcfg in cfg.bfd:
            if not bcfg.enabled:
                continue
            link = topo.link_between(*bcfg.link)
            session = BfdSession(bcfg, link, topo, engine)

            def on_down(lnk, node, now):
                engine.schedule(now + delay, ctl.handle_link_failed,
                                (lnk, "bfd", now))

            def on_up(lnk, node, now):
                engine.schedule(now + delay, ctl.handle_link_recovered,
                                (lnk, "bfd", now))

            def on_congestion(lnk, node, now):
                engine.schedule(now + delay, ctl.handle_congestion,
                                (lnk, node, now))

            session.on_down = on_down
            session.on_up = on_up
            session.on_congestion = on_congestion
            self.bfd_sessions.append(session)

        dispatcher = make_control_dispatcher(topo, self.lldp)
        for sw in topo.switches.values():
            sw.control_rx = dispatcher

    def _build_traffic(self) -> None:
        failed_hosts = {n for f in self.cfg.failures for n in f.link}
        dash_hosts = set()
        if self.cfg.dash is not None:
            dash_hosts.add(self.cfg.dash.server_host)
            dash_hosts.update(c.host for c in self.cfg.dash.clients)
        src_counts: Dict[str, int] = {}
        for spec in self.cfg.cbr_flows:
            src_counts[spec.src] = src_counts.get(spec.src, 0) + 1
        for spec in self.cfg.cbr_flows:
            stats = FlowStats(spec)
            self.flow_stats[spec.name] = stats
            sink = self._sinks.get(spec.dst)
            if sink is None:
                sink = CbrSink()
                self._sinks[spec.dst] = sink
                host = self.topology.hosts[spec.dst]
                host.agent = sink.on_rx
                # Terminal host links into passive sinks skip the delivery
                # event; only safe when the link can never fail.
                if spec.dst not in failed_hosts and spec.dst not in dash_hosts:
                    d = self.topology.dir_from(host.link, host.switch_id)
                    d.fast_sink = host.rx
                    d.horizon_us = self.cfg.duration_us
            sink.register(stats)
            src_host = self.topology.hosts[spec.src]
            shortcut = (src_counts[spec.src] == 1
                        and spec.src not in failed_hosts
                        and spec.src not in dash_hosts)
            source = CbrSource(spec, src_host, self.engine, stats,
                               shortcut=shortcut)
            self._sources.append(source)
            source.start()

    def _build_dash(self) -> None:
        d = self.cfg.dash
        if d is None:
            return
        server_host = self.topology.hosts[d.server_host]
        self.dash_server = DashServer(server_host)
        for c in d.clients:
            client = DashClient(c.id, self.topology.hosts[c.host],
                                d.server_host, d.mpd, d.abr, d.transport,
                                self.engine, c.start_us)
            self.dash_clients.append(client)
            client.start()

    def _provision(self) -> None:
        for spec in self.cfg.cbr_flows:
            self.controller.provision_flow(spec.flow_key())
        for client in self.dash_clients:
            self.controller.provision_flow(client.up_key)
            self.controller.provision_flow(client.down_key)

    def _schedule_failures(self) -> None:
        topo = self.topology
        for f in self.cfg.failures:
            link = topo.link_between(*f.link)
            mode = FailureMode(f.mode)

            def inject(arg, _topo=topo):
                lnk, md = arg
                _topo.inject_failure(lnk, md, _topo.engine.now_us)

            self.engine.schedule(f.at_us, inject, (link, mode))

    # -- execution ------------------------------------------------------------

    def run(self) -> RunResult:
        cfg = self.cfg
        if self.lldp is not None:
            self.lldp.start()
        for session in self.bfd_sessions:
            session.start()
        if cfg.strategy == "dpqoap":
            self.controller.start_dpqoap()
        processed = self.engine.run_until(cfg.duration_us)
        now = self.engine.now_us
        for client in self.dash_clients:
            client.close(now)
        result = self._collect(processed)
        self._verify_conservation(result)
        return result

    def _collect(self, processed: int) -> RunResult:
        cfg = self.cfg
        failure_us = min((f.at_us for f in cfg.failures), default=None)
        flows = {}
        for name, stats in self.flow_stats.items():
            spec = stats.spec
            drops = self.flow_drops.get(spec.flow_key(), 0)
            in_flight = stats.sent - stats.received - drops
            entry = {
                "sent": stats.sent,
                "received": stats.received,
                "dropped": drops,
                "in_flight": in_flight,
                "received_payload_bits": stats.received_payload_bits,
                "loss_ratio": packet_loss(stats, in_flight),
                "bins": dict(stats.bins),
                "recovery_gap_us": None,
            }
            if stats.arrivals_us is not None and failure_us is not None:
                horizon = min(spec.stop_us + US_PER_S, cfg.duration_us)
                entry["recovery_gap_us"] = recovery_gap(
                    stats.arrivals_us, failure_us, spec.nominal_spacing_us(),
                    horizon_us=horizon)
            flows[name] = entry
        qoe = qoe_aggregate(self.dash_clients) if self.dash_clients else None
        buffers = {c.id: list(c.buffer_series) for c in self.dash_clients}
        if qoe is not None:
            qoe["samples"] = {
                c.id: [(s.t_us, s.bitrate_kbps, s.quality, s.latency_us,
                        1 if s.switch else 0) for s in c.samples]
                for c in self.dash_clients}
        return RunResult(
            case=cfg.name,
            config=cfg.to_dict(),
            events_processed=processed,
            duration_us=cfg.duration_us,
            flows=flows,
            qoe=qoe,
            buffer_series=buffers,
            reroute_events=list(self.controller.reroute_events),
            conservation=self.topology.conservation_report(),
            unroutable_flows=sorted(self.controller.unroutable_flows),
        )

    def _verify_conservation(self, result: RunResult) -> None:
        rep = result.conservation
        total_in = rep["emitted"] + rep["control_emitted"]
        total_out = (rep["received"] + rep["control_consumed"]
                     + rep["dropped"] + rep["in_flight"])
        if total_in != total_out:
            raise ConservationError(
                f"{self.cfg.name}: packet conservation violated: "
                f"in={total_in} out={total_out} detail={rep}")
        for name, f in result.flows.items():
            if f["in_flight"] < 0:
                raise ConservationError(
                    f"{self.cfg.name}: flow {name} negative in-flight: {f}")
            if sum(f["bins"].values()) != f["received_payload_bits"]:
                raise ConservationError(
                    f"{self.cfg.name}: flow {name} throughput bins do not "
                    f"integrate to received bits")
        now = self.engine.now_us
        for client in self.dash_clients:
            client.verify_conservation(now)


def run_scenario(cfg: ScenarioConfig) -> RunResult:
    return Simulation(cfg).run()


def _run_case(args: Tuple[str, ScenarioConfig]) -> RunResult:
    name, cfg = args
    result = run_scenario(cfg)
    result.case = name
    return result


def run_cases(cases: Sequence[Tuple[str, ScenarioConfig]],
              jobs: int = 1) -> List[RunResult]:
    """Run independent cases, optionally in parallel; order is preserved."""
    if jobs <= 1 or len(cases) <= 1:
        return [_run_case(c) for c in cases]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_case, cases))


# -- CSV / file emission -------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return format(v, ".6f")
    return str(v)


def _meta_lines(result: RunResult) -> List[str]:
    return [
        "# generator=sdnsim",
        f"# case={result.case}",
        f"# events={result.events_processed}",
        "# config=" + json.dumps(result.config, sort_keys=True,
                                 separators=(",", ":")),
    ]


def emit_run_csvs(result: RunResult, out_dir: str) -> List[str]:
    """Write <case>_timeseries.csv and, when video ran, <case>_qoe.csv."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    rows: List[Tuple[int, str, str, str]] = []
    for name, f in sorted(result.flows.items()):
        for idx, bits in sorted(f["bins"].items()):
            rows.append(((idx + 1) * THROUGHPUT_BIN_US, "rx_bits", name,
                         str(bits)))
        rows.append((result.duration_us, "loss_ratio", name,
                     _fmt(f["loss_ratio"])))
        if f["recovery_gap_us"] is not None:
            rows.append((result.duration_us, "recovery_gap_us", name,
                         str(f["recovery_gap_us"])))
    for client, series in sorted(result.buffer_series.items()):
        for t, buf_us in series:
            rows.append((t, "buffer_s", client, _fmt(buf_us / US_PER_S)))
    for ev in result.reroute_events:
        rows.append((ev["t_us"], "reroute_flows", ev["link"],
                     str(ev["n_moved"])))
    if result.qoe is not None:
        for client, pc in sorted(result.qoe["per_client"].items()):
            rows.append((result.duration_us, "stall_time_s", client,
                         _fmt(pc["stall_time_us"] / US_PER_S)))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    ts_path = os.path.join(out_dir, f"{result.case}_timeseries.csv")
    with open(ts_path, "w", encoding="utf-8", newline="\n") as fh:
        for line in _meta_lines(result):
            fh.write(line + "\n")
        fh.write("t_us,metric,entity,value\n")
        for t, metric, entity, value in rows:
            fh.write(f"{t},{metric},{entity},{value}\n")
    written.append(ts_path)
    if result.qoe is not None:
        qoe_path = os.path.join(out_dir, f"{result.case}_qoe.csv")
        qrows = []
        for client, samples in sorted(result.qoe["samples"].items()):
            for t, kbps, quality, latency, switch in samples:
                qrows.append((t, client, kbps, quality, latency, switch))
        qrows.sort(key=lambda r: (r[0], r[1]))
        with open(qoe_path, "w", encoding="utf-8", newline="\n") as fh:
            for line in _meta_lines(result):
                fh.write(line + "\n")
            fh.write("t_us,client,bitrate_kbps,quality,latency_us,switch\n")
            for t, client, kbps, quality, latency, switch in qrows:
                fh.write(f"{t},{client},{kbps},{_fmt(quality)},{latency},{switch}\n")
        written.append(qoe_path)
    return written


def _mean(values) -> Optional[float]:
    vals = [v for v in values if v is not None]
    return sum(vals) / len(vals) if vals else None


def summarize(results: Sequence[RunResult]) -> List[dict]:
    """One summary row per case group: plain means over seeds."""
    groups: Dict[str, List[RunResult]] = {}
    for r in results:
        groups.setdefault(case_group(r.case), []).append(r)
    rows = []
    for group in sorted(groups):
        runs = groups[group]
        qoe_runs = [r for r in runs if r.qoe is not None]
        losses, gaps = [], []
        for r in runs:
            flow_losses = [f["loss_ratio"] for f in r.flows.values()
                           if f["loss_ratio"] is not None]
            if flow_losses:
                losses.append(sum(flow_losses) / len(flow_losses))
            for f in r.flows.values():
                if f["recovery_gap_us"] is not None:
                    gaps.append(f["recovery_gap_us"])
        rows.append({
            "case": group,
            "seed_count": len(runs),
            "avg_bitrate_kbps": _mean(r.qoe["fleet"]["avg_bitrate_kbps"]
                                      for r in qoe_runs),
            "avg_quality": _mean(r.qoe["fleet"]["avg_quality"] for r in qoe_runs),
            "avg_latency_us": _mean(r.qoe["fleet"]["avg_latency_us"]
                                    for r in qoe_runs),
            "avg_switch_count": _mean(r.qoe["fleet"]["avg_switch_count"]
                                      for r in qoe_runs),
            "packet_loss": _mean(losses),
            "recovery_gap_us": _mean(gaps),
        })
    return rows


SUMMARY_COLUMNS = ["case", "seed_count", "avg_bitrate_kbps", "avg_quality",
                   "avg_latency_us", "avg_switch_count", "packet_loss",
                   "recovery_gap_us"]


def emit_summary(results: Sequence[RunResult], out_dir: str,
                 filename: str = "summary.csv") -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, filename)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(SUMMARY_COLUMNS) + "\n")
        for row in summarize(results):
            fh.write(",".join(_fmt(row[c]) for c in SUMMARY_COLUMNS) + "\n")
    return path


def run_preset(preset_id: str, out_dir: str, seeds=None, jobs: int = 1,
               svg: bool = False) -> List[RunResult]:
    """Expand a preset, run every case, and emit per-run CSVs plus a summary."""
    cases = preset(preset_id, seeds=seeds)
    results = run_cases(cases, jobs=jobs)
    for r in results:
        emit_run_csvs(r, out_dir)
    emit_summary(results, out_dir)
    if svg:
        from . import charts
        charts.emit_preset_svg(preset_id, results, out_dir)
    return results
