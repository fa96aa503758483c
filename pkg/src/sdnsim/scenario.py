"""Scenario files: a JSON tree describing topology, strategy, detection,
failures, traffic, video workload, and the run itself.

Every field has a resolved default and `to_dict` echoes the fully resolved
tree, so an emitted CSV carrying the config is self-describing.  Validation
errors name the offending location in the tree.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

from .controller import CongestionPolicy, ControllerConfig, DpqoapConfig
from .dash import AbrConfig, Mpd, TransportConfig
from .detection import BfdConfig, LldpConfig
from .traffic import CbrFlowSpec

STRATEGIES = ("restoration", "static_protection", "dpqoap")
FAILURE_MODES = ("port_down", "transparent_cut")
# Group types other than fast-failover are recognized but rejected.
GROUP_TYPES = ("fast_failover", "all", "select", "indirect")


class ScenarioError(ValueError):
    """Scenario validation problem, with the location in the tree."""

    def __init__(self, location: str, message: str):
        super().__init__(f"{location}: {message}")
        self.location = location


@dataclass
class LinkSpec:
    a: str
    b: str
    capacity_bps: float = 50e6
    prop_delay_us: int = 1000
    queue_capacity: int = 100


@dataclass
class HostSpec:
    id: str
    switch: str
    link_capacity_bps: float = 50e6
    link_prop_delay_us: int = 100
    link_queue_capacity: int = 100


@dataclass
class TopologySpec:
    switches: List[str] = field(default_factory=list)
    hosts: List[HostSpec] = field(default_factory=list)
    links: List[LinkSpec] = field(default_factory=list)


@dataclass
class FailureSpec:
    link: Tuple[str, str]
    mode: str
    at_us: int


@dataclass
class DashClientSpec:
    id: str
    host: str
    start_us: int = 1_000_000


@dataclass
class DashSpec:
    server_host: str
    clients: List[DashClientSpec] = field(default_factory=list)
    mpd: Mpd = field(default_factory=Mpd)
    abr: AbrConfig = field(default_factory=AbrConfig)
    transport: TransportConfig = field(default_factory=TransportConfig)


@dataclass
class ScenarioConfig:
    name: str
    topology: TopologySpec
    strategy: str = "restoration"
    group_type: str = "fast_failover"
    control_delay_us: int = 2_000
    compute_time_us: int = 2_000
    k_max: int = 8
    t_qoap_us: int = 2_000_000
    congestion_enabled: bool = False
    reroute_fraction: float = 0.5
    cooldown_us: int = 10_000_000
    bfd: List[BfdConfig] = field(default_factory=list)
    lldp: LldpConfig = field(default_factory=LldpConfig)
    failures: List[FailureSpec] = field(default_factory=list)
    cbr_flows: List[CbrFlowSpec] = field(default_factory=list)
    dash: Optional[DashSpec] = None
    seed: int = 1
    duration_us: int = 50_000_000

    def controller_config(self) -> ControllerConfig:
        return ControllerConfig(
            strategy=self.strategy,
            control_delay_us=self.control_delay_us,
            compute_time_us=self.compute_time_us,
            k_max=self.k_max,
            dpqoap=DpqoapConfig(self.t_qoap_us) if self.strategy == "dpqoap" else None,
            congestion=(CongestionPolicy(self.reroute_fraction, self.cooldown_us)
                        if self.congestion_enabled else None),
        )

    def validate(self) -> None:
        loc = f"scenario {self.name!r}"
        if self.strategy not in STRATEGIES:
            raise ScenarioError(f"{loc}.strategy",
                                f"unknown strategy {self.strategy!r}")
        if self.group_type != "fast_failover":
            raise ScenarioError(f"{loc}.group_type",
                                f"group type {self.group_type!r} is recognized "
                                "but not supported; only fast_failover is")
        if self.duration_us <= 0:
            raise ScenarioError(f"{loc}.run.duration_us", "must be > 0")
        nodes = set(self.topology.switches)
        if len(nodes) != len(self.topology.switches):
            raise ScenarioError(f"{loc}.topology.switches", "duplicate switch id")
        host_ids = set()
        for h in self.topology.hosts:
            if h.switch not in nodes:
                raise ScenarioError(f"{loc}.topology.hosts[{h.id}]",
                                    f"unknown switch {h.switch!r}")
            if h.id in host_ids or h.id in nodes:
                raise ScenarioError(f"{loc}.topology.hosts[{h.id}]", "duplicate id")
            host_ids.add(h.id)
        pairs = set()
        for l in self.topology.links:
            for n in (l.a, l.b):
                if n not in nodes:
                    raise ScenarioError(f"{loc}.topology.links[{l.a}-{l.b}]",
                                        f"unknown switch {n!r}")
            pair = tuple(sorted((l.a, l.b)))
            if pair in pairs:
                raise ScenarioError(f"{loc}.topology.links[{l.a}-{l.b}]", "duplicate link")
            pairs.add(pair)
            if l.capacity_bps <= 0:
                raise ScenarioError(f"{loc}.topology.links[{l.a}-{l.b}].capacity_bps",
                                    "must be > 0")
        def check_link_ref(what: str, ab: Tuple[str, str]) -> None:
            if tuple(sorted(ab)) not in pairs:
                raise ScenarioError(f"{loc}.{what}", f"references undefined link "
                                                     f"{ab[0]}-{ab[1]}")
        for i, b in enumerate(self.bfd):
            check_link_ref(f"bfd[{i}]", tuple(b.link))
        for i, f in enumerate(self.failures):
            check_link_ref(f"failures[{i}]", tuple(f.link))
            if f.mode not in FAILURE_MODES:
                raise ScenarioError(f"{loc}.failures[{i}].mode",
                                    f"unknown mode {f.mode!r}")
        for flow in self.cbr_flows:
            for h in (flow.src, flow.dst):
                if h not in host_ids:
                    raise ScenarioError(f"{loc}.cbr_flows[{flow.name}]",
                                        f"unknown host {h!r}")
        if self.dash is not None:
            if self.dash.server_host not in host_ids:
                raise ScenarioError(f"{loc}.dash.server_host",
                                    f"unknown host {self.dash.server_host!r}")
            for c in self.dash.clients:
                if c.host not in host_ids:
                    raise ScenarioError(f"{loc}.dash.clients[{c.id}]",
                                        f"unknown host {c.host!r}")

    # -- (de)serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "topology": {
                "switches": list(self.topology.switches),
                "hosts": [asdict(h) for h in self.topology.hosts],
                "links": [asdict(l) for l in self.topology.links],
            },
            "strategy": self.strategy,
            "group_type": self.group_type,
            "controller": {
                "control_delay_us": self.control_delay_us,
                "compute_time_us": self.compute_time_us,
                "k_max": self.k_max,
                "t_qoap_us": self.t_qoap_us,
            },
            "congestion": {
                "enabled": self.congestion_enabled,
                "reroute_fraction": self.reroute_fraction,
                "cooldown_us": self.cooldown_us,
            },
            "bfd": [{"link": list(b.link), "t_i_us": b.tx_interval_us,
                     "m": b.multiplier, "enabled": b.enabled} for b in self.bfd],
            "lldp": {"update_interval_us": self.lldp.update_interval_us,
                     "detection_factor": self.lldp.detection_factor,
                     "enabled": self.lldp.enabled},
            "failures": [{"link": list(f.link), "mode": f.mode, "at_us": f.at_us}
                         for f in self.failures],
            "cbr_flows": [asdict(f) for f in self.cbr_flows],
            "run": {"seed": self.seed, "duration_us": self.duration_us},
        }
        if self.dash is not None:
            d["dash"] = {
                "server_host": self.dash.server_host,
                "clients": [asdict(c) for c in self.dash.clients],
                "mpd": asdict(self.dash.mpd),
                "abr": asdict(self.dash.abr),
                "transport": asdict(self.dash.transport),
            }
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _take(d: dict, loc: str, known: set) -> None:
    unknown = set(d) - known
    if unknown:
        raise ScenarioError(loc, f"unknown keys {sorted(unknown)}")


def _get(d: dict, key: str, loc: str, required: bool = True, default=None):
    if key not in d:
        if required:
            raise ScenarioError(loc, f"missing required key {key!r}")
        return default
    return d[key]


def from_dict(d: dict) -> ScenarioConfig:
    loc = "scenario"
    _take(d, loc, {"name", "topology", "strategy", "group_type", "controller",
                   "congestion", "bfd", "lldp", "failures", "cbr_flows",
                   "dash", "run"})
    name = _get(d, "name", loc)
    topo_d = _get(d, "topology", loc)
    _take(topo_d, f"{loc}.topology", {"switches", "hosts", "links"})
    hosts = []
    for h in topo_d.get("hosts", []):
        _take(h, f"{loc}.topology.hosts", {"id", "switch", "link_capacity_bps",
                                           "link_prop_delay_us", "link_queue_capacity"})
        hosts.append(HostSpec(
            id=_get(h, "id", f"{loc}.topology.hosts"),
            switch=_get(h, "switch", f"{loc}.topology.hosts"),
            link_capacity_bps=h.get("link_capacity_bps", 50e6),
            link_prop_delay_us=h.get("link_prop_delay_us", 100),
            link_queue_capacity=h.get("link_queue_capacity", 100)))
    links = []
    for l in topo_d.get("links", []):
        _take(l, f"{loc}.topology.links", {"a", "b", "capacity_bps",
                                           "prop_delay_us", "queue_capacity"})
        links.append(LinkSpec(
            a=_get(l, "a", f"{loc}.topology.links"),
            b=_get(l, "b", f"{loc}.topology.links"),
            capacity_bps=l.get("capacity_bps", 50e6),
            prop_delay_us=l.get("prop_delay_us", 1000),
            queue_capacity=l.get("queue_capacity", 100)))
    topo = TopologySpec(switches=list(topo_d.get("switches", [])),
                        hosts=hosts, links=links)
    ctl = d.get("controller", {})
    _take(ctl, f"{loc}.controller", {"control_delay_us", "compute_time_us",
                                     "k_max", "t_qoap_us"})
    cong = d.get("congestion", {})
    _take(cong, f"{loc}.congestion", {"enabled", "reroute_fraction", "cooldown_us"})
    bfd = []
    for i, b in enumerate(d.get("bfd", [])):
        _take(b, f"{loc}.bfd[{i}]", {"link", "t_i_us", "m", "enabled"})
        t_i = _get(b, "t_i_us", f"{loc}.bfd[{i}]")
        if t_i <= 0:
            raise ScenarioError(f"{loc}.bfd[{i}].t_i_us", "must be > 0")
        bfd.append(BfdConfig(link=tuple(_get(b, "link", f"{loc}.bfd[{i}]")),
                             tx_interval_us=t_i,
                             multiplier=_get(b, "m", f"{loc}.bfd[{i}]"),
                             enabled=b.get("enabled", True)))
    lldp_d = d.get("lldp", {})
    _take(lldp_d, f"{loc}.lldp", {"update_interval_us", "detection_factor", "enabled"})
    lldp = LldpConfig(update_interval_us=lldp_d.get("update_interval_us", 12_000_000),
                      detection_factor=lldp_d.get("detection_factor", 2),
                      enabled=lldp_d.get("enabled", True))
    failures = []
    for i, f in enumerate(d.get("failures", [])):
        _take(f, f"{loc}.failures[{i}]", {"link", "mode", "at_us"})
        failures.append(FailureSpec(link=tuple(_get(f, "link", f"{loc}.failures[{i}]")),
                                    mode=_get(f, "mode", f"{loc}.failures[{i}]"),
                                    at_us=_get(f, "at_us", f"{loc}.failures[{i}]")))
    flows = []
    for i, f in enumerate(d.get("cbr_flows", [])):
        floc = f"{loc}.cbr_flows[{i}]"
        _take(f, floc, {"name", "src", "dst", "rate_bps", "packet_size_b",
                        "start_us", "stop_us", "track_gap"})
        try:
            flows.append(CbrFlowSpec(
                name=_get(f, "name", floc), src=_get(f, "src", floc),
                dst=_get(f, "dst", floc), rate_bps=_get(f, "rate_bps", floc),
                packet_size_b=f.get("packet_size_b", 1470),
                start_us=_get(f, "start_us", floc),
                stop_us=_get(f, "stop_us", floc),
                track_gap=f.get("track_gap", False)))
        except ValueError as e:
            raise ScenarioError(floc, str(e)) from None
    dash = None
    if d.get("dash") is not None:
        dd = d["dash"]
        _take(dd, f"{loc}.dash", {"server_host", "clients", "mpd", "abr", "transport"})
        clients = []
        for c in dd.get("clients", []):
            _take(c, f"{loc}.dash.clients", {"id", "host", "start_us"})
            clients.append(DashClientSpec(id=_get(c, "id", f"{loc}.dash.clients"),
                                          host=_get(c, "host", f"{loc}.dash.clients"),
                                          start_us=c.get("start_us", 1_000_000)))
        try:
            mpd = Mpd(**dd.get("mpd", {}))
            abr = AbrConfig(**dd.get("abr", {}))
            transport = TransportConfig(**dd.get("transport", {}))
        except (TypeError, ValueError) as e:
            raise ScenarioError(f"{loc}.dash", str(e)) from None
        dash = DashSpec(server_host=_get(dd, "server_host", f"{loc}.dash"),
                        clients=clients, mpd=mpd, abr=abr, transport=transport)
    run = d.get("run", {})
    _take(run, f"{loc}.run", {"seed", "duration_us"})
    cfg = ScenarioConfig(
        name=name, topology=topo,
        strategy=d.get("strategy", "restoration"),
        group_type=d.get("group_type", "fast_failover"),
        control_delay_us=ctl.get("control_delay_us", 2_000),
        compute_time_us=ctl.get("compute_time_us", 2_000),
        k_max=ctl.get("k_max", 8),
        t_qoap_us=ctl.get("t_qoap_us", 2_000_000),
        congestion_enabled=cong.get("enabled", False),
        reroute_fraction=cong.get("reroute_fraction", 0.5),
        cooldown_us=cong.get("cooldown_us", 10_000_000),
        bfd=bfd, lldp=lldp, failures=failures, cbr_flows=flows, dash=dash,
        seed=run.get("seed", 1), duration_us=run.get("duration_us", 50_000_000))
    cfg.validate()
    return cfg


def load_scenario(path: str) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            tree = json.load(fh)
        except json.JSONDecodeError as e:
            raise ScenarioError(path, f"invalid JSON: {e}") from None
    return from_dict(tree)
