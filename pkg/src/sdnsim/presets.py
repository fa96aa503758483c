"""Experiment presets: canonical topology and the published scenario sweeps.

The canonical six-switch topology gives the S1->S6 host pair a two-hop
primary (S1-S2-S5-S6) and two equal-length alternatives diverging at S2:
via S3 (the path that background load congests) and via S4.  The S2-S5 link
is the one failures are injected on.

    S1 --- S2 --- S5 --- S6
            | \\   /|
            |  S4  |
            | /    |
           S3 -----+

Every preset expands to a list of (case_name, ScenarioConfig); sweeps carry
one config per seed.
"""
from __future__ import annotations

from typing import Dict, List, Optional, Sequence, Tuple

from .core import ms_to_us, s_to_us
from .dash import AbrConfig, Mpd, TransportConfig
from .detection import BfdConfig
from .scenario import (DashClientSpec, DashSpec, FailureSpec, HostSpec,
                       LinkSpec, ScenarioConfig, TopologySpec)
from .traffic import CbrFlowSpec

SWITCHES = ["S1", "S2", "S3", "S4", "S5", "S6"]
SWITCH_LINKS = [("S1", "S2"), ("S2", "S3"), ("S2", "S4"), ("S2", "S5"),
                ("S3", "S5"), ("S4", "S5"), ("S5", "S6")]

LINK_CAPACITY_BPS = 50e6
LINK_PROP_US = 1000
HOST_PROP_US = 100

PRESET_IDS = [
    "fig9_dpqoap_vs_static",
    "fig10_11_failure_modes",
    "fig12_bfd_sweep",
    "fig13_tqoap_sweep",
    "fig14_qoe_failure",
    "congestion_factorial",
]

DEFAULT_SEEDS = (1, 2, 3, 4, 5, 6)

Case = Tuple[str, ScenarioConfig]


def canonical_topology(hosts: Sequence[Tuple[str, str]],
                       queue_caps: Optional[Dict[Tuple[str, str], int]] = None
                       ) -> TopologySpec:
    """The six-switch topology with the given (host, switch) attachments."""
    queue_caps = queue_caps or {}
    links = []
    for a, b in SWITCH_LINKS:
        links.append(LinkSpec(a=a, b=b, capacity_bps=LINK_CAPACITY_BPS,
                              prop_delay_us=LINK_PROP_US,
                              queue_capacity=queue_caps.get((a, b), 100)))
    return TopologySpec(
        switches=list(SWITCHES),
        hosts=[HostSpec(id=h, switch=sw, link_capacity_bps=LINK_CAPACITY_BPS,
                        link_prop_delay_us=HOST_PROP_US) for h, sw in hosts],
        links=links)


def _phase_us(seed: int, idx: int) -> int:
    """Sub-millisecond per-seed start offset; sweeps packet-comb phases so
    seed-averaged queue sharing is free of deterministic resonances."""
    return (seed * 7919 + idx * 383) % 997


def _measured_flow(rate_bps: float, start_s: float, stop_s: float,
                   seed: int = 0) -> CbrFlowSpec:
    return CbrFlowSpec(name="measured", src="h1", dst="h6", rate_bps=rate_bps,
                       start_us=s_to_us(start_s) + _phase_us(seed, 0),
                       stop_us=s_to_us(stop_s), track_gap=True)


def fig9_dpqoap_vs_static(seeds: Sequence[int] = DEFAULT_SEEDS) -> List[Case]:
    """Secondary path congested at 10 s, primary link fails at 26 s: compare
    dynamic bucket re-ranking against static protection."""
    cases = []
    for strategy in ("static_protection", "dpqoap"):
        for seed in seeds:
            name = f"fig9_{strategy}_seed{seed}"
            cfg = ScenarioConfig(
                name=name,
                topology=canonical_topology(
                    [("h1", "S1"), ("h6", "S6"),
                     ("g1", "S2"), ("g2", "S2"), ("g3", "S3")]),
                strategy=strategy,
                t_qoap_us=s_to_us(2),
                cbr_flows=[_measured_flow(40e6, 2, 50, seed)] + _secondary_load(seed),
                failures=[FailureSpec(link=("S2", "S5"), mode="port_down",
                                      at_us=s_to_us(26))],
                seed=seed, duration_us=s_to_us(50))
            cfg.validate()
            cases.append((name, cfg))
    return cases


def _secondary_load(seed: int = 0) -> List[CbrFlowSpec]:
    """Two generators on S2 that fully load the S2-S3 link from 10 s on."""
    return [
        CbrFlowSpec(name=f"loader{i}", src=f"g{i}", dst="g3", rate_bps=30e6,
                    packet_size_b=1300,
                    start_us=s_to_us(10) + _phase_us(seed, i),
                    stop_us=s_to_us(50))
        for i in (1, 2)
    ]


def fig10_11_failure_modes(seeds: Sequence[int] = DEFAULT_SEEDS) -> List[Case]:
    """Single flow, one failure at 15 s: restoration vs protection under the
    port-destroying and the transparent failure, with and without BFD."""
    cases = []
    for strategy in ("restoration", "static_protection"):
        for mode in ("port_down", "transparent_cut"):
            for bfd_on in (False, True):
                for seed in seeds:
                    tag = "bfd5ms" if bfd_on else "nobfd"
                    name = f"fig10_11_{strategy}_{mode}_{tag}_seed{seed}"
                    cfg = ScenarioConfig(
                        name=name,
                        topology=canonical_topology([("h1", "S1"), ("h6", "S6")]),
                        strategy=strategy,
                        bfd=([BfdConfig(link=("S2", "S5"),
                                        tx_interval_us=ms_to_us(5), multiplier=2)]
                             if bfd_on else []),
                        cbr_flows=[_measured_flow(10e6, 2, 50)],
                        failures=[FailureSpec(link=("S2", "S5"), mode=mode,
                                              at_us=s_to_us(15))],
                        seed=seed, duration_us=s_to_us(50))
                    cfg.validate()
                    cases.append((name, cfg))
    return cases


def fig12_bfd_sweep(seeds: Sequence[int] = DEFAULT_SEEDS) -> List[Case]:
    """Packet loss across detection times 15..90 ms (tx interval = time/3)."""
    cases = []
    for detect_ms in (15, 30, 45, 60, 90):
        for seed in seeds:
            name = f"fig12_td{detect_ms}ms_seed{seed}"
            cfg = ScenarioConfig(
                name=name,
                topology=canonical_topology([("h1", "S1"), ("h6", "S6")]),
                strategy="static_protection",
                bfd=[BfdConfig(link=("S2", "S5"),
                               tx_interval_us=ms_to_us(detect_ms) // 3,
                               multiplier=2)],
                cbr_flows=[_measured_flow(10e6, 2, 50)],
                failures=[FailureSpec(link=("S2", "S5"), mode="transparent_cut",
                                      at_us=s_to_us(15))],
                seed=seed, duration_us=s_to_us(50))
            cfg.validate()
            cases.append((name, cfg))
    return cases


def fig13_tqoap_sweep(seeds: Sequence[int] = DEFAULT_SEEDS) -> List[Case]:
    """Same scenario as fig9, sweeping the evaluation interval."""
    cases = []
    variants = [("static", "static_protection", s_to_us(2))] + [
        (f"tqoap{t}s", "dpqoap", s_to_us(t)) for t in (2, 4, 7, 10)]
    for label, strategy, t_qoap in variants:
        for seed in seeds:
            name = f"fig13_{label}_seed{seed}"
            cfg = ScenarioConfig(
                name=name,
                topology=canonical_topology(
                    [("h1", "S1"), ("h6", "S6"),
                     ("g1", "S2"), ("g2", "S2"), ("g3", "S3")]),
                strategy=strategy,
                t_qoap_us=t_qoap,
                cbr_flows=[_measured_flow(40e6, 2, 50, seed)] + _secondary_load(seed),
                failures=[FailureSpec(link=("S2", "S5"), mode="port_down",
                                      at_us=s_to_us(26))],
                seed=seed, duration_us=s_to_us(50))
            cfg.validate()
            cases.append((name, cfg))
    return cases


def fig14_qoe_failure(seeds: Sequence[int] = (1,)) -> List[Case]:
    """600 s video, one failure at 300 s: per-segment quality and buffer level
    under both recovery strategies and both failure semantics."""
    cases = []
    variants = [("restoration", "port_down"),
                ("restoration", "transparent_cut"),
                ("static_protection", "port_down")]
    for strategy, mode in variants:
        for seg_s in (1, 10):
            for seed in seeds:
                name = f"fig14_{strategy}_{mode}_{seg_s}s_seed{seed}"
                cfg = ScenarioConfig(
                    name=name,
                    topology=canonical_topology([("c1", "S1"), ("srv", "S6")]),
                    strategy=strategy,
                    dash=DashSpec(
                        server_host="srv",
                        clients=[DashClientSpec(id="c1", host="c1",
                                                start_us=s_to_us(1))],
                        mpd=Mpd(resolution="1080p", segment_duration_s=seg_s,
                                total_duration_s=600),
                        abr=AbrConfig(), transport=TransportConfig()),
                    failures=[FailureSpec(link=("S2", "S5"), mode=mode,
                                          at_us=s_to_us(300))],
                    seed=seed, duration_us=s_to_us(600))
                cfg.validate()
                cases.append((name, cfg))
    return cases


def _client_start_us(seed: int, idx: int) -> int:
    """Staggered, seed-diverse start offsets (deterministic, documented)."""
    jitter_ms = (seed * 9973 + idx * 131) % 500
    return s_to_us(1) + idx * 500_000 + ms_to_us(jitter_ms)


def congestion_factorial(seeds: Sequence[int] = DEFAULT_SEEDS) -> List[Case]:
    """18 cases: segment size x iPerf load x BFD interval, five video clients,
    four background generators congesting S2-S5 from 110 s on."""
    cases = []
    bfd_variants = [("nobfd", None), ("bfd100ms", ms_to_us(100)),
                    ("bfd1000ms", ms_to_us(1000))]
    for seg_s in (10, 1):
        for load_mbps in (40, 45, 49):
            for bfd_label, t_i_us in bfd_variants:
                for seed in seeds:
                    name = f"congestion_{seg_s}s_{load_mbps}M_{bfd_label}_seed{seed}"
                    hosts = ([(f"c{i}", "S1") for i in range(1, 6)]
                             + [("srv", "S6")]
                             + [(f"t{i}", "S2") for i in range(1, 5)]
                             + [("isrv", "S5")])
                    per_gen = load_mbps * 1e6 / 4
                    starts_s = {1: 50, 2: 80, 3: 110, 4: 110}
                    cfg = ScenarioConfig(
                        name=name,
                        topology=canonical_topology(
                            hosts, queue_caps={("S2", "S5"): 400}),
                        strategy="restoration",
                        congestion_enabled=True,
                        reroute_fraction=0.5,
                        cooldown_us=s_to_us(10),
                        bfd=([BfdConfig(link=("S2", "S5"), tx_interval_us=t_i_us,
                                        multiplier=2)] if t_i_us else []),
                        cbr_flows=[
                            CbrFlowSpec(name=f"t{i}", src=f"t{i}", dst="isrv",
                                        rate_bps=per_gen,
                                        start_us=s_to_us(starts_s[i]),
                                        stop_us=s_to_us(600))
                            for i in range(1, 5)
                        ],
                        dash=DashSpec(
                            server_host="srv",
                            clients=[DashClientSpec(id=f"c{i}", host=f"c{i}",
                                                    start_us=_client_start_us(seed, i))
                                     for i in range(1, 6)],
                            mpd=Mpd(resolution="1080p", segment_duration_s=seg_s,
                                    total_duration_s=600),
                            abr=AbrConfig(), transport=TransportConfig()),
                        seed=seed, duration_us=s_to_us(600))
                    cfg.validate()
                    cases.append((name, cfg))
    return cases


_BUILDERS = {
    "fig9_dpqoap_vs_static": fig9_dpqoap_vs_static,
    "fig10_11_failure_modes": fig10_11_failure_modes,
    "fig12_bfd_sweep": fig12_bfd_sweep,
    "fig13_tqoap_sweep": fig13_tqoap_sweep,
    "fig14_qoe_failure": fig14_qoe_failure,
    "congestion_factorial": congestion_factorial,
}


def preset(preset_id: str, seeds: Optional[Sequence[int]] = None) -> List[Case]:
    """Expand a preset into concrete scenario configs (one per case and seed)."""
    try:
        builder = _BUILDERS[preset_id]
    except KeyError:
        raise ValueError(f"unknown preset {preset_id!r}; known: {PRESET_IDS}") from None
    return builder(seeds) if seeds is not None else builder()


def case_group(case_name: str) -> str:
    """Case name with the seed suffix stripped (rows of one summary line)."""
    head, _, tail = case_name.rpartition("_seed")
    return head if tail.isdigit() else case_name
