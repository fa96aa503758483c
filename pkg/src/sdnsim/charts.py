"""Optional SVG chart emission mirroring the experiment figure layouts."""
from __future__ import annotations

import os
from typing import List, Sequence

from .core import US_PER_S
from .presets import case_group
from .runner import RunResult, summarize
from .traffic import THROUGHPUT_BIN_US


def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _throughput_series(result: RunResult, flow: str):
    bins = result.flows[flow]["bins"]
    if not bins:
        return [], []
    last = result.duration_us // THROUGHPUT_BIN_US
    xs, ys = [], []
    for idx in range(0, last):
        xs.append((idx + 1) * THROUGHPUT_BIN_US / US_PER_S)
        ys.append(bins.get(idx, 0) * (US_PER_S / THROUGHPUT_BIN_US) / 1e6)
    return xs, ys


def _one_per_group(results: Sequence[RunResult]) -> List[RunResult]:
    seen = {}
    for r in results:
        seen.setdefault(case_group(r.case), r)
    return list(seen.values())


def emit_preset_svg(preset_id: str, results: Sequence[RunResult],
                    out_dir: str) -> str:
    plt = _plt()
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{preset_id}.svg")
    if preset_id in ("fig9_dpqoap_vs_static", "fig10_11_failure_modes",
                     "fig14_qoe_failure"):
        picks = _one_per_group(results)
        if preset_id == "fig14_qoe_failure":
            fig, axes = plt.subplots(1, 2, figsize=(10, 4))
            for r in picks:
                for client, series in r.buffer_series.items():
                    xs = [t / US_PER_S for t, _ in series]
                    ys = [b / US_PER_S for _, b in series]
                    axes[0].plot(xs, ys, label=case_group(r.case), linewidth=0.8)
                for client, samples in (r.qoe["samples"] or {}).items():
                    xs = [s[0] / US_PER_S for s in samples]
                    ys = [s[2] for s in samples]
                    axes[1].plot(xs, ys, label=case_group(r.case), linewidth=0.8)
            axes[0].set_ylabel("buffer (s)")
            axes[1].set_ylabel("quality value")
            for ax in axes:
                ax.set_xlabel("time (s)")
                ax.legend(fontsize=5)
        else:
            fig, ax = plt.subplots(figsize=(7, 4))
            for r in picks:
                flow = next((n for n, f in r.flows.items()
                             if f["recovery_gap_us"] is not None), None)
                flow = flow or next(iter(r.flows), None)
                if flow is None:
                    continue
                xs, ys = _throughput_series(r, flow)
                ax.plot(xs, ys, label=case_group(r.case), linewidth=0.8)
            ax.set_xlabel("time (s)")
            ax.set_ylabel("throughput (Mbit/s)")
            ax.legend(fontsize=6)
    elif preset_id in ("fig12_bfd_sweep", "fig13_tqoap_sweep"):
        rows = summarize(results)
        fig, ax = plt.subplots(figsize=(6, 4))
        labels = [row["case"] for row in rows]
        losses = [(row["packet_loss"] or 0) * 100 for row in rows]
        ax.bar(range(len(labels)), losses)
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=6)
        ax.set_ylabel("packet loss (%)")
    else:  # congestion_factorial: the four QoE panels
        rows = summarize(results)
        fig, axes = plt.subplots(1, 4, figsize=(16, 4))
        labels = [row["case"] for row in rows]
        panels = [("avg_bitrate_kbps", "bitrate (kbit/s)"),
                  ("avg_quality", "quality value"),
                  ("avg_latency_us", "latency (us)"),
                  ("avg_switch_count", "quality switches")]
        for ax, (key, title) in zip(axes, panels):
            ax.bar(range(len(labels)), [(row[key] or 0) for row in rows])
            ax.set_xticks(range(len(labels)))
            ax.set_xticklabels(labels, rotation=90, fontsize=4)
            ax.set_ylabel(title)
    fig.suptitle(preset_id)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path
