"""Segment-based adaptive video: server, clients, quality model, QoE metrics.

The client downloads fixed-duration segments over a reliable self-clocked
transport: each request pulls a window of chunk packets from the server, the
next window is requested once the previous one fully arrived, and a lost
request or chunk is repaired by re-requesting the window after a timeout of
twice the smoothed RTT (bounded, doubling on consecutive losses).

Representation choice is throughput-based: highest bitrate below a safety
fraction of the EWMA throughput estimate, with upward switches additionally
gated on buffer level.  Playback stalls when the buffer runs empty and
resumes once one full segment is buffered.

Perceptual quality is the fitted per-resolution power curve over bitrate,
clamped to (0, 1].
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .core import US_PER_S, Engine
from .dataplane import FRAME_OVERHEAD_B, HTTP_CHUNK, HTTP_REQ, Host, Packet

log = logging.getLogger(__name__)

# Fitted coefficients (a, b, c) of quality = a * bitrate^b + c per resolution.
QUALITY_COEFFS = {
    "1080p": (-3.035, -0.5061, 1.022),
    "720p": (-4.85, -0.647, 1.011),
    "360p": (-17.53, -1.048, 0.9912),
}

# Published bitrate ladders (kbit/s) per resolution.
BITRATE_LADDERS = {
    "1080p": [100, 200, 600, 1000, 2000, 4000, 6000, 8000],
    "720p": [100, 200, 400, 600, 800, 1000, 1500, 2000],
    "360p": [100, 200, 400, 600, 800, 1000],
}


def video_quality(bitrate_kbps: float, resolution: str) -> float:
    """Quality value in (0, 1] for a bitrate at a resolution."""
    if bitrate_kbps <= 0:
        raise ValueError("bitrate must be > 0")
    try:
        a, b, c = QUALITY_COEFFS[resolution]
    except KeyError:
        raise ValueError(f"unknown resolution {resolution!r}") from None
    q = a * bitrate_kbps ** b + c
    return q if q < 1.0 else 1.0


@dataclass
class Mpd:
    """Media description: one resolution ladder, fixed segment duration."""

    resolution: str = "1080p"
    bitrates_kbps: List[int] = field(default_factory=lambda: list(BITRATE_LADDERS["1080p"]))
    segment_duration_s: int = 10
    total_duration_s: int = 600

    def __post_init__(self) -> None:
        if self.resolution not in QUALITY_COEFFS:
            raise ValueError(f"unknown resolution {self.resolution!r}")
        if any(b2 <= b1 for b1, b2 in zip(self.bitrates_kbps, self.bitrates_kbps[1:])):
            raise ValueError("bitrates must be strictly increasing")
        if self.segment_duration_s not in (1, 10):
            raise ValueError("segment_duration_s must be 1 or 10")
        if self.total_duration_s % self.segment_duration_s != 0:
            raise ValueError("total duration must be a whole number of segments")

    @property
    def n_segments(self) -> int:
        return self.total_duration_s // self.segment_duration_s


@dataclass
class AbrConfig:
    ewma_alpha: float = 0.3
    safety: float = 0.9
    up_switch_buffer_segments: int = 2
    max_buffer_s: int = 30


@dataclass
class TransportConfig:
    # 8 chunks per window keeps a one-hop-longer path within one ladder tier
    # at the top of the quality curve while congestion still collapses it.
    window_chunks: int = 8
    chunk_payload_b: int = 1458   # 1500 bytes on the wire
    req_payload_b: int = 58       # 100 bytes on the wire
    init_timeout_us: int = 200_000
    min_timeout_us: int = 20_000
    max_timeout_us: int = 500_000
    srtt_alpha: float = 0.125


@dataclass
class QoeSample:
    t_us: int
    bitrate_kbps: int
    quality: float
    latency_us: int
    switch: bool


class DashServer:
    """Stateless chunk responder attached to one host."""

    __slots__ = ("host",)

    def __init__(self, host: Host):
        self.host = host
        host.agent = self.on_rx

    def on_rx(self, pkt: Packet, now: int) -> None:
        if pkt.kind != HTTP_REQ:
            return
        client, seg_idx, win_idx, count, chunk_b = pkt.meta
        down_key = client.down_key
        size = chunk_b + FRAME_OVERHEAD_B
        for i in range(count):
            self.host.emit(Packet(HTTP_CHUNK, size, down_key, now,
                                  meta=(seg_idx, win_idx, i)), now)


class DashClient:
    """One adaptive video client; all state advances through engine events."""

    def __init__(self, client_id: str, host: Host, server_host_id: str,
                 mpd: Mpd, abr: AbrConfig, transport: TransportConfig,
                 engine: Engine, start_us: int):
        self.id = client_id
        self.host = host
        self.engine = engine
        self.mpd = mpd
        self.abr = abr
        self.transport = transport
        self.start_us = start_us
        self.up_key = (host.id, server_host_id, f"dash:req:{client_id}")
        self.down_key = (server_host_id, host.id, f"dash:data:{client_id}")
        host.agent = self.on_rx

        self.seg_us = mpd.segment_duration_s * US_PER_S
        self.total_us = mpd.total_duration_s * US_PER_S
        self.max_buffer_us = abr.max_buffer_s * US_PER_S
        self.up_buffer_us = abr.up_switch_buffer_segments * self.seg_us

        # ABR state
        self.ewma_bps: Optional[float] = None
        self.current_rep = 0

        # playback state (all media quantities in integer microseconds)
        self.downloaded_us = 0
        self.played_base_us = 0
        self.play_anchor_us = 0
        self.playing = False
        self.started = False
        self.finished = False
        self.stall_count = 0
        self.stall_time_us = 0
        self._stall_started_us = 0

        # per-segment transfer state
        self.seg_idx = 0
        self._tier = 0
        self._n_chunks = 0
        self._win_idx = 0
        self._n_windows = 0
        self._got: set = set()
        self._win_count = 0
        self._win_sent_us = 0
        self._seg_request_us = 0
        self._retransmitted = False
        self._timeout_us = transport.init_timeout_us
        self.srtt_us: Optional[int] = None

        self._to_epoch = 0
        self._play_epoch = 0
        self._wake_epoch = 0

        self.samples: List[QoeSample] = []
        self.buffer_series: List = []  # (t_us, buffer_us)
        self.requests_sent = 0
        self.retransmits = 0

    # -- bookkeeping -----------------------------------------------------------

    def played_us(self, now: int) -> int:
        if self.playing:
            return self.played_base_us + (now - self.play_anchor_us)
        return self.played_base_us

    def buffer_us(self, now: int) -> int:
        return self.downloaded_us - self.played_us(now)

    def start(self) -> None:
        self.engine.schedule(self.start_us, self._begin)
        self.engine.schedule(self.start_us + US_PER_S, self._sample_buffer)

    def _begin(self, _arg=None) -> None:
        self._start_segment(self.engine.now_us)

    def _sample_buffer(self, _arg=None) -> None:
        now = self.engine.now_us
        self.buffer_series.append((now, self.buffer_us(now)))
        self.engine.schedule(now + US_PER_S, self._sample_buffer)

    # -- rate selection ----------------------------------------------------------

    def abr_select(self, now: int) -> int:
        ladder = self.mpd.bitrates_kbps
        if self.ewma_bps is None:
            return 0
        budget = self.abr.safety * self.ewma_bps
        idx = 0
        for i, kbps in enumerate(ladder):
            if kbps * 1000 <= budget:
                idx = i
        if idx > self.current_rep and self.buffer_us(now) < self.up_buffer_us:
            idx = self.current_rep
        return idx

    # -- transfer machinery ----------------------------------------------------------

    def _start_segment(self, now: int) -> None:
        if self.seg_idx >= self.mpd.n_segments:
            return
        rep = self.abr_select(now)
        self._tier = rep
        bits = self.mpd.bitrates_kbps[rep] * 1000 * self.mpd.segment_duration_s
        chunk_bits = self.transport.chunk_payload_b * 8
        self._n_chunks = (bits + chunk_bits - 1) // chunk_bits
        w = self.transport.window_chunks
        self._n_windows = (self._n_chunks + w - 1) // w
        self._win_idx = 0
        self._seg_request_us = now
        self._timeout_us = (self._clamped_timeout() if self.srtt_us is not None
                            else self.transport.init_timeout_us)
        self._send_window(now)

    def _clamped_timeout(self) -> int:
        t = 2 * self.srtt_us
        tc = self.transport
        return min(max(t, tc.min_timeout_us), tc.max_timeout_us)

    def _window_chunk_count(self) -> int:
        w = self.transport.window_chunks
        first = self._win_idx * w
        return min(w, self._n_chunks - first)

    def _send_window(self, now: int, retransmit: bool = False) -> None:
        self._got = set()
        self._win_count = self._window_chunk_count()
        self._win_sent_us = now
        self._retransmitted = retransmit
        if not retransmit:
            self._timeout_us = (self._clamped_timeout() if self.srtt_us is not None
                                else self.transport.init_timeout_us)
        meta = (self, self.seg_idx, self._win_idx, self._win_count,
                self.transport.chunk_payload_b)
        pkt = Packet(HTTP_REQ, self.transport.req_payload_b + FRAME_OVERHEAD_B,
                     self.up_key, now, meta=meta)
        self.requests_sent += 1
        self.host.emit(pkt, now)
        self._to_epoch += 1
        self.engine.schedule(now + self._timeout_us, self._on_timeout, self._to_epoch)

    def _on_timeout(self, epoch: int) -> None:
        if epoch != self._to_epoch or self.finished:
            return
        now = self.engine.now_us
        self.retransmits += 1
        self._timeout_us = min(self._timeout_us * 2, self.transport.max_timeout_us)
        self._send_window(now, retransmit=True)

    def on_rx(self, pkt: Packet, now: int) -> None:
        if pkt.kind != HTTP_CHUNK:
            return
        seg_idx, win_idx, i = pkt.meta
        if seg_idx != self.seg_idx or win_idx != self._win_idx:
            return  # stale duplicate from a retransmitted window
        self._got.add(i)
        if len(self._got) < self._win_count:
            return
        self._to_epoch += 1  # cancel the pending timeout
        if not self._retransmitted:
            rtt = now - self._win_sent_us
            if self.srtt_us is None:
                self.srtt_us = rtt
            else:
                a = self.transport.srtt_alpha
                self.srtt_us = int(self.srtt_us + a * (rtt - self.srtt_us))
        self._win_idx += 1
        if self._win_idx < self._n_windows:
            self._send_window(now)
        else:
            self._complete_segment(now)

    # -- segment completion and playback ------------------------------------------

    def _complete_segment(self, now: int) -> None:
        latency = now - self._seg_request_us
        bits = self.mpd.bitrates_kbps[self._tier] * 1000 * self.mpd.segment_duration_s
        measured = bits * US_PER_S / latency if latency > 0 else float("inf")
        if self.ewma_bps is None:
            self.ewma_bps = measured
        else:
            a = self.abr.ewma_alpha
            self.ewma_bps = a * measured + (1 - a) * self.ewma_bps
        switch = self.seg_idx > 0 and self._tier != self.current_rep
        self.current_rep = self._tier
        kbps = self.mpd.bitrates_kbps[self._tier]
        self.samples.append(QoeSample(now, kbps,
                                      video_quality(kbps, self.mpd.resolution),
                                      latency, switch))
        self.seg_idx += 1
        self._deposit(now)
        if self.seg_idx >= self.mpd.n_segments:
            return
        buffer = self.buffer_us(now)
        if buffer < self.max_buffer_us:
            self._start_segment(now)
        else:
            # wake as soon as playout brings the buffer below the cap
            self._wake_epoch += 1
            wake_at = now + (buffer - self.max_buffer_us) + 1
            self.engine.schedule(wake_at, self._wake, self._wake_epoch)

    def _wake(self, epoch: int) -> None:
        if epoch != self._wake_epoch:
            return
        self._start_segment(self.engine.now_us)

    def _deposit(self, now: int) -> None:
        self.downloaded_us += self.seg_us
        if not self.started:
            self.started = True
            self._resume(now)
            return
        if self.playing:
            self._schedule_depletion(now)
        elif not self.finished:
            # stalled: resume once one full segment is buffered
            if self.downloaded_us - self.played_base_us >= self.seg_us:
                self.stall_time_us += now - self._stall_started_us
                self._resume(now)

    def _resume(self, now: int) -> None:
        self.playing = True
        self.play_anchor_us = now
        self._schedule_depletion(now)

    def _schedule_depletion(self, now: int) -> None:
        self._play_epoch += 1
        deplete_at = self.play_anchor_us + (self.downloaded_us - self.played_base_us)
        self.engine.schedule(deplete_at, self._on_depleted, self._play_epoch)

    def _on_depleted(self, epoch: int) -> None:
        if epoch != self._play_epoch or not self.playing:
            return
        now = self.engine.now_us
        self.played_base_us = self.downloaded_us
        self.playing = False
        if self.downloaded_us >= self.total_us:
            self.finished = True
            return
        self.stall_count += 1
        self._stall_started_us = now

    # -- end-of-run --------------------------------------------------------------

    def close(self, now: int) -> None:
        """Fold an open stall into the totals at the horizon."""
        if self.started and not self.playing and not self.finished:
            self.stall_time_us += now - self._stall_started_us
            self._stall_started_us = now

    def verify_conservation(self, now: int) -> None:
        buffer = self.buffer_us(now)
        if buffer < 0:
            raise AssertionError(f"{self.id}: negative buffer {buffer}")
        if buffer > self.max_buffer_us + self.seg_us:
            raise AssertionError(f"{self.id}: buffer {buffer} above cap")
        n_done = len(self.samples)
        if self.downloaded_us != n_done * self.seg_us:
            raise AssertionError(f"{self.id}: downloaded media mismatch")
        if self.played_us(now) > self.downloaded_us:
            raise AssertionError(f"{self.id}: played more than downloaded")


def qoe_aggregate(clients: List[DashClient]) -> Dict:
    """Per-client and fleet-average QoE report."""
    per_client = {}
    for c in clients:
        n = len(c.samples)
        if n == 0:
            per_client[c.id] = {"n_samples": 0, "avg_bitrate_kbps": None,
                                "avg_quality": None, "avg_latency_us": None,
                                "switch_count": 0,
                                "stall_count": c.stall_count,
                                "stall_time_us": c.stall_time_us}
            continue
        per_client[c.id] = {
            "n_samples": n,
            "avg_bitrate_kbps": sum(s.bitrate_kbps for s in c.samples) / n,
            "avg_quality": sum(s.quality for s in c.samples) / n,
            "avg_latency_us": sum(s.latency_us for s in c.samples) / n,
            "switch_count": sum(1 for s in c.samples if s.switch),
            "stall_count": c.stall_count,
            "stall_time_us": c.stall_time_us,
        }
    reporting = [v for v in per_client.values() if v["n_samples"] > 0]
    fleet = {"avg_bitrate_kbps": None, "avg_quality": None,
             "avg_latency_us": None, "avg_switch_count": None}
    if reporting:
        m = len(reporting)
        fleet = {
            "avg_bitrate_kbps": sum(v["avg_bitrate_kbps"] for v in reporting) / m,
            "avg_quality": sum(v["avg_quality"] for v in reporting) / m,
            "avg_latency_us": sum(v["avg_latency_us"] for v in reporting) / m,
            "avg_switch_count": sum(v["switch_count"] for v in reporting) / m,
        }
    return {"per_client": per_client, "fleet": fleet}
