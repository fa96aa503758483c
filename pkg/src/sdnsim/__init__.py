"""Deterministic discrete-event simulator for SDN data-plane fault tolerance,
BFD/LLDP failure and congestion detection, and adaptive-video QoE studies."""

from .core import Engine, RunConfig, SchedulingError
from .dataplane import FailureMode, Topology
from .detection import BfdConfig, LldpConfig, compute_detection_time
from .dash import BITRATE_LADDERS, Mpd, video_quality
from .presets import PRESET_IDS, preset
from .runner import RunResult, run_preset, run_scenario
from .scenario import ScenarioConfig, ScenarioError, load_scenario

__all__ = [
    "Engine", "RunConfig", "SchedulingError", "FailureMode", "Topology",
    "BfdConfig", "LldpConfig", "compute_detection_time", "BITRATE_LADDERS",
    "Mpd", "video_quality", "PRESET_IDS", "preset", "RunResult",
    "run_preset", "run_scenario", "ScenarioConfig", "ScenarioError",
    "load_scenario",
]

__version__ = "0.1.0"
