"""
Three-level pipeline-monitoring WSN simulator
"""
from .config import ScenarioConfig, build_config, dump_config, load_config
from .detection import Detection, EventOutcome, detect_events, match_detections
from .energy import EnergyModel, Message, MessageBus
from .runner import RunMetrics, SimulationResult, run_simulation, simulate
from .stages import (
    Aggregate,
    ClusterReport,
    ConsensusOutcome,
    NodeReport,
    aggregate,
    cluster_stage,
    consensus_stage,
    node_stage,
    report_on_change,
)
from .topology import GATEWAY, UAV, Topology
from .world import World, generate_world

__all__ = [
    "Aggregate",
    "ClusterReport",
    "ConsensusOutcome",
    "Detection",
    "EnergyModel",
    "EventOutcome",
    "GATEWAY",
    "Message",
    "MessageBus",
    "NodeReport",
    "RunMetrics",
    "ScenarioConfig",
    "SimulationResult",
    "Topology",
    "UAV",
    "World",
    "aggregate",
    "build_config",
    "cluster_stage",
    "consensus_stage",
    "detect_events",
    "dump_config",
    "generate_world",
    "load_config",
    "match_detections",
    "node_stage",
    "report_on_change",
    "run_simulation",
    "simulate",
]
