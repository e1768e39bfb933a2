"""
End-to-end simulation run: world → nodes → cluster heads → consensus → detection
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import Any, Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from fusion_monitor.core.errors import FusionError, StageError
from fusion_monitor.core.models import BINARY_KINDS, SensorKind
from fusion_monitor.sim.config import ScenarioConfig
from fusion_monitor.sim.detection import Detection, EventOutcome, detect_events, match_detections
from fusion_monitor.sim.energy import EnergyModel, Message, MessageBus
from fusion_monitor.sim.stages import (
    ClusterReport,
    ConsensusOutcome,
    NodeReport,
    StreamKey,
    cluster_stage,
    consensus_stage,
    node_stage,
)
from fusion_monitor.sim.topology import GATEWAY, Topology
from fusion_monitor.sim.world import World, generate_world

logger = logging.getLogger(__name__)

GCC = "gcc"
LEVELS = ("node", "cluster", "consensus", "gateway")


class RunMetrics(BaseModel):
    """Everything measured on one run; identical config and seed give identical metrics"""

    model_config = ConfigDict(frozen=True)

    scenario: str
    seed: int
    horizon: int = Field(..., ge=1)

    # ---- traffic per level ----
    messages_node: int = Field(..., ge=0)
    messages_cluster: int = Field(..., ge=0)
    messages_consensus: int = Field(..., ge=0)
    messages_gateway: int = Field(..., ge=0)
    bits_node: int = Field(..., ge=0)
    bits_cluster: int = Field(..., ge=0)
    bits_consensus: int = Field(..., ge=0)
    bits_gateway: int = Field(..., ge=0)

    # ---- energy ----
    compute_ops: int = Field(..., ge=0)
    ops_per_bit: int = Field(..., ge=1000, le=3000)
    radio_energy: float = Field(..., ge=0)
    compute_energy: float = Field(..., ge=0)

    # ---- estimation ----
    rmse: Dict[str, float] = Field(default_factory=dict, description="node/kind -> RMSE of the held report")
    fused_rmse: Dict[str, float] = Field(default_factory=dict, description="cluster/kind -> RMSE of the fused stream")

    # ---- consensus, faults, detection ----
    consensus_runs: int = Field(default=0, ge=0)
    consensus_rounds: int = Field(default=0, ge=0)
    consensus_unconverged: int = Field(default=0, ge=0)
    suspected_faulty: Tuple[str, ...] = ()
    detections: Tuple[Detection, ...] = ()
    events: Tuple[EventOutcome, ...] = ()

    @property
    def messages_total(self) -> int:
        return self.messages_node + self.messages_cluster + self.messages_consensus + self.messages_gateway

    @property
    def bits_total(self) -> int:
        return self.bits_node + self.bits_cluster + self.bits_consensus + self.bits_gateway

    @property
    def total_energy(self) -> float:
        return self.radio_energy + self.compute_energy

    @property
    def rmse_mean(self) -> float:
        return float(np.mean(list(self.rmse.values()))) if self.rmse else 0.0

    @property
    def false_positives(self) -> int:
        return sum(1 for d in self.detections if d.event is None)

    @property
    def events_detected(self) -> int:
        return sum(1 for e in self.events if e.detected)

    @property
    def detections_validated(self) -> int:
        return sum(1 for d in self.detections if d.validated)

    def summary_row(self) -> Dict[str, Any]:
        """Flat scalar row for metrics.csv"""
        latencies = [e.latency for e in self.events if e.latency is not None]
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "horizon": self.horizon,
            "messages_node": self.messages_node,
            "messages_cluster": self.messages_cluster,
            "messages_consensus": self.messages_consensus,
            "messages_gateway": self.messages_gateway,
            "messages_total": self.messages_total,
            "bits_node": self.bits_node,
            "bits_cluster": self.bits_cluster,
            "bits_consensus": self.bits_consensus,
            "bits_gateway": self.bits_gateway,
            "bits_total": self.bits_total,
            "compute_ops": self.compute_ops,
            "ops_per_bit": self.ops_per_bit,
            "radio_energy": self.radio_energy,
            "compute_energy": self.compute_energy,
            "total_energy": self.total_energy,
            "rmse_mean": self.rmse_mean,
            "consensus_runs": self.consensus_runs,
            "consensus_rounds": self.consensus_rounds,
            "consensus_unconverged": self.consensus_unconverged,
            "suspected_faulty": len(self.suspected_faulty),
            "events": len(self.events),
            "events_detected": self.events_detected,
            "detections": len(self.detections),
            "detections_validated": self.detections_validated,
            "false_positives": self.false_positives,
            "max_latency": max(latencies) if latencies else None,
        }


@dataclass(eq=False)
class SimulationResult:
    """All intermediate products of a run, for the output writers and tests"""

    config: ScenarioConfig
    topology: Topology
    world: World
    nodes: Dict[StreamKey, NodeReport]
    clusters: Dict[str, ClusterReport]
    consensus: List[ConsensusOutcome]
    detections: List[Detection]
    events: List[EventOutcome]
    bus: MessageBus
    ops: Counter
    metrics: RunMetrics


# ============ STAGE DRIVERS ============

def _run_nodes(config: ScenarioConfig, topology: Topology, world: World) -> Dict[StreamKey, NodeReport]:
    reports = {}
    for node in topology.nodes:
        for kind in node.sensors:
            try:
                reports[(node.node_id, kind)] = node_stage(world.trace(node.node_id, kind), config, dst=node.cluster_id)
            except FusionError as exc:
                raise StageError("node_stage", f"{node.node_id}/{kind.value}", exc) from exc
    return reports


def _run_clusters(
    config: ScenarioConfig,
    topology: Topology,
    nodes: Dict[StreamKey, NodeReport],
) -> Dict[str, ClusterReport]:
    reports = {}
    for head in topology.cluster_heads:
        members = [report for (node_id, _), report in nodes.items() if node_id in head.members]
        try:
            reports[head.cluster_id] = cluster_stage(members, config, head.cluster_id, topology)
        except FusionError as exc:
            raise StageError("cluster_stage", head.cluster_id, exc) from exc
    return reports


def _suspicious(config: ScenarioConfig, world: World, clusters: Dict[str, ClusterReport], window: int) -> bool:
    """A cluster window hints at an event: pressure halfway to the leak threshold or a binary hit"""
    threshold = config.detection.leak_threshold / 2.0
    for report in clusters.values():
        pressure = report.kinds.get(SensorKind.PRESSURE)
        if pressure is not None and window < len(pressure.windows):
            end = pressure.windows[window].end
            if pressure.window_values[window] < world.nominal[SensorKind.PRESSURE][end] - threshold:
                return True
        for kind in BINARY_KINDS:
            summary = report.kinds.get(kind)
            if summary is not None and window < len(summary.windows) and summary.windows[window].max >= 1.0:
                return True
    return False


def _run_consensus(
    config: ScenarioConfig,
    topology: Topology,
    world: World,
    clusters: Dict[str, ClusterReport],
) -> List[ConsensusOutcome]:
    policy = config.consensus
    if policy.trigger == "never":
        return []
    holders = {cid: r.kinds[policy.quantity] for cid, r in clusters.items() if policy.quantity in r.kinds}
    if len(holders) < 2:
        logger.info("consensus skipped: %d cluster head(s) carry %s", len(holders), policy.quantity.value)
        return []

    grid = next(iter(holders.values())).windows
    outcomes = []
    for index, window in enumerate(grid):
        reason = None
        if policy.trigger == "every_window":
            reason = "window"
        elif policy.trigger == "on_query" and any(window.start <= q <= window.end for q in policy.queries):
            reason = "query"
        elif policy.trigger == "on_suspicion" and _suspicious(config, world, clusters, index):
            reason = "suspicion"
        if reason is None:
            continue
        estimates = {cid: float(summary.window_values[index]) for cid, summary in holders.items()}
        try:
            outcome = consensus_stage(estimates, topology, config, tick=window.end, reason=reason)
        except FusionError as exc:
            raise StageError("consensus_stage", f"tick {window.end}", exc) from exc
        outcomes.append(outcome)
    logger.info("consensus ran %d time(s)", len(outcomes))
    return outcomes


# ============ SCORING ============

def _level(message: Message, node_ids: set) -> str:
    if message.kind == "consensus":
        return "consensus"
    if message.src in node_ids:
        return "node"
    if message.src == GATEWAY:
        return "gateway"
    return "cluster"


def _rmse(estimate: np.ndarray, truth: np.ndarray) -> float:
    return math.sqrt(float(np.mean((np.asarray(estimate) - np.asarray(truth)) ** 2)))


def score(
    config: ScenarioConfig,
    topology: Topology,
    world: World,
    nodes: Dict[StreamKey, NodeReport],
    clusters: Dict[str, ClusterReport],
    consensus: List[ConsensusOutcome],
    detections: List[Detection],
    events: List[EventOutcome],
    bus: MessageBus,
    ops: Counter,
) -> RunMetrics:
    node_ids = {n.node_id for n in topology.nodes}
    counts = {level: 0 for level in LEVELS}
    bits = {level: 0 for level in LEVELS}
    for message in bus.log:
        level = _level(message, node_ids)
        counts[level] += 1
        bits[level] += message.payload_bits

    rmse = {
        f"{node_id}/{kind.value}": _rmse(report.reported, world.truth[(node_id, kind)])
        for (node_id, kind), report in nodes.items()
        if kind.is_analog
    }
    fused_rmse = {}
    for cluster_id, report in clusters.items():
        for kind, summary in report.kinds.items():
            if kind.is_analog:
                truth = np.mean([world.truth[(m, kind)] for m in summary.members], axis=0)
                fused_rmse[f"{cluster_id}/{kind.value}"] = _rmse(summary.fused, truth)

    suspected = sorted(
        f"{node_id}/{kind.value}" for report in clusters.values() for (node_id, kind) in report.suspected
    )
    energy = EnergyModel.from_spec(config.energy)
    total_ops = int(sum(ops.values()))
    total_bits = sum(bits.values())
    return RunMetrics(
        scenario=config.name,
        seed=config.seed,
        horizon=config.horizon,
        messages_node=counts["node"],
        messages_cluster=counts["cluster"],
        messages_consensus=counts["consensus"],
        messages_gateway=counts["gateway"],
        bits_node=bits["node"],
        bits_cluster=bits["cluster"],
        bits_consensus=bits["consensus"],
        bits_gateway=bits["gateway"],
        compute_ops=total_ops,
        ops_per_bit=energy.ops_per_bit,
        radio_energy=energy.radio(total_bits),
        compute_energy=energy.compute(total_ops),
        rmse=rmse,
        fused_rmse=fused_rmse,
        consensus_runs=len(consensus),
        consensus_rounds=sum(o.rounds for o in consensus),
        consensus_unconverged=sum(1 for o in consensus if not o.converged),
        suspected_faulty=tuple(suspected),
        detections=tuple(detections),
        events=tuple(events),
    )


# ============ ENTRY POINTS ============

def simulate(config: ScenarioConfig) -> SimulationResult:
    """Run every stage and keep the intermediate products"""
    topology = Topology.from_config(config)
    world = generate_world(config, topology)
    bus = MessageBus()
    ops: Counter = Counter()
    logger.info(
        "simulating %s: %d nodes, %d clusters, %d ticks (seed %d)",
        config.name,
        len(topology.nodes),
        len(topology.cluster_heads),
        config.horizon,
        config.seed,
    )

    nodes = _run_nodes(config, topology, world)
    for report in nodes.values():
        bus.send_all(report.messages)
        ops["node"] += report.ops

    clusters = _run_clusters(config, topology, nodes)
    for report in clusters.values():
        bus.send_all(report.messages)
        ops["cluster"] += report.ops

    consensus = _run_consensus(config, topology, world, clusters)
    for outcome in consensus:
        bus.send_all(outcome.messages)
        ops["consensus"] += outcome.ops

    raw_detections = detect_events(list(clusters.values()), config, topology)
    checked_windows = sum(
        len(summary.windows)
        for report in clusters.values()
        for kind, summary in report.kinds.items()
        if kind == SensorKind.PRESSURE or kind.is_binary
    )
    ops["detection"] += config.energy.ops.detection_window * checked_windows
    detections, events = match_detections(raw_detections, config, world, topology)
    for detection in detections:
        bus.send(
            Message(src=GATEWAY, dst=GCC, tick=detection.tick, payload_bits=config.fusion.sample_bits, kind="alert")
        )

    metrics = score(config, topology, world, nodes, clusters, consensus, detections, events, bus, ops)
    logger.info(
        "%s: %d messages, %d bits, rmse %.4g, %d detection(s)",
        config.name,
        metrics.messages_total,
        metrics.bits_total,
        metrics.rmse_mean,
        len(detections),
    )
    return SimulationResult(
        config=config,
        topology=topology,
        world=world,
        nodes=nodes,
        clusters=clusters,
        consensus=consensus,
        detections=detections,
        events=events,
        bus=bus,
        ops=ops,
        metrics=metrics,
    )


def run_simulation(config: ScenarioConfig) -> RunMetrics:
    return simulate(config).metrics
