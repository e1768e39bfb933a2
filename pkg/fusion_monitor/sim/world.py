"""
Ground truth and noisy sensor traces for a scenario

Deterministic given the scenario seed: one numpy Generator seeded from it
draws the noise of every analog stream in declaration order.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from fusion_monitor.core.models import SensorKind, Trace
from fusion_monitor.sim.config import EventSpec, FaultSpec, ScenarioConfig, SignalSpec
from fusion_monitor.sim.topology import Topology

logger = logging.getLogger(__name__)

StreamKey = Tuple[str, SensorKind]


@dataclass(frozen=True, eq=False)
class World:
    """Per (node, sensor) ground truth and readings over ticks 0..horizon-1"""

    horizon: int
    truth: Dict[StreamKey, np.ndarray]
    readings: Dict[StreamKey, np.ndarray]
    nominal: Dict[SensorKind, np.ndarray]
    # event index -> first tick the true leak depression reaches the threshold
    leak_onsets: Dict[int, Optional[int]] = field(default_factory=dict)
    # event index -> node ids whose truth the event changes
    affected: Dict[int, Tuple[str, ...]] = field(default_factory=dict)

    @property
    def ticks(self) -> np.ndarray:
        return np.arange(self.horizon)

    def trace(self, node_id: str, kind: SensorKind) -> Trace:
        return Trace.from_arrays(node_id, kind, self.ticks, self.readings[(node_id, SensorKind(kind))])

    def streams(self) -> List[StreamKey]:
        return list(self.readings)


def signal_curve(spec: SignalSpec, horizon: int) -> np.ndarray:
    """baseline + drift * t + amplitude * sin(2 pi t / period)"""
    t = np.arange(horizon, dtype=float)
    curve = spec.baseline + spec.drift * t
    if spec.period > 0 and spec.amplitude:
        curve = curve + spec.amplitude * np.sin(2.0 * np.pi * t / spec.period)
    return curve


def leak_depression(event: EventSpec, horizon: int) -> np.ndarray:
    """Linear ramp from 0 at start to magnitude at end, held afterwards"""
    t = np.arange(horizon, dtype=float)
    if event.end == event.start:
        ramp = (t >= event.start).astype(float)
    else:
        ramp = np.clip((t - event.start) / (event.end - event.start), 0.0, 1.0)
    return event.magnitude * ramp


def apply_fault(readings: np.ndarray, fault: FaultSpec) -> np.ndarray:
    out = readings.copy()
    span = slice(fault.start, fault.end + 1)
    if fault.mode == "stuck":
        out[span] = fault.value
    elif fault.mode == "offset" or fault.mode == "spike":
        out[span] += fault.value
    elif fault.mode == "drift":
        steps = np.arange(1, fault.end - fault.start + 2, dtype=float)
        out[span] += fault.value * steps[: out[span].size]
    return out


def generate_world(config: ScenarioConfig, topology: Optional[Topology] = None) -> World:
    topology = topology or Topology.from_config(config)
    horizon = config.horizon
    rng = np.random.default_rng(config.seed)

    nominal = {kind: signal_curve(config.signals.for_kind(kind), horizon) for kind in SensorKind}
    truth: Dict[StreamKey, np.ndarray] = {}
    for node in topology.nodes:
        for kind in node.sensors:
            truth[(node.node_id, kind)] = nominal[kind].copy()

    leak_onsets: Dict[int, Optional[int]] = {}
    affected: Dict[int, Tuple[str, ...]] = {}
    for index, event in enumerate(config.events):
        if event.kind == "leak":
            nodes = topology.nodes_within(event.location, event.influence_radius, SensorKind.PRESSURE)
            depression = leak_depression(event, horizon)
            for node in nodes:
                truth[(node.node_id, SensorKind.PRESSURE)] -= depression
            reached = np.flatnonzero(depression >= config.detection.leak_threshold)
            leak_onsets[index] = int(reached[0]) if nodes and reached.size else None
            affected[index] = tuple(n.node_id for n in nodes)
        else:
            target = topology.nearest_node(event.location, (SensorKind.PIR, SensorKind.MAGNETIC))
            if target is None:
                logger.warning("intrusion event %d has no binary sensor to trigger", index)
                affected[index] = ()
                continue
            for kind in (SensorKind.PIR, SensorKind.MAGNETIC):
                if kind in target.sensors:
                    truth[(target.node_id, kind)][event.start : event.end + 1] = 1.0
            affected[index] = (target.node_id,)

    readings: Dict[StreamKey, np.ndarray] = {}
    for key, values in truth.items():
        kind = key[1]
        noise_std = config.signals.for_kind(kind).noise_std
        if kind.is_analog and noise_std > 0:
            readings[key] = values + rng.normal(0.0, noise_std, size=horizon)
        else:
            readings[key] = values.copy()

    for fault in config.faults:
        key = (fault.node, fault.sensor)
        readings[key] = apply_fault(readings[key], fault)
        logger.info("fault %s injected on %s/%s over [%d, %d]", fault.mode, fault.node, fault.sensor.value, fault.start, fault.end)

    logger.debug("generated %d streams over %d ticks (seed %d)", len(readings), horizon, config.seed)
    return World(
        horizon=horizon,
        truth=truth,
        readings=readings,
        nominal=nominal,
        leak_onsets=leak_onsets,
        affected=affected,
    )
