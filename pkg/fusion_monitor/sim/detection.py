"""
Event detection at the gateway and scoring against the injected events
"""

import logging
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from fusion_monitor.core.models import BINARY_KINDS, SensorKind
from fusion_monitor.sim.config import ScenarioConfig
from fusion_monitor.sim.stages import ClusterReport, KindSummary
from fusion_monitor.sim.topology import Topology
from fusion_monitor.sim.world import World, signal_curve

logger = logging.getLogger(__name__)

EventKind = Literal["leak", "intrusion"]


class Detection(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: EventKind
    cluster_id: str
    tick: int = Field(..., ge=0, description="End of the window that confirmed the event")
    window_start: int = Field(..., ge=0, description="Start of the first window of the run")
    validated: bool = False
    validation_tick: Optional[int] = None
    event: Optional[int] = Field(default=None, description="Index of the matched injected event")
    latency: Optional[int] = Field(default=None, ge=0)


class EventOutcome(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: int
    kind: EventKind
    start: int
    end: int
    clusters: Tuple[str, ...]
    onset: Optional[int] = None
    detected: bool = False
    detected_tick: Optional[int] = None
    latency: Optional[int] = Field(default=None, ge=0)
    validated: bool = False


def _members_below(summary: KindSummary, rows: np.ndarray, floor: float) -> int:
    """Members whose held reports average below `floor` over the window rows"""
    return int(np.sum(summary.held[rows].mean(axis=0) < floor))


def _leak_detections(report: ClusterReport, config: ScenarioConfig, nominal: np.ndarray) -> List[Detection]:
    summary = report.kinds.get(SensorKind.PRESSURE)
    if summary is None:
        return []
    rule = config.detection
    window_ids = summary.ticks // config.fusion.window
    found = []
    run_start: Optional[int] = None
    run = 0
    for window, value, window_id in zip(summary.windows, summary.window_values, np.unique(window_ids)):
        floor = nominal[window.end] - rule.leak_threshold
        # a leak over part of the cluster is gated out of the fused value
        local = _members_below(summary, window_ids == window_id, floor) >= rule.leak_min_members
        if value < floor or local:
            run += 1
            if run == 1:
                run_start = window.start
            if run == rule.leak_persistence:
                found.append(Detection(kind="leak", cluster_id=report.cluster_id, tick=window.end, window_start=run_start))
        else:
            run = 0
    return found


def _intrusion_detections(report: ClusterReport) -> List[Detection]:
    fired: Dict[Tuple[int, int], bool] = {}
    for kind in BINARY_KINDS:
        summary = report.kinds.get(kind)
        if summary is None:
            continue
        for window in summary.windows:
            key = (window.start, window.end)
            fired[key] = fired.get(key, False) or window.max >= 1.0

    found = []
    active = False
    for (start, end), hit in sorted(fired.items()):
        if hit and not active:
            found.append(Detection(kind="intrusion", cluster_id=report.cluster_id, tick=end, window_start=start))
        active = hit
    return found


def detect_events(
    clusters: Sequence[ClusterReport],
    config: ScenarioConfig,
    topology: Optional[Topology] = None,
) -> List[Detection]:
    """
    Threshold rules over the per-window cluster outputs

    Leak: fused pressure, or the window mean of at least leak_min_members
    members, below nominal - leak_threshold for leak_persistence consecutive
    windows. Intrusion: any pir/magnetic window MAX = 1.
    Consecutive hits form one detection. With a UAV patrol, a detection is
    validated when the UAV visits its cluster within validation_horizon ticks.
    """
    nominal = signal_curve(config.signals.pressure, config.horizon)
    detections: List[Detection] = []
    for report in clusters:
        detections.extend(_leak_detections(report, config, nominal))
        detections.extend(_intrusion_detections(report))

    if topology is not None and topology.patrol:
        horizon = config.detection.validation_horizon
        checked = []
        for detection in detections:
            visit = topology.validation_visit(detection.cluster_id, detection.tick, horizon)
            checked.append(
                detection.model_copy(update={"validated": visit is not None, "validation_tick": visit})
            )
        detections = checked

    detections.sort(key=lambda d: (d.tick, d.cluster_id, d.kind))
    for detection in detections:
        logger.info(
            "%s detected in %s at tick %d%s",
            detection.kind,
            detection.cluster_id,
            detection.tick,
            " (validated)" if detection.validated else "",
        )
    return detections


def match_detections(
    detections: Sequence[Detection],
    config: ScenarioConfig,
    world: World,
    topology: Topology,
) -> Tuple[List[Detection], List[EventOutcome]]:
    """
    Attach each detection to the injected event it reports

    A detection matches an event of the same kind affecting its cluster that
    started at or before the detection (intrusions also must not have ended
    more than one window before the detection run began). Latency counts from
    the leak onset (true depression reaching the threshold) or the intrusion
    start, floored at 0. Unmatched detections are false positives.
    """
    slack = config.fusion.window
    outcomes = []
    for index, event in enumerate(config.events):
        clusters = tuple(sorted({topology.cluster_of(n) for n in world.affected.get(index, ())}))
        outcomes.append(
            EventOutcome(
                index=index,
                kind=event.kind,
                start=event.start,
                end=event.end,
                clusters=clusters,
                onset=world.leak_onsets.get(index) if event.kind == "leak" else event.start,
            )
        )

    matched = []
    for detection in detections:
        candidates = [
            o
            for o in outcomes
            if o.kind == detection.kind
            and detection.cluster_id in o.clusters
            and o.start <= detection.tick
            and (o.kind == "leak" or detection.window_start <= o.end + slack)
        ]
        if not candidates:
            logger.warning("false positive: %s in %s at tick %d", detection.kind, detection.cluster_id, detection.tick)
            matched.append(detection)
            continue
        fresh = [o for o in candidates if not o.detected]
        outcome = (fresh or candidates)[0]
        reference = outcome.onset if outcome.onset is not None else outcome.start
        latency = max(0, detection.tick - reference)
        matched.append(detection.model_copy(update={"event": outcome.index, "latency": latency}))
        if not outcome.detected:
            outcomes[outcome.index] = outcome.model_copy(
                update={
                    "detected": True,
                    "detected_tick": detection.tick,
                    "latency": latency,
                    "validated": detection.validated,
                }
            )
    return matched, outcomes
