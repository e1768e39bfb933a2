"""
Pipeline stages

- node_stage: on-node EKF and report-on-change thresholding (or raw forwarding)
- cluster_stage: FUSVAF over member reports, COUNT/AVG/MAX/MIN per window,
  suspected-faulty flags, upstream messages
- consensus_stage: cluster-head agreement on a shared quantity
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from fusion_monitor.core.errors import DimensionMismatchError
from fusion_monitor.core.models import SensorKind, Trace
from fusion_monitor.filters.consensus import ConsensusState, run_consensus
from fusion_monitor.filters.ekf import FilterState, ProcessModel, run_filter
from fusion_monitor.filters.fusvaf import FusedSample, FusvafStream
from fusion_monitor.sim.config import FusionSpec, ScenarioConfig
from fusion_monitor.sim.energy import Message
from fusion_monitor.sim.topology import GATEWAY, Topology

logger = logging.getLogger(__name__)

StreamKey = Tuple[str, SensorKind]

# COUNT, AVG, MAX, MIN
AGGREGATE_FIELDS = 4


# ============ NODE LEVEL ============

@dataclass(frozen=True, eq=False)
class NodeReport:
    """What one sensor stream sent to its cluster head"""

    node_id: str
    sensor_kind: SensorKind
    ticks: np.ndarray
    measurements: np.ndarray
    estimates: Optional[np.ndarray]  # None without on-node EKF
    reported: np.ndarray  # sample-and-hold of the last sent value
    sent: np.ndarray  # bool mask over ticks
    messages: Tuple[Message, ...]
    ops: int

    @property
    def key(self) -> StreamKey:
        return (self.node_id, self.sensor_kind)


def report_on_change(values: np.ndarray, delta: float) -> np.ndarray:
    """Send mask: the first value, then every value farther than delta from the last sent one"""
    send = np.zeros(values.size, dtype=bool)
    last: Optional[float] = None
    for i, value in enumerate(values):
        if last is None or abs(value - last) > delta:
            send[i] = True
            last = value
    return send


def sample_and_hold(values: np.ndarray, send: np.ndarray) -> np.ndarray:
    """Value last sent at or before each position (the first position must be sent)"""
    positions = np.where(send, np.arange(values.size), 0)
    return values[np.maximum.accumulate(positions)]


def node_stage(
    trace: Trace,
    config: ScenarioConfig,
    dst: str = "cluster",
    delta: Optional[float] = None,
) -> NodeReport:
    """
    Pre-process one sensor stream at the node

    EKF on: analog streams run a scalar random-walk EKF (q, r, p0 from the
    fusion section) and report the estimate on change; binary streams report
    the raw value on change. EKF off: every reading is forwarded.

    Returns:
        NodeReport with the held reported stream, the sent messages and the op count
    """
    fusion = config.fusion
    costs = config.energy.ops
    kind = trace.sensor_kind
    ticks = trace.timestamps
    z = trace.values
    estimates = None

    if not fusion.node_ekf:
        send = np.ones(z.size, dtype=bool)
        values = z
        ops = 0
    else:
        delta = config.deadband_for(kind) if delta is None else delta
        if kind.is_analog:
            model = ProcessModel.random_walk(fusion.q, fusion.r)
            init = FilterState.scalar(float(z[0]), fusion.p0, tick=int(ticks[0]))
            states = run_filter(model, init, trace)
            estimates = np.array([s.estimate for s in states])
            values = estimates
            ops = (costs.ekf_step + costs.report_check) * z.size
        else:
            values = z
            ops = costs.report_check * z.size
        send = report_on_change(values, delta)

    messages = tuple(
        Message(src=trace.node_id, dst=dst, tick=int(t), payload_bits=fusion.sample_bits, kind="raw")
        for t in ticks[send]
    )
    return NodeReport(
        node_id=trace.node_id,
        sensor_kind=kind,
        ticks=ticks,
        measurements=z,
        estimates=estimates,
        reported=sample_and_hold(values, send),
        sent=send,
        messages=messages,
        ops=ops,
    )


# ============ CLUSTER LEVEL ============

@dataclass(frozen=True)
class Aggregate:
    """COUNT, AVG, MAX, MIN of the samples of one window"""

    start: int
    end: int
    count: int
    avg: float
    max: float
    min: float


def aggregate(values: Sequence[float], start: int = 0, end: int = 0) -> Aggregate:
    array = np.asarray(values, dtype=float).reshape(-1)
    if array.size == 0:
        raise ValueError("cannot aggregate an empty window")
    return Aggregate(
        start=start,
        end=end,
        count=int(array.size),
        avg=float(np.mean(array)),
        max=float(np.max(array)),
        min=float(np.min(array)),
    )


@dataclass(frozen=True, eq=False)
class KindSummary:
    """Cluster-head view of one sensor kind"""

    kind: SensorKind
    members: Tuple[str, ...]
    ticks: np.ndarray
    held: np.ndarray  # ticks x members
    fused: np.ndarray  # per tick
    samples: Tuple[FusedSample, ...]
    windows: Tuple[Aggregate, ...]
    window_values: np.ndarray  # fused mean (analog) or MAX (binary) per window


@dataclass(frozen=True, eq=False)
class ClusterReport:
    cluster_id: str
    kinds: Dict[SensorKind, KindSummary]
    suspected: Dict[StreamKey, int]  # (node, kind) -> tick the flag was raised
    messages: Tuple[Message, ...]
    ops: int


def uplink_messages(
    src: str,
    tick: int,
    payload_bits: int,
    kind: str,
    topology: Optional[Topology] = None,
) -> List[Message]:
    hops = topology.uplink_route(src, tick) if topology is not None else [(src, GATEWAY)]
    return [Message(src=a, dst=b, tick=tick, payload_bits=payload_bits, kind=kind) for a, b in hops]


def _predictor_options(fusion: FusionSpec) -> dict:
    if fusion.predictor == "ekf":
        return {"q": fusion.q, "r": fusion.r, "p0": fusion.p0}
    return {}


def _suspect_faulty(
    kind: SensorKind,
    members: Tuple[str, ...],
    samples: Sequence[FusedSample],
    ticks: np.ndarray,
    window_ids: np.ndarray,
    persistence: int,
) -> Dict[StreamKey, int]:
    """Members whose confidence is 0 throughout `persistence` consecutive windows"""
    sigma = np.array([[s.confidences[m] for m in members] for s in samples])
    flagged: Dict[StreamKey, int] = {}
    for column, node_id in enumerate(members):
        run = 0
        for window in np.unique(window_ids):
            rows = window_ids == window
            run = run + 1 if np.all(sigma[rows, column] == 0.0) else 0
            if run >= persistence:
                flagged[(node_id, kind)] = int(ticks[rows][-1])
                break
    return flagged


def cluster_stage(
    reports: Sequence[NodeReport],
    config: ScenarioConfig,
    cluster_id: str = "cluster",
    topology: Optional[Topology] = None,
) -> ClusterReport:
    """
    Fuse, aggregate and forward the member reports of one cluster head

    Per analog kind the held member reports are fused tick by tick with
    FUSVAF; every window the head sends one `aggregated` message per kind and
    one `fused` message per analog kind. With FUSVAF off the head relays every
    member report upstream instead and the per-tick fused value is the member
    mean.
    """
    if not reports:
        raise ValueError("cluster stage needs at least one member stream")
    fusion = config.fusion
    costs = config.energy.ops
    bits = fusion.sample_bits

    grouped: Dict[SensorKind, List[NodeReport]] = {}
    for report in reports:
        grouped.setdefault(report.sensor_kind, []).append(report)

    kinds: Dict[SensorKind, KindSummary] = {}
    suspected: Dict[StreamKey, int] = {}
    messages: List[Message] = []
    ops = 0

    for kind in SensorKind:
        group = grouped.get(kind)
        if not group:
            continue
        ticks = group[0].ticks
        for report in group[1:]:
            if not np.array_equal(report.ticks, ticks):
                raise DimensionMismatchError(
                    f"{report.node_id}/{kind.value} is not tick-aligned with {group[0].node_id}"
                )
        members = tuple(r.node_id for r in group)
        held = np.column_stack([r.reported for r in group])

        samples: Tuple[FusedSample, ...] = ()
        if kind.is_binary:
            fused = held.max(axis=1)
        elif fusion.cluster_fusvaf:
            stream = FusvafStream(
                params=fusion.params,
                adaptation=fusion.gate,
                predictor_name=fusion.predictor,
                predictor_options=_predictor_options(fusion),
            )
            samples = tuple(
                stream.push(int(t), dict(zip(members, row.tolist()))) for t, row in zip(ticks, held)
            )
            fused = np.array([s.fused for s in samples])
            ops += costs.fusvaf_measurement * held.size
        else:
            fused = held.mean(axis=1)

        window_ids = ticks // fusion.window
        windows: List[Aggregate] = []
        values: List[float] = []
        for window in np.unique(window_ids):
            rows = np.flatnonzero(window_ids == window)
            start, end = int(ticks[rows[0]]), int(ticks[rows[-1]])
            summary = aggregate(held[rows], start, end)
            windows.append(summary)
            values.append(summary.max if kind.is_binary else float(np.mean(fused[rows])))
            ops += costs.aggregation_sample * held[rows].size
            messages.extend(uplink_messages(cluster_id, end, AGGREGATE_FIELDS * bits, "aggregated", topology))
            if kind.is_analog and fusion.cluster_fusvaf:
                messages.extend(uplink_messages(cluster_id, end, bits, "fused", topology))

        if samples:
            flagged = _suspect_faulty(kind, members, samples, ticks, window_ids, fusion.fault_persistence)
            for (node_id, _), tick in flagged.items():
                logger.warning("%s: %s/%s suspected faulty at tick %d", cluster_id, node_id, kind.value, tick)
            suspected.update(flagged)

        kinds[kind] = KindSummary(
            kind=kind,
            members=members,
            ticks=ticks,
            held=held,
            fused=fused,
            samples=samples,
            windows=tuple(windows),
            window_values=np.asarray(values, dtype=float),
        )

    if not fusion.cluster_fusvaf:
        for report in reports:
            for message in report.messages:
                messages.extend(uplink_messages(cluster_id, message.tick, message.payload_bits, "raw", topology))

    return ClusterReport(
        cluster_id=cluster_id,
        kinds=kinds,
        suspected=suspected,
        messages=tuple(messages),
        ops=ops,
    )


# ============ CONSENSUS ============

@dataclass(frozen=True, eq=False)
class ConsensusOutcome:
    """Agreement triggered at `tick`; `converged=False` marks a degraded result"""

    tick: int
    reason: str
    clusters: Tuple[str, ...]
    initial: Tuple[float, ...]
    agreed: Optional[float]
    rounds: int
    converged: bool
    mse_history: Tuple[float, ...] = ()
    messages: Tuple[Message, ...] = ()
    ops: int = 0
    skipped: bool = False


def consensus_stage(
    estimates: Mapping[str, float],
    topology: Topology,
    config: ScenarioConfig,
    tick: int = 0,
    reason: str = "query",
) -> ConsensusOutcome:
    """
    Run average consensus among cluster heads

    Each round costs one message per peer link and direction. Fewer than two
    cluster heads skip the stage.
    """
    clusters = tuple(estimates)
    initial = tuple(float(v) for v in estimates.values())
    if len(clusters) < 2:
        logger.debug("consensus at tick %d skipped: %d cluster head(s)", tick, len(clusters))
        return ConsensusOutcome(
            tick=tick,
            reason=reason,
            clusters=clusters,
            initial=initial,
            agreed=initial[0] if initial else None,
            rounds=0,
            converged=True,
            skipped=True,
        )

    graph, labels = topology.peer_graph(list(clusters))
    result = run_consensus(
        ConsensusState(estimates=np.array(initial)),
        graph,
        tol=config.consensus.tol,
        max_iter=config.consensus.max_iter,
    )
    if not result.converged:
        logger.warning("consensus at tick %d returned a degraded result", tick)

    links = sorted(graph.edges)
    bits = config.fusion.sample_bits
    messages = tuple(
        Message(src=labels[a], dst=labels[b], tick=tick, payload_bits=bits, kind="consensus")
        for _ in range(result.iterations)
        for i, j in links
        for a, b in ((i, j), (j, i))
    )
    return ConsensusOutcome(
        tick=tick,
        reason=reason,
        clusters=clusters,
        initial=initial,
        agreed=result.agreed_value,
        rounds=result.iterations,
        converged=result.converged,
        mse_history=tuple(result.mse_history),
        messages=messages,
        ops=config.energy.ops.consensus_edge * len(messages),
    )
