"""
Scenario configuration schema (YAML document → pydantic models)

Every field has a default except `seed` and `topology`; unknown keys are
rejected. Dotted overrides (`energy.ops_per_bit=3000`) are applied to the raw
mapping before validation.
"""

import copy
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from fusion_monitor.core.errors import ConfigError
from fusion_monitor.core.models import ANALOG_KINDS, SensorKind
from fusion_monitor.filters.fusvaf import FusionParams, GateAdaptation

logger = logging.getLogger(__name__)


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# ============ TOPOLOGY ============

class NodeSpec(StrictModel):
    """Sensor node placed along the pipeline"""
    id: str = Field(..., min_length=1)
    position: float = Field(..., ge=0, description="Distance along the pipeline, meters")
    sensors: Tuple[SensorKind, ...] = Field(default=tuple(SensorKind), min_length=1)


class ClusterSpec(StrictModel):
    """Local network coordinated by one cluster head"""
    id: str = Field(..., min_length=1)
    nodes: Tuple[NodeSpec, ...] = Field(..., min_length=1)


class PatrolEntry(StrictModel):
    """UAV presence over a cluster during [start, end]"""
    start: int = Field(..., ge=0)
    end: int = Field(..., ge=0)
    cluster: str

    @model_validator(mode="after")
    def _ordered(self) -> "PatrolEntry":
        if self.end < self.start:
            raise ValueError("patrol end must not precede start")
        return self


class UavSpec(StrictModel):
    patrol: Tuple[PatrolEntry, ...] = ()
    relay: bool = Field(default=False, description="Route cluster uplink through the UAV while it patrols")


class TopologySpec(StrictModel):
    clusters: Tuple[ClusterSpec, ...] = Field(..., min_length=1)
    peer_links: Optional[Tuple[Tuple[str, str], ...]] = Field(
        default=None, description="Cluster-head peer links; default chains clusters in order"
    )
    uav: Optional[UavSpec] = None


# ============ SIGNALS, EVENTS, FAULTS ============

class SignalSpec(StrictModel):
    """Ground truth baseline + drift * t + amplitude * sin(2 pi t / period), plus noise"""
    baseline: float = 0.0
    drift: float = Field(default=0.0, description="Units per tick")
    noise_std: float = Field(default=0.0, ge=0)
    amplitude: float = 0.0
    period: int = Field(default=0, ge=0, description="Ticks; 0 disables the periodic term")


class SignalsSpec(StrictModel):
    pressure: SignalSpec = SignalSpec(baseline=500.0, noise_std=1.0)
    temperature: SignalSpec = SignalSpec(baseline=20.0, noise_std=0.2)
    humidity: SignalSpec = SignalSpec(baseline=60.0, noise_std=0.5)
    pir: SignalSpec = SignalSpec()
    magnetic: SignalSpec = SignalSpec()

    @model_validator(mode="after")
    def _binary(self) -> "SignalsSpec":
        for kind in (SensorKind.PIR, SensorKind.MAGNETIC):
            spec = getattr(self, kind.value)
            if spec.baseline not in (0.0, 1.0) or spec.drift or spec.amplitude:
                raise ValueError(f"{kind.value}: binary signals take a constant 0/1 baseline")
        return self

    def for_kind(self, kind: SensorKind) -> SignalSpec:
        return getattr(self, SensorKind(kind).value)


class EventSpec(StrictModel):
    """Leak (pressure ramp) or intrusion (pir/magnetic presence)"""
    kind: Literal["leak", "intrusion"]
    start: int = Field(..., ge=0)
    end: int = Field(..., ge=0)
    location: float = Field(..., ge=0, description="Meters along the pipeline")
    magnitude: float = Field(default=0.0, ge=0, description="Leak pressure drop at peak, kPa")
    influence_radius: float = Field(default=150.0, gt=0, description="Leak reach, meters")

    @model_validator(mode="after")
    def _ordered(self) -> "EventSpec":
        if self.end < self.start:
            raise ValueError("event end must not precede start")
        return self


class FaultSpec(StrictModel):
    """Sensor fault: corrupts readings, ground truth is unchanged"""
    node: str
    sensor: SensorKind
    mode: Literal["stuck", "offset", "drift", "spike"]
    start: int = Field(..., ge=0)
    end: int = Field(..., ge=0)
    value: float = Field(default=0.0, description="stuck: reading; offset/spike: added value; drift: units per tick")

    @model_validator(mode="after")
    def _check(self) -> "FaultSpec":
        if self.end < self.start:
            raise ValueError("fault end must not precede start")
        if self.sensor.is_binary:
            raise ValueError("faults apply to analog sensors only")
        return self


# ============ FUSION, CONSENSUS, DETECTION, ENERGY ============

class ClusterFusionParams(FusionParams):
    """FUSVAF parameters of the cluster heads; adaptive alpha is floored at 1 by default"""

    alpha_floor: float = Field(default=1.0, ge=0, description="Adaptive mode: lower bound on alpha_k")


class FusionSpec(StrictModel):
    """Placement flags and parameters of the node and cluster stages"""
    node_ekf: bool = Field(default=True, description="EKF + report-on-change at the nodes")
    q: float = Field(default=0.1, ge=0, description="EKF process noise variance")
    r: float = Field(default=0.1, gt=0, description="EKF measurement noise variance")
    p0: float = Field(default=1.0, ge=0, description="EKF initial variance")
    deadband: Dict[SensorKind, float] = Field(default_factory=dict, description="Report-on-change delta per kind")
    deadband_sigmas: float = Field(default=1.5, ge=0, description="Delta = this * noise_std for kinds not listed")
    sample_bits: int = Field(default=32, ge=1)
    cluster_fusvaf: bool = Field(default=True, description="FUSVAF at the cluster heads")
    window: int = Field(default=10, ge=1, description="Cluster reporting window, ticks")
    fault_persistence: int = Field(default=3, ge=1, description="Windows with sigma = 0 before a node is flagged")
    predictor: Literal["ekf", "smoothing"] = "ekf"
    params: ClusterFusionParams = ClusterFusionParams()
    gate: GateAdaptation = GateAdaptation()

    @field_validator("deadband")
    @classmethod
    def _non_negative(cls, value: Dict[SensorKind, float]) -> Dict[SensorKind, float]:
        for kind, delta in value.items():
            if delta < 0:
                raise ValueError(f"deadband for {kind.value} must be non-negative")
        return value


class ConsensusSpec(StrictModel):
    trigger: Literal["never", "on_suspicion", "on_query", "every_window"] = "on_suspicion"
    quantity: SensorKind = Field(default=SensorKind.TEMPERATURE, description="Shared quantity agreed on")
    queries: Tuple[int, ...] = Field(default=(), description="Query ticks for trigger=on_query")
    tol: float = Field(default=1e-9, gt=0)
    max_iter: int = Field(default=1000, ge=1)

    @field_validator("quantity")
    @classmethod
    def _analog(cls, value: SensorKind) -> SensorKind:
        if value not in ANALOG_KINDS:
            raise ValueError("consensus quantity must be an analog sensor kind")
        return value


class DetectionSpec(StrictModel):
    leak_threshold: float = Field(default=10.0, gt=0, description="kPa below the nominal pressure")
    leak_persistence: int = Field(default=2, ge=1, description="Consecutive windows below threshold")
    leak_min_members: int = Field(default=1, ge=1, description="Members whose window mean below threshold signal a local leak")
    validation_horizon: int = Field(default=50, ge=0, description="Ticks a UAV visit may follow a detection")


class OpCosts(StrictModel):
    """Microcontroller operations charged per unit of work"""
    ekf_step: int = Field(default=20, ge=0)
    report_check: int = Field(default=2, ge=0)
    fusvaf_measurement: int = Field(default=15, ge=0)
    aggregation_sample: int = Field(default=4, ge=0)
    consensus_edge: int = Field(default=2, ge=0)
    detection_window: int = Field(default=4, ge=0)


class EnergySpec(StrictModel):
    ops_per_bit: int = Field(default=2000, ge=1000, le=3000, description="Ops equivalent of one radio bit")
    op_cost: float = Field(default=1.0, gt=0, description="Energy per operation, abstract units")
    ops: OpCosts = OpCosts()


# ============ SCENARIO ============

class ScenarioConfig(StrictModel):
    """One simulation run"""
    name: str = "scenario"
    seed: int
    horizon: int = Field(default=400, ge=1, description="Simulated ticks")
    topology: TopologySpec
    signals: SignalsSpec = SignalsSpec()
    events: Tuple[EventSpec, ...] = ()
    faults: Tuple[FaultSpec, ...] = ()
    fusion: FusionSpec = FusionSpec()
    consensus: ConsensusSpec = ConsensusSpec()
    detection: DetectionSpec = DetectionSpec()
    energy: EnergySpec = EnergySpec()

    @model_validator(mode="after")
    def _consistent(self) -> "ScenarioConfig":
        problems = []
        cluster_ids = [c.id for c in self.topology.clusters]
        node_ids = [n.id for c in self.topology.clusters for n in c.nodes]
        reserved = {"gateway", "uav", "gcc"}
        for ident in cluster_ids + node_ids:
            if ident in reserved:
                problems.append(f"topology: id {ident!r} is reserved")
        if len(set(cluster_ids)) != len(cluster_ids):
            problems.append("topology.clusters: cluster ids must be unique")
        if len(set(node_ids)) != len(node_ids):
            problems.append("topology.clusters: node ids must be unique (a node belongs to one cluster)")
        if set(cluster_ids) & set(node_ids):
            problems.append("topology.clusters: node and cluster ids must differ")

        graph = nx.Graph()
        graph.add_nodes_from(cluster_ids)
        for i, (a, b) in enumerate(self.peer_links):
            if a not in cluster_ids or b not in cluster_ids or a == b:
                problems.append(f"topology.peer_links.{i}: invalid link ({a}, {b})")
            else:
                graph.add_edge(a, b)
        if cluster_ids and not nx.is_connected(graph):
            problems.append("topology.peer_links: cluster-head peer graph must be connected")

        if self.topology.uav is not None:
            for i, entry in enumerate(self.topology.uav.patrol):
                if entry.cluster not in cluster_ids:
                    problems.append(f"topology.uav.patrol.{i}.cluster: unknown cluster {entry.cluster!r}")
                if entry.end >= self.horizon:
                    problems.append(f"topology.uav.patrol.{i}.end: tick {entry.end} is outside the horizon ({self.horizon} ticks)")

        for i, event in enumerate(self.events):
            for name in ("start", "end"):
                tick = getattr(event, name)
                if tick >= self.horizon:
                    problems.append(f"events.{i}.{name}: tick {tick} is outside the horizon ({self.horizon} ticks)")

        sensors = {n.id: set(n.sensors) for c in self.topology.clusters for n in c.nodes}
        for i, fault in enumerate(self.faults):
            if fault.node not in sensors:
                problems.append(f"faults.{i}.node: unknown node {fault.node!r}")
            elif fault.sensor not in sensors[fault.node]:
                problems.append(f"faults.{i}.sensor: node {fault.node} has no {fault.sensor.value} sensor")
            if fault.end >= self.horizon:
                problems.append(f"faults.{i}.end: tick {fault.end} is outside the horizon ({self.horizon} ticks)")

        for i, tick in enumerate(self.consensus.queries):
            if not 0 <= tick < self.horizon:
                problems.append(f"consensus.queries.{i}: tick {tick} is outside the horizon ({self.horizon} ticks)")

        if problems:
            raise ValueError("; ".join(problems))
        return self

    @property
    def peer_links(self) -> Tuple[Tuple[str, str], ...]:
        """Explicit peer links, or a chain over the clusters in declaration order"""
        if self.topology.peer_links is not None:
            return self.topology.peer_links
        ids = [c.id for c in self.topology.clusters]
        return tuple(zip(ids, ids[1:]))

    def deadband_for(self, kind: SensorKind) -> float:
        if kind in self.fusion.deadband:
            return self.fusion.deadband[kind]
        return self.fusion.deadband_sigmas * self.signals.for_kind(kind).noise_std


# ============ LOADING ============

def _set_dotted(data: Dict[str, Any], dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    target: Any = data
    for depth, key in enumerate(keys[:-1]):
        if isinstance(target, list):
            try:
                target = target[int(key)]
                continue
            except (ValueError, IndexError):
                raise ConfigError(f"override {dotted!r}: no element {key!r}") from None
        if not isinstance(target, dict):
            raise ConfigError(f"override {dotted!r}: {'.'.join(keys[:depth])} is not a section")
        target = target.setdefault(key, {})
    last = keys[-1]
    if isinstance(target, list):
        try:
            target[int(last)] = value
        except (ValueError, IndexError):
            raise ConfigError(f"override {dotted!r}: no element {last!r}") from None
    elif isinstance(target, dict):
        target[last] = value
    else:
        raise ConfigError(f"override {dotted!r}: parent is not a section")


def _schema_has(dotted: str) -> bool:
    """True when the dotted path names a field of the schema"""
    model: Any = ScenarioConfig
    for key in dotted.split("."):
        if key.isdigit():
            continue
        if isinstance(model, type) and issubclass(model, BaseModel):
            field = model.model_fields.get(key)
            if field is None:
                return False
            model = _inner_model(field.annotation)
        elif model is dict:
            # free-form mapping (e.g. fusion.deadband.<kind>)
            model = None
        else:
            return False
    return True


def _inner_model(annotation: Any) -> Any:
    origin = getattr(annotation, "__origin__", None)
    if isinstance(annotation, type) and issubclass(annotation, BaseModel):
        return annotation
    if origin in (dict, Dict):
        return dict
    for arg in getattr(annotation, "__args__", ()) or ():
        inner = _inner_model(arg)
        if inner is not None:
            return inner
    return None


def parse_override(text: str) -> Tuple[str, Any]:
    """Split `key.path=value`; the value is parsed as a YAML scalar"""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = yaml.safe_load(raw) if raw.strip() else ""
    except yaml.YAMLError:
        value = raw
    return key, value


def apply_overrides(data: Mapping[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    result = copy.deepcopy(dict(data))
    for text in overrides:
        key, value = parse_override(text)
        if not _schema_has(key):
            raise ConfigError(f"override {key!r} does not name a configuration key", [(key, "unknown key")])
        _set_dotted(result, key, value)
    return result


def build_config(data: Mapping[str, Any], overrides: Sequence[str] = (), seed: Optional[int] = None) -> ScenarioConfig:
    """Validate a raw mapping (after overrides and an optional seed override)"""
    data = apply_overrides(data, overrides)
    if seed is not None:
        data["seed"] = seed
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError.from_validation(exc) from None


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as handle:
            data = yaml.safe_load(handle)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must contain a mapping")
    return data


def load_config(
    path: Union[str, Path],
    overrides: Sequence[str] = (),
    seed: Optional[int] = None,
) -> ScenarioConfig:
    """Read, override and validate a scenario file"""
    config = build_config(read_config_file(path), overrides, seed)
    logger.debug("loaded scenario %s (seed %d) from %s", config.name, config.seed, path)
    return config


def dump_config(config: ScenarioConfig) -> str:
    return yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False)


__all__ = [
    "ClusterSpec",
    "ConsensusSpec",
    "DetectionSpec",
    "EnergySpec",
    "EventSpec",
    "FaultSpec",
    "FusionSpec",
    "NodeSpec",
    "PatrolEntry",
    "ScenarioConfig",
    "SignalSpec",
    "SignalsSpec",
    "TopologySpec",
    "UavSpec",
    "apply_overrides",
    "build_config",
    "dump_config",
    "load_config",
    "parse_override",
    "read_config_file",
]
