"""
Three-level network: sensor nodes → cluster heads → gateway (NCW), with an
optional UAV relay/validator
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

from fusion_monitor.core.models import SensorKind
from fusion_monitor.filters.consensus import CommGraph
from fusion_monitor.sim.config import PatrolEntry, ScenarioConfig

GATEWAY = "gateway"
UAV = "uav"


@dataclass(frozen=True)
class SensorNode:
    node_id: str
    cluster_id: str
    position: float
    sensors: Tuple[SensorKind, ...]


@dataclass(frozen=True)
class ClusterHead:
    cluster_id: str
    members: Tuple[str, ...]
    peers: Tuple[str, ...]


@dataclass(frozen=True)
class Topology:
    nodes: Tuple[SensorNode, ...]
    cluster_heads: Tuple[ClusterHead, ...]
    peer_links: Tuple[Tuple[str, str], ...]
    patrol: Tuple[PatrolEntry, ...] = ()
    uav_relay: bool = False
    gateway: str = GATEWAY

    @classmethod
    def from_config(cls, config: ScenarioConfig) -> "Topology":
        links = tuple(config.peer_links)
        nodes = []
        heads = []
        for cluster in config.topology.clusters:
            for node in cluster.nodes:
                nodes.append(SensorNode(node.id, cluster.id, node.position, tuple(node.sensors)))
            peers = tuple(
                sorted({b for a, b in links if a == cluster.id} | {a for a, b in links if b == cluster.id})
            )
            heads.append(ClusterHead(cluster.id, tuple(n.id for n in cluster.nodes), peers))
        uav = config.topology.uav
        return cls(
            nodes=tuple(nodes),
            cluster_heads=tuple(heads),
            peer_links=links,
            patrol=tuple(uav.patrol) if uav else (),
            uav_relay=bool(uav and uav.relay),
        )

    # ---- lookups ----

    def node(self, node_id: str) -> SensorNode:
        for node in self.nodes:
            if node.node_id == node_id:
                return node
        raise KeyError(node_id)

    def cluster_of(self, node_id: str) -> str:
        return self.node(node_id).cluster_id

    def members(self, cluster_id: str) -> List[SensorNode]:
        return [n for n in self.nodes if n.cluster_id == cluster_id]

    @property
    def cluster_ids(self) -> List[str]:
        return [head.cluster_id for head in self.cluster_heads]

    def nearest_node(self, location: float, kinds: Tuple[SensorKind, ...] = ()) -> Optional[SensorNode]:
        """Closest node carrying any of `kinds` (any node when empty); ties go to declaration order"""
        candidates = [n for n in self.nodes if not kinds or set(kinds) & set(n.sensors)]
        if not candidates:
            return None
        return min(candidates, key=lambda n: abs(n.position - location))

    def nodes_within(self, location: float, radius: float, kind: SensorKind) -> List[SensorNode]:
        return [n for n in self.nodes if kind in n.sensors and abs(n.position - location) <= radius]

    def peer_graph(self, cluster_ids: Optional[List[str]] = None) -> Tuple[CommGraph, List[str]]:
        """Consensus graph over `cluster_ids` (all clusters by default) and its labels"""
        labels = list(cluster_ids) if cluster_ids is not None else self.cluster_ids
        index = {cid: i for i, cid in enumerate(labels)}
        edges = frozenset(
            (index[a], index[b]) for a, b in self.peer_links if a in index and b in index
        )
        return CommGraph(n=len(labels), edges=edges), labels

    # ---- UAV ----

    def uav_over(self, cluster_id: str, tick: int) -> bool:
        return any(e.cluster == cluster_id and e.start <= tick <= e.end for e in self.patrol)

    def uplink_route(self, cluster_id: str, tick: int) -> List[Tuple[str, str]]:
        """Hops from a cluster head to the gateway at `tick`"""
        if self.uav_relay and self.uav_over(cluster_id, tick):
            return [(cluster_id, UAV), (UAV, self.gateway)]
        return [(cluster_id, self.gateway)]

    def validation_visit(self, cluster_id: str, tick: int, horizon: int) -> Optional[int]:
        """First tick in [tick, tick + horizon] at which the UAV is over the cluster"""
        visits = [
            max(tick, e.start)
            for e in self.patrol
            if e.cluster == cluster_id and e.start <= tick + horizon and e.end >= tick
        ]
        return min(visits) if visits else None
