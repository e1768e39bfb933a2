"""
Messages, the delivery log and the ops-equivalent energy model

Transmitting one bit costs as much as `ops_per_bit` microcontroller
operations (1000 to 3000); radio energy = bits * ops_per_bit * op_cost.
"""

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from fusion_monitor.sim.config import EnergySpec

MessageKind = Literal["raw", "aggregated", "fused", "alert", "consensus"]
MESSAGE_KINDS = ("raw", "aggregated", "fused", "alert", "consensus")


class Message(BaseModel):
    """One radio transmission between two entities"""

    model_config = ConfigDict(frozen=True)

    src: str = Field(..., min_length=1)
    dst: str = Field(..., min_length=1)
    tick: int = Field(..., ge=0)
    payload_bits: int = Field(..., ge=1)
    kind: MessageKind


@dataclass
class MessageBus:
    """
    Lossless delivery log

    Every sent message lands in the sender's outbox and, exactly once, in the
    receiver's inbox.
    """

    log: List[Message] = field(default_factory=list)
    outbox: Dict[str, List[Message]] = field(default_factory=lambda: defaultdict(list))
    inbox: Dict[str, List[Message]] = field(default_factory=lambda: defaultdict(list))

    def send(self, message: Message) -> None:
        self.log.append(message)
        self.outbox[message.src].append(message)
        self.inbox[message.dst].append(message)

    def send_all(self, messages: Iterable[Message]) -> None:
        for message in messages:
            self.send(message)

    @property
    def total_bits(self) -> int:
        return sum(m.payload_bits for m in self.log)

    def count(self, kind: Optional[str] = None) -> int:
        if kind is None:
            return len(self.log)
        return sum(1 for m in self.log if m.kind == kind)


@dataclass(frozen=True)
class EnergyModel:
    ops_per_bit: int = 2000
    op_cost: float = 1.0

    def __post_init__(self):
        if not 1000 <= self.ops_per_bit <= 3000:
            raise ValueError(f"ops_per_bit must be within [1000, 3000], got {self.ops_per_bit}")
        if self.op_cost <= 0:
            raise ValueError("op_cost must be positive")

    @classmethod
    def from_spec(cls, spec: EnergySpec) -> "EnergyModel":
        return cls(ops_per_bit=spec.ops_per_bit, op_cost=spec.op_cost)

    def radio(self, bits: int) -> float:
        return float(bits * self.ops_per_bit) * self.op_cost

    def compute(self, ops: int) -> float:
        return float(ops) * self.op_cost
