"""
Domain types shared by the filters and the simulator
"""

import math
from enum import Enum
from typing import Iterable, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class SensorKind(str, Enum):
    """Sensor families carried by pipeline nodes"""

    PRESSURE = "pressure"        # kPa
    TEMPERATURE = "temperature"  # °C
    HUMIDITY = "humidity"        # %RH
    PIR = "pir"                  # presence, 0/1
    MAGNETIC = "magnetic"        # presence, 0/1

    @property
    def is_binary(self) -> bool:
        return self in (SensorKind.PIR, SensorKind.MAGNETIC)

    @property
    def is_analog(self) -> bool:
        return not self.is_binary


ANALOG_KINDS = tuple(kind for kind in SensorKind if kind.is_analog)
BINARY_KINDS = tuple(kind for kind in SensorKind if kind.is_binary)


class Measurement(BaseModel):
    """One timestamped scalar reading from a named sensor on a named node"""

    model_config = ConfigDict(frozen=True)

    node_id: str = Field(..., min_length=1)
    sensor_kind: SensorKind
    timestamp: int = Field(ge=0, description="Discrete tick")
    value: float

    @field_validator("value")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("reading must be finite")
        return value

    @model_validator(mode="after")
    def _binary_values(self) -> "Measurement":
        if self.sensor_kind.is_binary and self.value not in (0.0, 1.0):
            raise ValueError(f"{self.sensor_kind.value} readings must be 0 or 1, got {self.value}")
        return self


class Trace(BaseModel):
    """
    Ordered readings of one (node_id, sensor_kind) stream

    Non-empty, strictly increasing timestamps, single node and kind.
    """

    model_config = ConfigDict(frozen=True)

    readings: Tuple[Measurement, ...]

    @model_validator(mode="after")
    def _check(self) -> "Trace":
        if not self.readings:
            raise ValueError("trace must contain at least one reading")
        first = self.readings[0]
        previous = None
        for reading in self.readings:
            if reading.node_id != first.node_id or reading.sensor_kind != first.sensor_kind:
                raise ValueError("trace mixes node ids or sensor kinds")
            if previous is not None and reading.timestamp <= previous:
                raise ValueError(
                    f"timestamps must be strictly increasing ({reading.timestamp} after {previous})"
                )
            previous = reading.timestamp
        return self

    @classmethod
    def from_arrays(
        cls,
        node_id: str,
        sensor_kind: SensorKind,
        timestamps: Iterable[int],
        values: Iterable[float],
    ) -> "Trace":
        """Build a trace from parallel tick/value sequences"""
        kind = SensorKind(sensor_kind)
        readings = tuple(
            Measurement(node_id=node_id, sensor_kind=kind, timestamp=int(t), value=float(v))
            for t, v in zip(timestamps, values)
        )
        return cls(readings=readings)

    @property
    def node_id(self) -> str:
        return self.readings[0].node_id

    @property
    def sensor_kind(self) -> SensorKind:
        return self.readings[0].sensor_kind

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([r.timestamp for r in self.readings], dtype=np.int64)

    @property
    def values(self) -> np.ndarray:
        return np.array([r.value for r in self.readings], dtype=float)

    def __len__(self) -> int:
        return len(self.readings)


class TickMeasurements(BaseModel):
    """Measurements from every trace that has a reading at `tick`"""

    model_config = ConfigDict(frozen=True)

    tick: int = Field(ge=0)
    measurements: Tuple[Measurement, ...]

    @property
    def values(self) -> Tuple[float, ...]:
        return tuple(m.value for m in self.measurements)

    def by_node(self) -> dict:
        return {m.node_id: m.value for m in self.measurements}
