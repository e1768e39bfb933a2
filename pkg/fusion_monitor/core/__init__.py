"""
Shared domain types, trace I/O and errors
"""
from .errors import (
    ConfigError,
    DegenerateDenominatorError,
    DimensionMismatchError,
    DisconnectedGraphError,
    DuplicateTimestampError,
    EmptyTraceError,
    FusionError,
    MixedSensorKindError,
    NonMonotoneTimestampError,
    NumericFailureError,
    SingularBracketError,
    StageError,
    TraceParseError,
)
from .models import ANALOG_KINDS, BINARY_KINDS, Measurement, SensorKind, TickMeasurements, Trace
from .traces import load_trace, merge_traces, save_trace

__all__ = [
    "ANALOG_KINDS",
    "BINARY_KINDS",
    "ConfigError",
    "DegenerateDenominatorError",
    "DimensionMismatchError",
    "DisconnectedGraphError",
    "DuplicateTimestampError",
    "EmptyTraceError",
    "FusionError",
    "Measurement",
    "MixedSensorKindError",
    "NonMonotoneTimestampError",
    "NumericFailureError",
    "SensorKind",
    "SingularBracketError",
    "StageError",
    "TickMeasurements",
    "Trace",
    "TraceParseError",
    "load_trace",
    "merge_traces",
    "save_trace",
]
