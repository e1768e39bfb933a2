"""
CSV ingestion, export and time alignment of measurement traces

File format: UTF-8, header `timestamp,value`, one reading per line.
"""

import logging
import re
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Sequence, Union

import pandas as pd

from fusion_monitor.core.errors import (
    DuplicateTimestampError,
    EmptyTraceError,
    MixedSensorKindError,
    NonMonotoneTimestampError,
    TraceError,
    TraceParseError,
)
from fusion_monitor.core.models import Measurement, SensorKind, TickMeasurements, Trace

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["timestamp", "value"]

PathLike = Union[str, Path]


def _parse_int(text: str, row: int) -> int:
    try:
        number = float(text)
    except ValueError:
        raise TraceParseError(f"timestamp {text!r} is not a number", row=row) from None
    if not number.is_integer() or number < 0:
        raise TraceParseError(f"timestamp {text!r} is not a non-negative integer tick", row=row)
    return int(number)


def _parse_float(text: str, row: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise TraceParseError(f"value {text!r} is not a number", row=row) from None


def load_trace(path: PathLike, node_id: str, sensor_kind: Union[SensorKind, str]) -> Trace:
    """
    Read a `timestamp,value` CSV into a Trace

    Raises:
        TraceParseError: malformed header or row (with 1-based data row number)
        EmptyTraceError: no data rows
        NonMonotoneTimestampError / DuplicateTimestampError: ordering violated
    """
    path = Path(path)
    kind = SensorKind(sensor_kind)

    try:
        df = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            skipinitialspace=True,
            encoding="utf-8",
        )
    except FileNotFoundError:
        raise TraceError(f"{path}: file does not exist") from None
    except pd.errors.EmptyDataError:
        raise EmptyTraceError(f"{path.name}: file is empty") from None
    except pd.errors.ParserError as exc:
        # pandas counts the header as line 1
        match = re.search(r"line (\d+)", str(exc))
        row = int(match.group(1)) - 1 if match else None
        raise TraceParseError(f"{path.name}: wrong number of fields", row=row) from None

    columns = [str(c).strip() for c in df.columns]
    if columns != TRACE_COLUMNS:
        raise TraceParseError(f"{path.name}: expected header 'timestamp,value', got {','.join(columns)!r}")
    if df.empty:
        raise EmptyTraceError(f"{path.name}: no readings")

    readings: List[Measurement] = []
    previous = None
    for row, (ts_text, value_text) in enumerate(df.itertuples(index=False, name=None), start=1):
        if not isinstance(ts_text, str) or not isinstance(value_text, str):
            raise TraceParseError("missing field", row=row)
        timestamp = _parse_int(ts_text.strip(), row)
        value = _parse_float(value_text.strip(), row)
        if previous is not None:
            if timestamp == previous:
                raise DuplicateTimestampError(f"duplicate timestamp {timestamp}", row=row)
            if timestamp < previous:
                raise NonMonotoneTimestampError(
                    f"timestamp {timestamp} follows {previous}", row=row
                )
        previous = timestamp
        try:
            readings.append(
                Measurement(node_id=node_id, sensor_kind=kind, timestamp=timestamp, value=value)
            )
        except ValueError as exc:
            raise TraceParseError(str(exc).splitlines()[-1].strip(), row=row) from None

    logger.debug("loaded %d readings from %s", len(readings), path)
    return Trace(readings=tuple(readings))


def trace_frame(trace: Trace) -> pd.DataFrame:
    return pd.DataFrame({"timestamp": trace.timestamps, "value": trace.values})


def save_trace(trace: Trace, path: PathLike) -> Path:
    """Write a Trace as `timestamp,value` CSV (inverse of load_trace)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    trace_frame(trace).to_csv(path, index=False, encoding="utf-8")
    return path


def merge_traces(traces: Sequence[Trace]) -> List[TickMeasurements]:
    """
    Align traces of one sensor kind on their ticks

    Every tick present in any trace yields the measurements of the traces that
    have it, in input order. Absent ticks contribute nothing (no interpolation).
    """
    if not traces:
        return []
    kinds = {trace.sensor_kind for trace in traces}
    if len(kinds) > 1:
        names = ", ".join(sorted(kind.value for kind in kinds))
        raise MixedSensorKindError(f"cannot merge traces of different sensor kinds: {names}")

    by_tick: Dict[int, List[Measurement]] = defaultdict(list)
    for trace in traces:
        for reading in trace.readings:
            by_tick[reading.timestamp].append(reading)

    return [
        TickMeasurements(tick=tick, measurements=tuple(by_tick[tick]))
        for tick in sorted(by_tick)
    ]
