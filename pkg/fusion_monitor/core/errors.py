"""
Exception hierarchy shared by every module

Each error carries a human-readable detail, a machine-readable category and
the exit code the CLI maps it to.
"""

from typing import Iterable, Optional

EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class FusionError(Exception):
    """Base class for all library errors"""

    category = "runtime"
    exit_code = EXIT_RUNTIME

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail

    def __str__(self) -> str:
        return self.detail


# ============ CONFIGURATION ============

class ConfigError(FusionError):
    """
    Invalid scenario or override

    `problems` lists every offending field as (dotted path, message).
    """

    category = "config"
    exit_code = EXIT_CONFIG

    def __init__(self, detail: str, problems: Optional[Iterable[tuple]] = None):
        self.problems = list(problems or [])
        if self.problems:
            lines = [f"{path}: {msg}" for path, msg in self.problems]
            detail = detail + "\n" + "\n".join(f"  - {line}" for line in lines)
        super().__init__(detail)

    @classmethod
    def from_validation(cls, exc, prefix: str = "") -> "ConfigError":
        """Build from a pydantic ValidationError, one problem per field"""
        problems = []
        for err in exc.errors():
            loc = ".".join(str(part) for part in err.get("loc", ()))
            path = f"{prefix}.{loc}" if prefix and loc else (prefix or loc)
            msg = err.get("msg", "invalid value")
            if msg.startswith("Value error, "):
                msg = msg[len("Value error, "):]
            # cross-field checks report "path: message; path: message"
            for part in msg.split("; "):
                if ": " in part and " " not in part.split(": ", 1)[0]:
                    sub_path, sub_msg = part.split(": ", 1)
                    full = f"{path}.{sub_path}" if path else sub_path
                    problems.append((full, sub_msg))
                else:
                    problems.append((path or "<root>", part))
        return cls("invalid scenario configuration", problems)


# ============ TRACE DATA ============

class TraceError(FusionError):
    category = "data"


class TraceParseError(TraceError):
    """Malformed row in a trace CSV (row numbers are 1-based data rows)"""

    def __init__(self, detail: str, row: Optional[int] = None):
        self.row = row
        if row is not None:
            detail = f"row {row}: {detail}"
        super().__init__(detail)


class EmptyTraceError(TraceError):
    pass


class NonMonotoneTimestampError(TraceError):
    def __init__(self, detail: str, row: Optional[int] = None):
        self.row = row
        if row is not None:
            detail = f"row {row}: {detail}"
        super().__init__(detail)


class DuplicateTimestampError(NonMonotoneTimestampError):
    pass


class MixedSensorKindError(TraceError):
    pass


# ============ NUMERICS ============

class NumericError(FusionError):
    """Numeric failure; `tick` is attached by the stream drivers"""

    category = "numeric"

    def __init__(self, detail: str, tick: Optional[int] = None):
        self.base_detail = detail
        self.tick = tick
        super().__init__(self._render())

    def _render(self) -> str:
        if self.tick is None:
            return self.base_detail
        return f"tick {self.tick}: {self.base_detail}"

    def at_tick(self, tick: int) -> "NumericError":
        """Attach the failing tick (first attachment wins)"""
        if self.tick is None:
            self.tick = tick
            self.detail = self._render()
            self.args = (self.detail,)
        return self


class NumericFailureError(NumericError):
    pass


class SingularBracketError(NumericError):
    """H P H^T + R is not invertible, usually a misconfigured R"""


class DegenerateDenominatorError(NumericError):
    """Every measurement invalidated and alpha = 0: nothing to fuse"""


class DimensionMismatchError(NumericError):
    pass


class DisconnectedGraphError(NumericError):
    pass


# ============ SIMULATION ============

class StageError(FusionError):
    """A simulation stage failed; provenance is kept in the message"""

    def __init__(self, stage: str, entity: str, cause: FusionError):
        self.stage = stage
        self.entity = entity
        self.category = cause.category
        self.exit_code = cause.exit_code
        super().__init__(f"{stage}[{entity}]: {cause.detail}")
