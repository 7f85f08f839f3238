"""
Error Types

One exception family for the whole platform. Each class carries the HTTP
status the dashboard answers with and the exit code the CLI returns, so
the Flask error handler and the CLI dispatcher never need their own tables.
"""


class WsnError(Exception):
    """Base class for every error raised by the platform."""

    http_status = 500
    exit_code = 1
    kind = "internal"

    def to_dict(self):
        return {"error": self.kind, "message": str(self)}


# ============================================================================
# VALIDATION
# ============================================================================

class ValidationError(WsnError, ValueError):
    """A payload, config value or argument failed its invariants."""

    http_status = 400
    exit_code = 2
    kind = "validation"


class ScenarioError(ValidationError):
    """A scenario file is invalid. Holds every violation found, not just the first."""

    kind = "scenario"

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class TraceFormatError(ValidationError):
    """A trace or fixture CSV has malformed rows."""

    kind = "trace_format"

    def __init__(self, path, bad_rows):
        self.path = str(path)
        self.bad_rows = list(bad_rows)
        rows = ", ".join(str(r) for r in self.bad_rows[:20])
        more = "" if len(self.bad_rows) <= 20 else f" (+{len(self.bad_rows) - 20} more)"
        super().__init__(f"{self.path}: malformed rows {rows}{more}")


class SignalRangeError(ValidationError):
    """A trace signal was sampled outside its time span."""

    kind = "signal_range"


class ReportMismatchError(ValidationError):
    """A report summary disagrees with the per-tick logs it was written from."""

    kind = "report_mismatch"

    def __init__(self, mismatches):
        self.mismatches = list(mismatches)
        super().__init__("summary does not match logs: " + ", ".join(self.mismatches))


# ============================================================================
# NUMERICS
# ============================================================================

class SeriesLengthError(ValidationError):
    """A series is too short for the requested operation."""

    kind = "series_length"


class ArityError(ValidationError):
    """Wrong number of values supplied (e.g. initial values for integration)."""

    kind = "arity"


class FitError(WsnError):
    """ARIMA fitting produced no stationary, invertible model."""

    http_status = 500
    exit_code = 4
    kind = "fit"


class InvalidModelError(FitError):
    """An ArimaModel violates its coefficient or variance invariants."""

    http_status = 400
    kind = "invalid_model"


class SelectionError(FitError):
    """Every candidate order in a selection grid failed to fit."""

    kind = "selection"


# ============================================================================
# PROTOCOL
# ============================================================================

class DesyncError(WsnError):
    """Node and sink halves of the dual prediction scheme disagree."""

    http_status = 500
    exit_code = 5
    kind = "desync"


class AlignmentError(ValidationError):
    """Two windows share no time points."""

    kind = "alignment"


# ============================================================================
# SERVICE
# ============================================================================

class ConflictError(WsnError):
    """A measurement with the same (sensor_id, tick) is already stored."""

    http_status = 409
    exit_code = 2
    kind = "conflict"


class NotFoundError(WsnError):
    """Unknown sensor, gateway, command or weather location."""

    http_status = 404
    exit_code = 2
    kind = "not_found"


class ListenerUnreachableError(WsnError):
    """A listener endpoint refused the connection at registration time."""

    http_status = 422
    exit_code = 3
    kind = "listener_unreachable"


# ============================================================================
# TRANSPORT
# ============================================================================

class TransportError(WsnError):
    """An HTTP peer could not be reached or answered with a server error."""

    http_status = 502
    exit_code = 3
    kind = "transport"


class WeatherUnavailableError(TransportError):
    """The weather service could not be reached."""

    kind = "weather_unavailable"


class StartupError(WsnError):
    """A service could not bind its port."""

    exit_code = 3
    kind = "startup"
