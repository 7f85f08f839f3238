"""
Data Relevance Assessment

Two kinds of rules suggest how often a sensor should sample:

- schedule rules pick a sampling interval from the time of day
  (e.g. every 5 minutes during office hours, every 30 minutes otherwise);
- the weather rule compares what a node reports with what a weather
  service reports for the same place. When they coincide the node can
  sample rarely and the forecast is stored in its place; when they do not,
  the node keeps measuring as often as possible.

Everything here is pure except RelevanceTracker, whose verdict history is
owned by the dashboard's per-sensor actor.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import timezone

import numpy as np

from app.errors import AlignmentError, ValidationError
from app.models.command import ReconfigCommand, SubstituteSource

logger = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400
WEEKDAYS = ("mon", "tue", "wed", "thu", "fri", "sat", "sun")


# ============================================================================
# SCHEDULE RULES
# ============================================================================

def parse_time_of_day(value):
    """
    Convert ``HH:MM`` or ``HH:MM:SS`` to seconds after midnight.

    ``24:00`` is accepted as the end of the day.
    """
    if isinstance(value, int) and not isinstance(value, bool):
        seconds = value
    else:
        parts = str(value).strip().split(":")
        if len(parts) not in (2, 3) or not all(p.isdigit() for p in parts):
            raise ValidationError(f"time of day must look like HH:MM, got {value!r}")
        h, m = int(parts[0]), int(parts[1])
        s = int(parts[2]) if len(parts) == 3 else 0
        if m > 59 or s > 59:
            raise ValidationError(f"time of day out of range: {value!r}")
        seconds = h * 3600 + m * 60 + s
    if not 0 <= seconds <= SECONDS_PER_DAY:
        raise ValidationError(f"time of day out of range: {value!r}")
    return seconds


def format_time_of_day(seconds):
    h, rest = divmod(seconds, 3600)
    m, s = divmod(rest, 60)
    return f"{h:02d}:{m:02d}" if not s else f"{h:02d}:{m:02d}:{s:02d}"


@dataclass(frozen=True)
class ScheduleSegment:
    """
    A time-of-day window ``[start, end)`` with its sampling interval.

    Attributes:
        start_seconds (int): Window start, seconds after midnight UTC
        end_seconds (int): Window end (exclusive), at most 86400
        interval_seconds (int): Sampling interval inside the window
        weekdays (frozenset | None): Day numbers (Monday = 0) the window applies to; None means every day
    """

    start_seconds: int
    end_seconds: int
    interval_seconds: int
    weekdays: frozenset | None = None

    def covers(self, weekday, second_of_day):
        if self.weekdays is not None and weekday not in self.weekdays:
            return False
        return self.start_seconds <= second_of_day < self.end_seconds

    def overlaps(self, other):
        if self.weekdays is not None and other.weekdays is not None and not (self.weekdays & other.weekdays):
            return False
        return self.start_seconds < other.end_seconds and other.start_seconds < self.end_seconds

    def to_dict(self):
        data = {
            "start": format_time_of_day(self.start_seconds),
            "end": format_time_of_day(self.end_seconds),
            "interval_seconds": self.interval_seconds,
        }
        if self.weekdays is not None:
            data["weekdays"] = [WEEKDAYS[d] for d in sorted(self.weekdays)]
        return data


@dataclass(frozen=True)
class ScheduleRule:
    """
    Time-of-day sampling rule.

    Attributes:
        segments (tuple): Non-overlapping ScheduleSegments
        default_interval_seconds (int): Interval outside every segment
        evaluation_period_seconds (int): How often the rule is re-evaluated
    """

    segments: tuple = ()
    default_interval_seconds: int = 1800
    evaluation_period_seconds: int = 720

    def violations(self):
        problems = []
        if self.default_interval_seconds <= 0:
            problems.append("default_interval_seconds must be positive")
        if self.evaluation_period_seconds <= 0:
            problems.append("evaluation_period_seconds must be positive")
        for i, seg in enumerate(self.segments):
            if seg.interval_seconds <= 0:
                problems.append(f"segment {i}: interval_seconds must be positive")
            if seg.start_seconds >= seg.end_seconds:
                problems.append(f"segment {i}: start must be before end")
            for j in range(i):
                if seg.overlaps(self.segments[j]):
                    problems.append(f"segment {i} overlaps segment {j}")
        return problems

    def validate(self):
        problems = self.violations()
        if problems:
            raise ValidationError("invalid schedule rule: " + "; ".join(problems))
        return self

    def intervals(self):
        return sorted({self.default_interval_seconds} | {s.interval_seconds for s in self.segments})

    def to_dict(self):
        return {
            "default_interval_seconds": self.default_interval_seconds,
            "evaluation_period_seconds": self.evaluation_period_seconds,
            "segments": [s.to_dict() for s in self.segments],
        }

    @classmethod
    def from_dict(cls, data, problems=None):
        """
        Build a rule from its scenario-file form.

        When ``problems`` is a list, violations are appended to it and a
        best-effort rule is returned; otherwise the first problem raises.
        """
        collect = problems is not None
        problems = problems if collect else []
        segments = []
        for i, raw in enumerate(data.get("segments") or []):
            try:
                weekdays = raw.get("weekdays")
                if weekdays is not None:
                    weekdays = frozenset(_weekday_number(d) for d in weekdays)
                segments.append(
                    ScheduleSegment(
                        start_seconds=parse_time_of_day(raw["start"]),
                        end_seconds=parse_time_of_day(raw["end"]),
                        interval_seconds=int(raw["interval_seconds"]),
                        weekdays=weekdays,
                    )
                )
            except (KeyError, TypeError, ValueError, AttributeError) as exc:
                problems.append(f"schedule segment {i}: {exc}")
        try:
            rule = cls(
                segments=tuple(segments),
                default_interval_seconds=int(data.get("default_interval_seconds", 1800)),
                evaluation_period_seconds=int(data.get("evaluation_period_seconds", 720)),
            )
        except (TypeError, ValueError) as exc:
            problems.append(f"schedule: {exc}")
            rule = cls(segments=tuple(segments))
        problems.extend(rule.violations())
        if problems and not collect:
            raise ValidationError("invalid schedule rule: " + "; ".join(problems))
        return rule


def _weekday_number(value):
    if isinstance(value, int) and 0 <= value <= 6:
        return value
    name = str(value).strip().lower()[:3]
    if name not in WEEKDAYS:
        raise ValidationError(f"unknown weekday {value!r}")
    return WEEKDAYS.index(name)


def evaluate_schedule(rule, wallclock):
    """
    Sampling interval the rule prescribes at ``wallclock``.

    Args:
        rule (ScheduleRule): A valid rule
        wallclock (datetime): Aware timestamp; evaluated in UTC

    Returns:
        int: Interval of the segment containing the timestamp, else the default

    Example:
        >>> # office rule, weekdays 08:00-18:00 -> 300 s, default 1800 s
        >>> # Tuesday 10:00 -> 300, Tuesday 03:00 -> 1800
    """
    moment = wallclock.astimezone(timezone.utc)
    second_of_day = moment.hour * 3600 + moment.minute * 60 + moment.second
    for segment in rule.segments:
        if segment.covers(moment.weekday(), second_of_day):
            return segment.interval_seconds
    return rule.default_interval_seconds


# ============================================================================
# WEATHER AGREEMENT RULE
# ============================================================================

@dataclass(frozen=True)
class RelevancePolicy:
    """
    Parameters of the weather agreement rule.

    Attributes:
        agreement_tolerance (float): Largest mean absolute deviation still counted as agreement
        comparison_window_ticks (int): Node samples per comparison window
        relaxed_interval_seconds (int): Interval while node and weather agree
        eager_interval_seconds (int): Interval while they disagree
        hysteresis_windows (int): Consecutive equal verdicts needed before the command changes
    """

    agreement_tolerance: float = 1.0
    comparison_window_ticks: int = 12
    relaxed_interval_seconds: int = 1800
    eager_interval_seconds: int = 60
    hysteresis_windows: int = 2

    def violations(self):
        problems = []
        if not self.agreement_tolerance > 0:
            problems.append("agreement_tolerance must be positive")
        if self.comparison_window_ticks < 1:
            problems.append("comparison_window_ticks must be positive")
        if self.eager_interval_seconds < 1:
            problems.append("eager_interval_seconds must be positive")
        if self.relaxed_interval_seconds <= self.eager_interval_seconds:
            problems.append("relaxed_interval_seconds must exceed eager_interval_seconds")
        if self.hysteresis_windows < 1:
            problems.append("hysteresis_windows must be positive")
        return problems

    def validate(self):
        problems = self.violations()
        if problems:
            raise ValidationError("invalid relevance policy: " + "; ".join(problems))
        return self

    def to_dict(self):
        return {
            "agreement_tolerance": self.agreement_tolerance,
            "comparison_window_ticks": self.comparison_window_ticks,
            "relaxed_interval_seconds": self.relaxed_interval_seconds,
            "eager_interval_seconds": self.eager_interval_seconds,
            "hysteresis_windows": self.hysteresis_windows,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data or {})
        unknown = sorted(set(data) - set(cls.__dataclass_fields__))
        if unknown:
            raise ValidationError(f"unknown relevance policy keys: {unknown}")
        try:
            policy = cls(
                agreement_tolerance=float(data.get("agreement_tolerance", 1.0)),
                comparison_window_ticks=int(data.get("comparison_window_ticks", 12)),
                relaxed_interval_seconds=int(data.get("relaxed_interval_seconds", 1800)),
                eager_interval_seconds=int(data.get("eager_interval_seconds", 60)),
                hysteresis_windows=int(data.get("hysteresis_windows", 2)),
            )
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"invalid relevance policy: {exc}") from exc
        return policy.validate()


@dataclass(frozen=True)
class WeatherRule:
    """The weather agreement rule as attached to one sensor."""

    location_id: str
    policy: RelevancePolicy = RelevancePolicy()

    def to_dict(self):
        return {"location_id": self.location_id, "policy": self.policy.to_dict()}

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict) or not data.get("location_id"):
            raise ValidationError("weather rule needs a 'location_id'")
        return cls(str(data["location_id"]), RelevancePolicy.from_dict(data.get("policy")))


@dataclass(frozen=True)
class RelevanceVerdict:
    agrees: bool
    mean_abs_deviation: float
    window_ticks_compared: int

    def to_dict(self):
        return {
            "agrees": self.agrees,
            "mean_abs_deviation": self.mean_abs_deviation,
            "window_ticks_compared": self.window_ticks_compared,
        }


def nearest_indices(reference_times, times):
    """Index of the nearest reference time for every entry of ``times``; ties go to the earlier one."""
    reference_times = np.asarray(reference_times)
    right = np.clip(np.searchsorted(reference_times, times, side="left"), 0, len(reference_times) - 1)
    left = np.clip(right - 1, 0, len(reference_times) - 1)
    take_left = np.abs(times - reference_times[left]) <= np.abs(reference_times[right] - times)
    return np.where(take_left, left, right)


def assess_relevance(node_window, reference_window, policy):
    """
    Compare a node's window with a reference (weather) window.

    The reference is resampled to the node's sample times by nearest
    neighbour; only node samples inside the reference span are compared.

    Args:
        node_window (Series): Node samples
        reference_window (Series): Reference samples on the same time base
        policy (RelevancePolicy): Supplies the agreement tolerance

    Returns:
        RelevanceVerdict

    Raises:
        AlignmentError: If no node sample falls inside the reference span
    """
    if not len(node_window) or not len(reference_window):
        raise AlignmentError("cannot compare empty windows")
    node_t = np.asarray(node_window.times(), dtype=np.int64)
    ref_t = np.asarray(reference_window.times(), dtype=np.int64)
    node_v = np.asarray(node_window.values, dtype=float)
    ref_v = np.asarray(reference_window.values, dtype=float)

    inside = (node_t >= ref_t[0]) & (node_t <= ref_t[-1])
    if not inside.any():
        raise AlignmentError("node and reference windows do not overlap in time")

    nearest = nearest_indices(ref_t, node_t[inside])
    deviation = float(np.mean(np.abs(node_v[inside] - ref_v[nearest])))
    compared = int(inside.sum())
    return RelevanceVerdict(deviation <= policy.agreement_tolerance, deviation, compared)


def decide_reconfiguration(verdict, policy, sensor_id):
    """
    Turn a verdict into a command for ``sensor_id``.

    Agreement relaxes sampling and substitutes the weather forecast;
    disagreement sets the eager interval and stops substitution.
    """
    return command_for(verdict.agrees, policy, sensor_id)


def command_for(agrees, policy, sensor_id):
    if agrees:
        return ReconfigCommand(
            target_sensor_id=sensor_id,
            set_interval_seconds=policy.relaxed_interval_seconds,
            substitute_source=SubstituteSource.WEATHER_FORECAST,
            origin="weather_rule",
        )
    return ReconfigCommand(
        target_sensor_id=sensor_id,
        set_interval_seconds=policy.eager_interval_seconds,
        substitute_source=SubstituteSource.NONE,
        origin="weather_rule",
    )


class RelevanceTracker:
    """
    Verdict hysteresis for one sensor.

    The settled state changes only after ``hysteresis_windows`` consecutive
    verdicts point the same way. ``observe`` returns the newly settled
    agreement flag on a change and None otherwise.
    """

    def __init__(self, policy):
        self.policy = policy
        self.settled = None
        self._streak_value = None
        self._streak = 0

    def observe(self, agrees):
        if agrees == self._streak_value:
            self._streak += 1
        else:
            self._streak_value = agrees
            self._streak = 1
        if self._streak >= self.policy.hysteresis_windows and agrees != self.settled:
            self.settled = agrees
            return agrees
        return None

    def force(self, agrees):
        """Settle immediately, bypassing hysteresis (service outage path)."""
        self._streak_value = agrees
        self._streak = self.policy.hysteresis_windows
        if agrees == self.settled:
            return None
        self.settled = agrees
        return agrees
