"""
In-Process Analytics Engine

One ``SensorActor`` per registered sensor owns everything the dashboard
knows about that sensor's behaviour: the DPS sink half, the sampling
interval it last prescribed, the schedule rule clock, the weather-rule
comparison window with its hysteresis and the substitution flag. The
dashboard feeds it every observation (a received measurement or a
suppressed slot) under the actor's lock, in tick order.

The actor only decides; storing, publishing and dispatching stay with
the dashboard.
"""

from __future__ import annotations

import copy
import logging
import threading
from dataclasses import dataclass, field, replace

from app.analytics.dps import (
    DpsConfig,
    ModelUpdateMsg,
    adopt_sink_model,
    maybe_refresh_model,
    new_sink_state,
    sink_step,
    with_threshold,
)
from app.analytics.arima import Series
from app.analytics.relevance import (
    RelevanceTracker,
    ScheduleRule,
    WeatherRule,
    assess_relevance,
    command_for,
    evaluate_schedule,
)
from app.errors import ValidationError, WeatherUnavailableError, WsnError
from app.helpers.validation import epoch_seconds, format_timestamp, from_epoch, require_identifier
from app.models.command import ReconfigCommand, SubstituteSource
from app.models.measurement import Measurement, Provenance

logger = logging.getLogger(__name__)


# ============================================================================
# PROFILE
# ============================================================================

@dataclass(frozen=True)
class SensorProfile:
    """
    What a gateway declares about one of its sensors when it registers.

    Attributes:
        sensor_id (str): Sensor identifier
        interval_seconds (int): Sampling interval the node starts with
        unit (str): Measurement unit
        dps (DpsConfig | None): Dual prediction parameters; None when the node transmits every sample
        schedule (ScheduleRule | None): Time-of-day sampling rule
        weather (WeatherRule | None): Weather agreement rule
    """

    sensor_id: str
    interval_seconds: int
    unit: str = "degC"
    dps: DpsConfig | None = None
    schedule: ScheduleRule | None = None
    weather: WeatherRule | None = None

    def __post_init__(self):
        if self.interval_seconds <= 0:
            raise ValidationError(f"sensor '{self.sensor_id}': interval_seconds must be positive")
        if self.schedule is not None and self.weather is not None:
            raise ValidationError(f"sensor '{self.sensor_id}': schedule and weather rules are mutually exclusive")

    def to_dict(self):
        return {
            "sensor_id": self.sensor_id,
            "interval_seconds": self.interval_seconds,
            "unit": self.unit,
            "dps": self.dps.to_dict() if self.dps else None,
            "schedule": self.schedule.to_dict() if self.schedule else None,
            "weather": self.weather.to_dict() if self.weather else None,
        }

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ValidationError("sensor profile must be a JSON object")
        try:
            interval = int(data.get("interval_seconds"))
        except (TypeError, ValueError):
            raise ValidationError("'interval_seconds' must be an integer") from None
        return cls(
            sensor_id=require_identifier(data, "sensor_id"),
            interval_seconds=interval,
            unit=str(data.get("unit") or "degC"),
            dps=DpsConfig.from_dict(data["dps"]) if data.get("dps") else None,
            schedule=ScheduleRule.from_dict(data["schedule"]) if data.get("schedule") else None,
            weather=WeatherRule.from_dict(data["weather"]) if data.get("weather") else None,
        )


@dataclass
class Observation:
    """
    Outcome of one observation: what to store, what to announce, what to command.

    ``substituted`` holds weather values for the instants a relaxed node
    skipped since its previous observation; they are stored before
    ``measurement``.
    """

    measurement: Measurement
    analysis: list = field(default_factory=list)
    commands: list = field(default_factory=list)
    substituted: list = field(default_factory=list)


# ============================================================================
# ACTOR
# ============================================================================

class SensorActor:
    """
    Per-sensor analytics state.

    Callers hold ``lock`` around ``observe`` and ``adopt`` so that one
    sensor's observations are processed strictly one at a time.
    """

    def __init__(self, profile, weather_client=None):
        self.profile = profile
        self.lock = threading.RLock()
        self.weather_client = weather_client
        self.interval = profile.interval_seconds
        self.dps_config = profile.dps
        self.sink = new_sink_state(profile.dps) if profile.dps else None
        self.substituting = False
        self.substitute_interval = None
        self.last_tick = None
        self.next_schedule_eval = None
        self.window = []
        self.tracker = RelevanceTracker(profile.weather.policy) if profile.weather else None

    @property
    def sensor_id(self):
        return self.profile.sensor_id

    def observe(self, measurement, transmitted=True):
        """
        Process one sampling instant.

        Args:
            measurement (Measurement): The received measurement; for a suppressed
                slot its value is ignored
            transmitted (bool): False for a slot the node suppressed

        Returns:
            Observation

        Raises:
            ValidationError: A suppressed slot for a sensor without DPS
            DesyncError: The DPS sink detects a protocol desync
        """
        analysis, commands = [], []
        value = measurement.value
        provenance = Provenance.SENSED

        if self.sink is not None:
            self.sink, value = sink_step(self.sink, measurement.value if transmitted else None, self.dps_config)
            if not transmitted:
                provenance = Provenance.DPS_RECONSTRUCTED
            msg = maybe_refresh_model(self.sink, self.dps_config)
            if msg is not None:
                commands.append(ReconfigCommand(self.sensor_id, model_update=msg, origin="dps_refresh"))
                analysis.append(
                    {
                        "kind": "model_refresh",
                        "sensor_id": self.sensor_id,
                        "dps_tick": msg.origin_tick,
                        "model": msg.to_dict(),
                    }
                )
        elif not transmitted:
            raise ValidationError(f"sensor '{self.sensor_id}' has no DPS profile; slots cannot be reported")

        stored = replace(measurement, value=value, provenance=provenance)
        epoch = epoch_seconds(measurement.wallclock)

        substituted = []
        if self.substituting:
            substituted = self._substitute_skipped(measurement, commands, analysis)

        if self.profile.schedule is not None:
            self._evaluate_schedule(epoch, commands, analysis)

        if self.tracker is not None:
            self.window.append((epoch, value))
            if len(self.window) >= self.profile.weather.policy.comparison_window_ticks:
                self._evaluate_weather(commands, analysis)

        self.last_tick = measurement.tick
        return Observation(stored, analysis, commands, substituted)

    # ------------------------------------------------------------------
    # rules
    # ------------------------------------------------------------------

    def _evaluate_schedule(self, epoch, commands, analysis):
        rule = self.profile.schedule
        if self.next_schedule_eval is not None and epoch < self.next_schedule_eval:
            return
        boundary = epoch - epoch % rule.evaluation_period_seconds
        self.next_schedule_eval = boundary + rule.evaluation_period_seconds
        interval = evaluate_schedule(rule, from_epoch(boundary))
        analysis.append(
            {
                "kind": "schedule",
                "sensor_id": self.sensor_id,
                "evaluated_at": format_timestamp(from_epoch(boundary)),
                "interval_seconds": interval,
            }
        )
        if interval != self.interval:
            commands.append(ReconfigCommand(self.sensor_id, set_interval_seconds=interval, origin="schedule_rule"))

    def _evaluate_weather(self, commands, analysis):
        rule = self.profile.weather
        times = [t for t, _ in self.window]
        node = Series(tuple(v for _, v in self.window), 0, self.interval, times[0])
        self.window = []

        start = times[0] - times[0] % 3600
        hours = (times[-1] - start + 3599) // 3600 + 1
        try:
            reference = self._weather().fetch_forecast(rule.location_id, hours, at=from_epoch(start))
            verdict = assess_relevance(node, reference.to_series(), rule.policy)
        except WsnError as exc:
            logger.warning(f"weather rule for '{self.sensor_id}' could not compare: {exc}")
            analysis.append({"kind": "relevance", "sensor_id": self.sensor_id, "error": str(exc)})
            settled = self.tracker.force(False)
        else:
            analysis.append({"kind": "relevance", "sensor_id": self.sensor_id, **verdict.to_dict()})
            settled = self.tracker.observe(verdict.agrees)
        if settled is not None:
            commands.append(command_for(settled, rule.policy, self.sensor_id))

    def _weather(self):
        if self.weather_client is None:
            raise WeatherUnavailableError("no weather service configured")
        return self.weather_client

    def _substitute_skipped(self, measurement, commands, analysis):
        """
        Weather readings for the instants the relaxed node no longer samples.

        The instants lie on the sensor's pre-relaxation interval, strictly
        between the previous observation and ``measurement``. The node's own
        value is stored unchanged. If any reading is unavailable nothing is
        substituted and the sensor is sent back to the eager interval.
        """
        if self.last_tick is None or not self.substitute_interval:
            return []
        rule = self.profile.weather
        at = epoch_seconds(measurement.wallclock)
        substituted = []
        try:
            for tick in range(self.last_tick + self.substitute_interval, measurement.tick, self.substitute_interval):
                wallclock = from_epoch(at - (measurement.tick - tick))
                reading = self._weather().fetch_current(rule.location_id, at=wallclock)
                substituted.append(
                    Measurement(
                        self.sensor_id, tick, wallclock, reading.temperature, measurement.unit,
                        Provenance.WEATHER_FORECAST,
                    )
                )
        except WsnError as exc:
            logger.warning(f"weather substitution for '{self.sensor_id}' failed: {exc}")
            analysis.append({"kind": "relevance", "sensor_id": self.sensor_id, "error": str(exc)})
            settled = self.tracker.force(False)
            if settled is not None:
                commands.append(command_for(settled, rule.policy, self.sensor_id))
            return []
        return substituted

    # ------------------------------------------------------------------
    # rollback
    # ------------------------------------------------------------------

    def checkpoint(self):
        """Capture what ``observe`` changes, so a failed store write can be undone."""
        sink = None
        if self.sink is not None:
            sink = (replace(self.sink), len(self.sink.reconstruction))
        return {
            "sink": sink,
            "window": list(self.window),
            "tracker": copy.copy(self.tracker),
            "next_schedule_eval": self.next_schedule_eval,
            "last_tick": self.last_tick,
        }

    def restore(self, saved):
        if saved["sink"] is not None:
            sink, length = saved["sink"]
            # the reconstruction list is shared with the live state
            del sink.reconstruction[length:]
            self.sink = sink
        self.window = saved["window"]
        self.tracker = saved["tracker"]
        self.next_schedule_eval = saved["next_schedule_eval"]
        self.last_tick = saved["last_tick"]

    # ------------------------------------------------------------------
    # commands
    # ------------------------------------------------------------------

    def adopt(self, command):
        """
        Bring the actor in line with a command about to be dispatched.

        Returns the command as it must be forwarded: a manual model update
        is pinned to the sink's current tick.
        """
        previous_interval = self.interval
        if command.model_update is not None and command.origin != "dps_refresh":
            if self.sink is None:
                raise ValidationError(f"sensor '{self.sensor_id}' has no DPS profile")
            msg = command.model_update
            if msg.origin_tick is None:
                msg = ModelUpdateMsg(msg.model, self.sink.tick)
            adopt_sink_model(self.sink, msg)
            command = replace(command, model_update=msg)
        if command.threshold_epsilon is not None:
            if self.dps_config is None:
                raise ValidationError(f"sensor '{self.sensor_id}' has no DPS profile")
            self.dps_config = with_threshold(self.dps_config, command.threshold_epsilon)
        if command.set_interval_seconds is not None and command.set_interval_seconds != self.interval:
            self.interval = command.set_interval_seconds
            self.window = []
        if command.substitute_source is not None:
            if command.substitute_source is SubstituteSource.WEATHER_FORECAST and self.profile.weather is None:
                raise ValidationError(f"sensor '{self.sensor_id}' has no weather location to substitute from")
            substituting = command.substitute_source is SubstituteSource.WEATHER_FORECAST
            if substituting and not self.substituting:
                self.substitute_interval = previous_interval
            self.substituting = substituting
        return command

    def state(self):
        return {
            "sensor_id": self.sensor_id,
            "interval_seconds": self.interval,
            "substituting": self.substituting,
            "dps": self.sink.to_dict() if self.sink else None,
            "threshold_epsilon": self.dps_config.threshold_epsilon if self.dps_config else None,
            "weather_settled": None if self.tracker is None else self.tracker.settled,
        }
