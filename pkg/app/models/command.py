"""
Reconfiguration Command Model Module

Instructions travelling from the dashboard to a sensor node through its
gateway, and the delivery reports that track them.
"""

from dataclasses import dataclass, replace
from enum import Enum

from app.analytics.dps import ModelUpdateMsg
from app.errors import ValidationError
from app.helpers.validation import optional_text, require_identifier, to_float, to_int


class SubstituteSource(str, Enum):
    NONE = "none"
    WEATHER_FORECAST = "weather_forecast"


class DeliveryStatus(str, Enum):
    QUEUED = "queued"
    FORWARDED = "forwarded"
    APPLIED = "applied"
    FAILED = "failed"


@dataclass(frozen=True)
class ReconfigCommand:
    """
    An instruction for one sensor node. At least one field besides the target is set.

    Attributes:
        target_sensor_id (str): Sensor the command is meant for
        set_interval_seconds (int, optional): New sampling interval
        model_update (ModelUpdateMsg, optional): New DPS prediction model
        threshold_epsilon (float, optional): New DPS suppression threshold
        substitute_source (SubstituteSource, optional): Weather substitution on/off
        command_id (str, optional): Assigned by the dashboard on dispatch
        origin (str): 'manual' for injected commands, otherwise the rule that issued it
    """

    target_sensor_id: str
    set_interval_seconds: int | None = None
    model_update: ModelUpdateMsg | None = None
    threshold_epsilon: float | None = None
    substitute_source: SubstituteSource | None = None
    command_id: str | None = None
    origin: str = "manual"

    def validate(self):
        if (
            self.set_interval_seconds is None
            and self.model_update is None
            and self.threshold_epsilon is None
            and self.substitute_source is None
        ):
            raise ValidationError("reconfiguration command must set at least one field")
        if self.set_interval_seconds is not None and self.set_interval_seconds <= 0:
            raise ValidationError("set_interval_seconds must be positive")
        if self.threshold_epsilon is not None and not self.threshold_epsilon > 0:
            raise ValidationError("threshold_epsilon must be positive")
        return self

    def with_id(self, command_id):
        return replace(self, command_id=command_id)

    def to_dict(self):
        return {
            "command_id": self.command_id,
            "target_sensor_id": self.target_sensor_id,
            "set_interval_seconds": self.set_interval_seconds,
            "model_update": self.model_update.to_dict() if self.model_update else None,
            "threshold_epsilon": self.threshold_epsilon,
            "substitute_source": self.substitute_source.value if self.substitute_source else None,
            "origin": self.origin,
        }

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ValidationError("command payload must be a JSON object")
        interval = data.get("set_interval_seconds")
        threshold = data.get("threshold_epsilon")
        model = data.get("model_update")
        source = optional_text(data, "substitute_source", maxlen=32)
        try:
            source = SubstituteSource(source) if source else None
        except ValueError:
            raise ValidationError("'substitute_source' must be 'none' or 'weather_forecast'") from None
        command = cls(
            target_sensor_id=require_identifier(data, "target_sensor_id"),
            set_interval_seconds=None if interval is None else to_int(interval, "set_interval_seconds", minimum=1),
            model_update=None if model is None else ModelUpdateMsg.from_dict(model),
            threshold_epsilon=None if threshold is None else to_float(threshold, "threshold_epsilon", positive=True),
            substitute_source=source,
            command_id=optional_text(data, "command_id", maxlen=64),
            origin=optional_text(data, "origin", maxlen=32, default="manual"),
        )
        return command.validate()


@dataclass(frozen=True)
class DeliveryReport:
    command_id: str
    target_sensor_id: str
    gateway_id: str
    status: DeliveryStatus
    detail: str = ""

    def to_dict(self):
        return {
            "command_id": self.command_id,
            "target_sensor_id": self.target_sensor_id,
            "gateway_id": self.gateway_id,
            "status": self.status.value,
            "detail": self.detail,
        }


def parse_delivery_outcome(data):
    """Read a gateway's ``{command_id, applied, detail}`` outcome report."""
    command_id = optional_text(data, "command_id", maxlen=64)
    if not command_id:
        raise ValidationError("'command_id' is required")
    applied = data.get("applied")
    if not isinstance(applied, bool):
        raise ValidationError("'applied' must be a boolean")
    return command_id, applied, optional_text(data, "detail", maxlen=256, default="")
