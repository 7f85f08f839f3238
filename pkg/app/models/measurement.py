"""
Measurement Model Module

Defines the measurement record collected, stored and published by the
dashboard, together with its storage envelope.
"""

import math
from dataclasses import dataclass, replace
from datetime import datetime
from enum import Enum

from app.errors import ValidationError
from app.helpers.validation import (
    format_timestamp,
    optional_text,
    parse_timestamp,
    require_identifier,
    to_float,
    to_int,
)


class Provenance(str, Enum):
    """Where a stored value came from."""

    SENSED = "sensed"
    DPS_RECONSTRUCTED = "dps_reconstructed"
    WEATHER_FORECAST = "weather_forecast"


@dataclass(frozen=True)
class Measurement:
    """
    One timestamped sensor reading with provenance.

    Attributes:
        sensor_id (str): Identifier of the reporting sensor
        tick (int): Simulated second of the sample; (sensor_id, tick) is unique in the store
        wallclock (datetime): UTC timestamp of the sample
        value (float): Finite reading in ``unit``
        unit (str): Measurement unit, e.g. 'degC'
        provenance (Provenance): sensed, dps_reconstructed or weather_forecast
    """

    sensor_id: str
    tick: int
    wallclock: datetime
    value: float
    unit: str = "degC"
    provenance: Provenance = Provenance.SENSED

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        if not math.isfinite(self.value):
            raise ValidationError("measurement value must be finite")
        # UTC, whole seconds
        object.__setattr__(self, "wallclock", parse_timestamp(self.wallclock).replace(microsecond=0))

    def with_value(self, value, provenance):
        return replace(self, value=float(value), provenance=Provenance(provenance))

    def to_dict(self):
        return {
            "sensor_id": self.sensor_id,
            "tick": self.tick,
            "wallclock": format_timestamp(self.wallclock),
            "value": self.value,
            "unit": self.unit,
            "provenance": self.provenance.value,
        }

    @classmethod
    def from_dict(cls, data):
        """
        Build a Measurement from an untrusted JSON payload.

        Raises:
            ValidationError: On any missing, malformed or non-finite field
        """
        if not isinstance(data, dict):
            raise ValidationError("measurement payload must be a JSON object")
        provenance = optional_text(data, "provenance", maxlen=32, default=Provenance.SENSED.value)
        try:
            provenance = Provenance(provenance)
        except ValueError:
            allowed = ", ".join(p.value for p in Provenance)
            raise ValidationError(f"'provenance' must be one of {allowed}") from None
        return cls(
            sensor_id=require_identifier(data, "sensor_id"),
            tick=to_int(data.get("tick"), "tick", minimum=0),
            wallclock=parse_timestamp(data.get("wallclock")),
            value=to_float(data.get("value"), "value"),
            unit=optional_text(data, "unit", maxlen=16, default="degC"),
            provenance=provenance,
        )


@dataclass(frozen=True)
class StoredMeasurement:
    """A measurement together with the storage sequence number it was assigned."""

    seq: int
    measurement: Measurement

    def to_dict(self):
        record = {"seq": self.seq}
        record.update(self.measurement.to_dict())
        return record

    @classmethod
    def from_dict(cls, data):
        return cls(int(data["seq"]), Measurement.from_dict(data))
