"""
Weather Service Client

A minimal interface to an external weather service: the current reading
and an hourly forecast for a location. Only the bundled stub implements it;
the client never fills gaps with made-up values, every failure is raised.

Both calls take the simulated instant ``at`` so that runs against the stub
are deterministic.
"""

import logging
import math
from dataclasses import dataclass
from datetime import datetime

import requests

from app.analytics.arima import Series
from app.errors import AlignmentError, ValidationError, WeatherUnavailableError
from app.helpers.client import call
from app.helpers.validation import epoch_seconds, format_timestamp, parse_timestamp

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WeatherReading:
    location_id: str
    wallclock: datetime
    temperature: float
    source: str = "stub"

    def __post_init__(self):
        if not math.isfinite(self.temperature):
            raise ValidationError("temperature must be finite")
        if self.source not in ("live", "stub"):
            raise ValidationError("source must be 'live' or 'stub'")

    def to_dict(self):
        return {
            "location_id": self.location_id,
            "wallclock": format_timestamp(self.wallclock),
            "temperature": self.temperature,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            location_id=data["location_id"],
            wallclock=parse_timestamp(data["wallclock"]),
            temperature=float(data["temperature"]),
            source=data.get("source", "stub"),
        )


@dataclass(frozen=True)
class WeatherForecastSeries:
    """
    Hourly forecast values.

    Attributes:
        location_id (str): Location the forecast is for
        horizon_hours (int): Requested horizon
        values (tuple): (datetime, temperature) pairs, strictly increasing in time
    """

    location_id: str
    horizon_hours: int
    values: tuple

    def __post_init__(self):
        stamps = [epoch_seconds(t) for t, _ in self.values]
        if any(b <= a for a, b in zip(stamps, stamps[1:])):
            raise ValidationError("forecast timestamps must be strictly increasing")

    def to_series(self):
        """The forecast as a Series on the epoch-seconds time base."""
        stamps = [epoch_seconds(t) for t, _ in self.values]
        if not stamps:
            raise AlignmentError("empty forecast")
        step = stamps[1] - stamps[0] if len(stamps) > 1 else 3600
        if any(b - a != step for a, b in zip(stamps, stamps[1:])):
            raise AlignmentError("forecast values are not evenly spaced")
        return Series(tuple(v for _, v in self.values), 0, step, stamps[0])

    def to_dict(self):
        return {
            "location_id": self.location_id,
            "horizon_hours": self.horizon_hours,
            "values": [{"wallclock": format_timestamp(t), "temperature": v} for t, v in self.values],
        }

    @classmethod
    def from_dict(cls, data):
        values = tuple((parse_timestamp(v["wallclock"]), float(v["temperature"])) for v in data["values"])
        return cls(data["location_id"], int(data["horizon_hours"]), values)


class WeatherClient:
    """
    HTTP client for the weather service.

    Args:
        base_url (str): Service root, e.g. ``http://127.0.0.1:5001``
        timeout (float): Seconds per request

    Raises (from every call):
        WeatherUnavailableError: Service unreachable or failing
        NotFoundError: Unknown location or no data at the requested time
    """

    def __init__(self, base_url, timeout=2.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.session = requests.Session()

    def _get(self, path, params):
        return call(
            self.session,
            "GET",
            f"{self.base_url}{path}",
            unreachable=WeatherUnavailableError,
            timeout=self.timeout,
            params=params,
        )

    def fetch_current(self, location_id, at=None):
        params = {"location": location_id}
        if at is not None:
            params["at"] = format_timestamp(at)
        return WeatherReading.from_dict(self._get("/current", params))

    def fetch_forecast(self, location_id, horizon_hours, at=None):
        if int(horizon_hours) < 1:
            raise ValidationError("forecast horizon must be at least one hour")
        params = {"location": location_id, "hours": int(horizon_hours)}
        if at is not None:
            params["at"] = format_timestamp(at)
        return WeatherForecastSeries.from_dict(self._get("/forecast", params))

    def close(self):
        self.session.close()
