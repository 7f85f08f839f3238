"""
Subscription and Failure Model Module

Registered event listeners and reported node failures.
"""

from dataclasses import dataclass, field
from datetime import datetime

from app.errors import ValidationError
from app.helpers.validation import (
    clean_text,
    format_timestamp,
    optional_text,
    parse_timestamp,
    require_identifier,
    to_int,
)

TOPICS = frozenset({"measurement", "reconfiguration", "analysis", "failure"})


@dataclass(frozen=True)
class Subscription:
    """
    A listener that receives framed JSON events over a stream socket.

    Attributes:
        listener_id (str): Caller-chosen name of the listener
        host (str): Host of the listener's socket endpoint
        port (int): Port of the listener's socket endpoint
        topics (frozenset): Non-empty subset of TOPICS
    """

    listener_id: str
    host: str
    port: int
    topics: frozenset = field(default_factory=lambda: TOPICS)

    @property
    def endpoint(self):
        return f"{self.host}:{self.port}"

    def to_dict(self):
        return {"listener_id": self.listener_id, "endpoint": self.endpoint, "topics": sorted(self.topics)}

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ValidationError("subscription payload must be a JSON object")
        listener_id = require_identifier(data, "listener_id")
        host, port = parse_endpoint(data.get("endpoint"))
        raw_topics = data.get("topics")
        if not isinstance(raw_topics, list) or not raw_topics:
            raise ValidationError("'topics' must be a non-empty list")
        topics = frozenset(clean_text(t, maxlen=32) for t in raw_topics)
        unknown = sorted(topics - TOPICS)
        if unknown:
            raise ValidationError(f"unknown topics {unknown}; allowed: {sorted(TOPICS)}")
        return cls(listener_id, host, port, topics)


def parse_endpoint(value):
    """Split ``host:port`` into its parts."""
    text = clean_text(value, maxlen=255)
    if not text or ":" not in text:
        raise ValidationError("'endpoint' must look like host:port")
    host, _, port = text.rpartition(":")
    host = host.strip("[]")
    if not host:
        raise ValidationError("'endpoint' must look like host:port")
    return host, to_int(port, "endpoint port", minimum=1)


@dataclass(frozen=True)
class Failure:
    """A failure reported for a sensor, e.g. battery depletion."""

    sensor_id: str
    description: str
    wallclock: datetime
    seq: int = 0

    def to_dict(self):
        return {
            "seq": self.seq,
            "sensor_id": self.sensor_id,
            "description": self.description,
            "wallclock": format_timestamp(self.wallclock),
        }

    @classmethod
    def from_dict(cls, data, default_wallclock=None):
        if not isinstance(data, dict):
            raise ValidationError("failure payload must be a JSON object")
        wallclock = data.get("wallclock")
        return cls(
            sensor_id=require_identifier(data, "sensor_id"),
            description=optional_text(data, "description", maxlen=512, default=""),
            wallclock=parse_timestamp(wallclock) if wallclock else default_wallclock,
            seq=int(data.get("seq", 0)),
        )
