"""
Stub Weather Service

A small Flask app that answers the weather client from fixture CSV files,
one ``<location_id>.csv`` (``timestamp,temperature``) per location. Answers
depend only on the location and the requested instant.
"""

import logging
from datetime import datetime, timezone

from flask import Blueprint, Flask, current_app, jsonify, request

from app.config.traces import load_weather_fixtures
from app.errors import NotFoundError, SignalRangeError
from app.helpers.validation import (
    clean_text,
    epoch_seconds,
    format_timestamp,
    from_epoch,
    parse_timestamp,
    to_int,
)

logger = logging.getLogger(__name__)

weather_bp = Blueprint("weather", __name__)


def _fixture(location_id):
    fixtures = current_app.config["WEATHER_FIXTURE_DATA"]
    if location_id not in fixtures:
        raise NotFoundError(f"unknown location '{location_id}'")
    return fixtures[location_id]


def _requested_instant():
    raw = request.args.get("at")
    if raw:
        return parse_timestamp(raw, "at")
    return datetime.now(timezone.utc)


@weather_bp.route("/current", methods=["GET"])
def current():
    location_id = clean_text(request.args.get("location", ""), maxlen=64)
    fixture = _fixture(location_id)
    at = epoch_seconds(_requested_instant())
    try:
        temperature = fixture.value_at_or_before(at)
    except SignalRangeError as exc:
        raise NotFoundError(f"no reading for '{location_id}' at {format_timestamp(from_epoch(at))}") from exc
    stamp = int(fixture.times[fixture.times <= at][-1])
    return jsonify(
        {
            "location_id": location_id,
            "wallclock": format_timestamp(from_epoch(stamp)),
            "temperature": temperature,
            "source": "stub",
        }
    )


@weather_bp.route("/forecast", methods=["GET"])
def forecast():
    location_id = clean_text(request.args.get("location", ""), maxlen=64)
    hours = to_int(request.args.get("hours"), "hours", minimum=1)
    fixture = _fixture(location_id)
    start = epoch_seconds(_requested_instant())
    times, values = fixture.window(start, start + hours * 3600)
    if len(times) == 0:
        raise NotFoundError(f"no forecast for '{location_id}' from {format_timestamp(from_epoch(start))}")
    return jsonify(
        {
            "location_id": location_id,
            "horizon_hours": hours,
            "values": [
                {"wallclock": format_timestamp(from_epoch(int(t))), "temperature": float(v)}
                for t, v in zip(times, values)
            ],
        }
    )


def create_weather_app(fixtures_dir=None, fixtures=None, config=None):
    """
    Build the stub weather service.

    Args:
        fixtures_dir (str | Path, optional): Directory of fixture CSVs
        fixtures (dict, optional): Preloaded location_id -> TimedValues, used instead of the directory
        config (dict, optional): Extra Flask config

    Returns:
        Flask: The stub application
    """
    from app import register_error_handlers

    app = Flask(__name__)
    if fixtures is None:
        fixtures = load_weather_fixtures(fixtures_dir)
    app.config["WEATHER_FIXTURE_DATA"] = fixtures
    if config:
        app.config.update(config)
    register_error_handlers(app)
    app.register_blueprint(weather_bp)
    logger.info(f"stub weather service ready with locations {sorted(fixtures)}")
    return app
