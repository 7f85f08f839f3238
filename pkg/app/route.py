from flask import Blueprint, abort, current_app, jsonify, request

from app.analytics.engine import SensorProfile
from app.errors import ValidationError
from app.helpers.validation import (
    IDENTIFIER_RE,
    clean_text,
    optional_text,
    parse_timestamp,
    require_identifier,
    to_int,
)
from app.models.command import ReconfigCommand, parse_delivery_outcome
from app.models.measurement import Measurement
from app.models.subscription import Subscription

# Blueprint definitions for the dashboard HTTP API
ingest_bp = Blueprint("ingest", __name__)
query_bp = Blueprint("query", __name__)
control_bp = Blueprint("control", __name__)

MAX_TICK = 2**63 - 1


def _dashboard():
    return current_app.extensions["dashboard"]


def _json_body():
    """The request's JSON object, or a 400 for anything else."""
    data = request.get_json(silent=True)
    if not isinstance(data, dict):
        abort(400, description="request body must be a JSON object")
    return data


def _gateway_id(data):
    # optional; present when a gateway forwards on behalf of its nodes
    gateway_id = optional_text(data, "gateway_id", maxlen=64)
    if gateway_id is not None and not IDENTIFIER_RE.match(gateway_id):
        raise ValidationError("'gateway_id' must be an identifier")
    return gateway_id


def _path_id(value, name):
    value = clean_text(value, maxlen=64)
    if not value or not IDENTIFIER_RE.match(value):
        raise ValidationError(f"'{name}' must be an identifier")
    return value


# ============================================================================
# INGESTION ROUTES - measurements, suppressed slots, failures
# ============================================================================

@ingest_bp.route("/measurements", methods=["POST"])
def ingest():
    """
    Store one measurement and publish it to subscribed listeners.
    Answers 201 with the storage sequence number, 409 for a duplicate tick.
    """
    data = _json_body()
    measurement = Measurement.from_dict(data)
    ack = _dashboard().ingest(measurement, gateway_id=_gateway_id(data))
    return jsonify(ack), 201


@ingest_bp.route("/slots", methods=["POST"])
def report_slot():
    """Record a sampling instant whose value the node suppressed (DPS)."""
    data = _json_body()
    ack = _dashboard().report_slot(
        require_identifier(data, "sensor_id"),
        to_int(data.get("tick"), "tick", minimum=0),
        parse_timestamp(data.get("wallclock")),
        gateway_id=_gateway_id(data),
    )
    return jsonify(ack), 201


@ingest_bp.route("/failures", methods=["POST"])
def report_failure():
    data = _json_body()
    wallclock = data.get("wallclock")
    failure = _dashboard().report_failure(
        require_identifier(data, "sensor_id"),
        optional_text(data, "description", maxlen=512, default=""),
        parse_timestamp(wallclock) if wallclock else None,
    )
    return jsonify(failure.to_dict()), 201


# ============================================================================
# QUERY ROUTES - series, failures, metrics, debug state
# ============================================================================

@query_bp.route("/series", methods=["GET"])
def query_series():
    """Stored measurements of one sensor in the inclusive tick range [from, to]."""
    sensor_id = _path_id(request.args.get("sensor"), "sensor")
    from_tick = to_int(request.args.get("from", 0), "from", minimum=0)
    to_tick = to_int(request.args.get("to", MAX_TICK), "to", minimum=0)
    points = _dashboard().query_series(sensor_id, from_tick, to_tick)
    return jsonify(
        {
            "sensor_id": sensor_id,
            "from": from_tick,
            "to": to_tick,
            "points": [p.to_dict() for p in points],
        }
    )


@query_bp.route("/failures", methods=["GET"])
def list_failures():
    sensor = request.args.get("sensor")
    sensor_id = _path_id(sensor, "sensor") if sensor else None
    return jsonify({"failures": [f.to_dict() for f in _dashboard().failures(sensor_id)]})


@query_bp.route("/metrics", methods=["GET"])
def metrics():
    return jsonify(_dashboard().metrics())


@query_bp.route("/sensors/<sensor_id>/state", methods=["GET"])
def sensor_state(sensor_id):
    """Debug view of the sensor's analytics actor (DPS sink, interval, substitution)."""
    return jsonify(_dashboard().sensor_state(_path_id(sensor_id, "sensor_id")))


@query_bp.route("/reconfig/<command_id>", methods=["GET"])
def delivery_report(command_id):
    return jsonify(_dashboard().delivery_report(_path_id(command_id, "command_id")).to_dict())


# ============================================================================
# CONTROL ROUTES - listeners, reconfiguration, gateways
# ============================================================================

@control_bp.route("/listeners", methods=["POST"])
def register_listener():
    """
    Register a socket listener. The dashboard connects to its endpoint
    immediately; an unreachable endpoint is rejected with 422.
    """
    subscription = Subscription.from_dict(_json_body())
    subscription_id = _dashboard().register_listener(subscription)
    return jsonify({"subscription_id": subscription_id, **subscription.to_dict()}), 201


@control_bp.route("/listeners/<listener_id>", methods=["DELETE"])
def deregister_listener(listener_id):
    _dashboard().deregister_listener(_path_id(listener_id, "listener_id"))
    return jsonify({"deregistered": listener_id})


@control_bp.route("/reconfig", methods=["POST"])
def dispatch_reconfig():
    """Inject a manual reconfiguration command; answers 202 with its delivery report."""
    command = ReconfigCommand.from_dict(_json_body())
    report = _dashboard().dispatch_reconfig(command)
    return jsonify(report.to_dict()), 202


@control_bp.route("/gateways", methods=["POST"])
def register_gateway():
    data = _json_body()
    gateway_id = require_identifier(data, "gateway_id")
    sensors = data.get("sensors")
    if not isinstance(sensors, list) or not sensors:
        raise ValidationError("'sensors' must be a non-empty list")
    profiles = [SensorProfile.from_dict(s) for s in sensors]
    ids = [p.sensor_id for p in profiles]
    if len(set(ids)) != len(ids):
        raise ValidationError("sensor ids must be unique")
    return jsonify(_dashboard().register_gateway(gateway_id, profiles)), 201


@control_bp.route("/gateways/<gateway_id>/commands", methods=["GET"])
def collect_commands(gateway_id):
    commands = _dashboard().collect_commands(_path_id(gateway_id, "gateway_id"))
    return jsonify({"commands": commands})


@control_bp.route("/gateways/<gateway_id>/deliveries", methods=["POST"])
def record_delivery(gateway_id):
    command_id, applied, detail = parse_delivery_outcome(_json_body())
    report = _dashboard().record_delivery(_path_id(gateway_id, "gateway_id"), command_id, applied, detail)
    return jsonify(report.to_dict())
