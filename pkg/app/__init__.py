import logging
import os

from dotenv import load_dotenv
from flask import Flask, jsonify
from werkzeug.exceptions import HTTPException

from app.errors import WsnError

load_dotenv()

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


def configure_logging(level=None, quiet_requests=False):
    """Set the process-wide log format and level; LOG_LEVEL from the environment by default."""
    level = (level or os.environ.get("LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(level=level, format=LOG_FORMAT)
    logging.getLogger().setLevel(level)
    if quiet_requests:
        logging.getLogger("werkzeug").setLevel(logging.WARNING)


def load_settings():
    """Service settings from the environment (after .env is loaded)."""
    dashboard_host = os.environ.get("DASHBOARD_HOST", "127.0.0.1")
    weather_host = os.environ.get("WEATHER_HOST", "127.0.0.1")
    weather_port = int(os.environ.get("WEATHER_PORT", "5001"))
    return {
        "DASHBOARD_HOST": dashboard_host,
        "DASHBOARD_PORT": int(os.environ.get("DASHBOARD_PORT", "5000")),
        "WEATHER_HOST": weather_host,
        "WEATHER_PORT": weather_port,
        "WEATHER_URL": os.environ.get("WEATHER_URL") or f"http://{weather_host}:{weather_port}",
        "WEATHER_FIXTURES": os.environ.get("WEATHER_FIXTURES", "fixtures/weather"),
        "DATA_DIR": os.environ.get("DATA_DIR", "data"),
        "EVENT_QUEUE_SIZE": int(os.environ.get("EVENT_QUEUE_SIZE", "1024")),
        "LISTENER_CONNECT_TIMEOUT": float(os.environ.get("LISTENER_CONNECT_TIMEOUT", "2.0")),
    }


def register_error_handlers(app):
    """Answer every platform error, and Flask's own aborts, with a JSON body."""

    @app.errorhandler(WsnError)
    def handle_wsn_error(exc):
        if exc.http_status >= 500:
            app.logger.error(f"{exc.kind}: {exc}")
        return jsonify(exc.to_dict()), exc.http_status

    @app.errorhandler(HTTPException)
    def handle_http_error(exc):
        kind = "validation" if exc.code == 400 else exc.name.lower().replace(" ", "_")
        return jsonify({"error": kind, "message": exc.description}), exc.code


def create_app(config=None):
    """
    Build the dashboard application.

    Args:
        config (dict, optional): Overrides for the environment settings; a
            ``DASHBOARD`` entry supplies a ready-made Dashboard instance

    Returns:
        Flask: The dashboard app with its service at ``app.extensions["dashboard"]``
    """
    from app.services.dashboard import Dashboard
    from app.weather.client import WeatherClient

    app = Flask(__name__)
    app.json.sort_keys = False
    app.config.update(load_settings())
    if config:
        app.config.update(config)

    dashboard = app.config.get("DASHBOARD")
    if dashboard is None:
        weather = WeatherClient(app.config["WEATHER_URL"]) if app.config.get("WEATHER_URL") else None
        dashboard = Dashboard(
            app.config["DATA_DIR"],
            queue_size=app.config["EVENT_QUEUE_SIZE"],
            connect_timeout=app.config["LISTENER_CONNECT_TIMEOUT"],
            weather_client=weather,
        )
    app.extensions["dashboard"] = dashboard

    register_error_handlers(app)

    # register blueprints (ingestion, query and control routes)
    from app.route import control_bp, ingest_bp, query_bp

    app.register_blueprint(ingest_bp)
    app.register_blueprint(query_bp)
    app.register_blueprint(control_bp)

    app.logger.info(f"dashboard store at {dashboard.store.root} ({dashboard.store.count()} measurements)")
    return app
