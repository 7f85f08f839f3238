"""
Shared pytest fixtures.

- ``dashboard``: a Dashboard service on a temporary store
- ``app`` / ``client``: the Flask app around it and its test client
- ``weather_fixtures``: a fixture directory with two locations
- ``weather_server``: the stub weather service on a free port
- ``live_server``: the dashboard on a free port, wired to ``weather_server``
"""

from datetime import datetime, timezone

import pytest

from app import create_app
from app.analytics.engine import SensorProfile
from app.helpers.serving import ServiceThread
from app.services.dashboard import Dashboard
from app.weather.client import WeatherClient
from app.weather.stub import create_weather_app

START = datetime(2016, 6, 7, tzinfo=timezone.utc)


def write_weather_csv(path, first_value, hours=48, step=0.0):
    lines = ["timestamp,temperature"]
    for h in range(hours):
        day, hour = divmod(h, 24)
        lines.append(f"2016-06-{7 + day:02d}T{hour:02d}:00:00Z,{first_value + step * h}")
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture
def weather_fixtures(tmp_path):
    directory = tmp_path / "weather"
    directory.mkdir()
    write_weather_csv(directory / "lulea.csv", 18.5)
    write_weather_csv(directory / "kiruna.csv", 20.5)
    return directory


@pytest.fixture
def weather_server(weather_fixtures):
    server = ServiceThread(create_weather_app(fixtures_dir=weather_fixtures), "127.0.0.1", 0, "weather")
    server.start_serving()
    yield server
    server.stop()


@pytest.fixture
def dashboard(tmp_path):
    service = Dashboard(tmp_path / "data", queue_size=64, connect_timeout=1.0)
    yield service
    service.close()


@pytest.fixture
def app(dashboard):
    return create_app({"DASHBOARD": dashboard, "TESTING": True})


@pytest.fixture
def client(app):
    return app.test_client()


@pytest.fixture
def live_server(tmp_path, weather_server):
    service = Dashboard(tmp_path / "live-data", weather_client=WeatherClient(weather_server.url))
    server = ServiceThread(create_app({"DASHBOARD": service}), "127.0.0.1", 0, "dashboard")
    server.start_serving()
    yield server
    server.stop()
    service.close()


@pytest.fixture
def plain_profile():
    return SensorProfile("node-1", 60)
