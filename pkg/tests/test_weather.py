"""
Weather client and stub service.

 Group 1 - current readings and forecasts served from fixtures
 Group 2 - errors (unknown location, bad horizon, unreachable service)
 Group 3 - the weather rule when the service is down
"""

import socket
from datetime import timedelta

import pytest

from app.analytics.engine import SensorProfile
from app.analytics.relevance import RelevancePolicy, WeatherRule
from app.errors import NotFoundError, ValidationError, WeatherUnavailableError
from app.models.measurement import Measurement
from app.services.dashboard import Dashboard
from app.weather.client import WeatherClient
from app.weather.stub import create_weather_app

from tests.conftest import START


def dead_url():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    return f"http://127.0.0.1:{port}"


@pytest.fixture
def weather(weather_server):
    client = WeatherClient(weather_server.url)
    yield client
    client.close()


# ── Group 1: fixture data ────────────────────────────────────────────────────

class TestFixtureData:
    def test_current_reading_echoes_fixture(self, weather):
        reading = weather.fetch_current("lulea", at=START + timedelta(minutes=20))
        assert reading.temperature == 18.5
        assert reading.source == "stub"
        assert reading.wallclock == START

    def test_locations_are_independent(self, weather):
        assert weather.fetch_current("kiruna", at=START).temperature == 20.5

    def test_three_hour_forecast(self, weather):
        series = weather.fetch_forecast("lulea", 3, at=START)
        assert series.horizon_hours == 3
        assert [t for t, _ in series.values] == [START + timedelta(hours=h) for h in range(3)]
        assert [v for _, v in series.values] == [18.5, 18.5, 18.5]

    def test_forecast_as_series(self, weather):
        series = weather.fetch_forecast("kiruna", 2, at=START).to_series()
        assert series.tick_seconds == 3600
        assert series.values == (20.5, 20.5)

    def test_answers_are_deterministic(self, weather):
        at = START + timedelta(hours=5)
        assert weather.fetch_forecast("lulea", 4, at=at) == weather.fetch_forecast("lulea", 4, at=at)


# ── Group 2: errors ──────────────────────────────────────────────────────────

class TestErrors:
    def test_unknown_location(self, weather):
        with pytest.raises(NotFoundError):
            weather.fetch_current("atlantis", at=START)

    def test_instant_before_fixture(self, weather):
        with pytest.raises(NotFoundError):
            weather.fetch_current("lulea", at=START - timedelta(hours=1))

    def test_zero_horizon_rejected_by_client(self, weather):
        with pytest.raises(ValidationError):
            weather.fetch_forecast("lulea", 0, at=START)

    def test_zero_horizon_rejected_by_stub(self, weather_fixtures):
        client = create_weather_app(fixtures_dir=weather_fixtures).test_client()
        response = client.get("/forecast", query_string={"location": "lulea", "hours": 0})
        assert response.status_code == 400

    def test_unreachable_service(self):
        with pytest.raises(WeatherUnavailableError):
            WeatherClient(dead_url(), timeout=0.5).fetch_current("lulea", at=START)


# ── Group 3: rule behaviour on outage ────────────────────────────────────────

class TestOutage:
    def test_unreachable_service_forces_eager_interval(self, tmp_path):
        policy = RelevancePolicy(comparison_window_ticks=2, relaxed_interval_seconds=1800, eager_interval_seconds=60)
        dashboard = Dashboard(tmp_path, weather_client=WeatherClient(dead_url(), timeout=0.5))
        try:
            dashboard.register_gateway("gw-1", [SensorProfile("node-1", 300, weather=WeatherRule("lulea", policy))])
            for tick in (0, 300):
                dashboard.ingest(Measurement("node-1", tick, START + timedelta(seconds=tick), 18.5))
            commands = dashboard.collect_commands("gw-1")
            assert len(commands) == 1
            assert commands[0]["set_interval_seconds"] == 60
            assert commands[0]["substitute_source"] == "none"
            assert commands[0]["origin"] == "weather_rule"
        finally:
            dashboard.close()
