"""
End-to-end runs of the bundled scenarios against embedded services.

 Group 1 - reference DPS day (transmission reduction, error bound, bundle)
 Group 2 - time-of-day schedule
 Group 3 - weather relevance
 Group 4 - demo topology with an audit listener
"""

from collections import Counter
from pathlib import Path

import pytest

from app.config.scenario import load_scenario
from app.reports import verify_bundle, write_simulation_bundle
from app.sim.simulator import simulate

pytestmark = pytest.mark.slow

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def run(name):
    return simulate(load_scenario(SCENARIOS / f"{name}.scenario"))


def intervals_of(result, sensor_id):
    return [(c.time, c.interval_seconds) for c in result.intervals if c.sensor_id == sensor_id]


@pytest.fixture(scope="module")
def reference():
    return run("reference_dps")


@pytest.fixture(scope="module")
def schedule():
    return run("fig2_schedule")


@pytest.fixture(scope="module")
def weather():
    return run("weather_relevance")


@pytest.fixture(scope="module")
def demo():
    return run("demo_topology")


# ── Group 1: reference DPS ───────────────────────────────────────────────────

class TestReferenceDps:
    def test_at_least_half_the_transmissions_saved(self, reference):
        assert reference.report.total_samples == 4 * 1440
        assert reference.report.tx_reduction_ratio >= 0.5

    def test_reconstruction_error_within_threshold(self, reference):
        for node in reference.report.nodes:
            assert node.max_reconstruction_error <= 0.5
            assert not node.halted

    def test_dashboard_stored_every_instant(self, reference):
        stored = Counter(row["provenance"] for row in reference.reconstruction)
        assert sum(stored.values()) == reference.report.total_samples
        assert stored["sensed"] == reference.report.total_tx
        assert stored["dps_reconstructed"] == reference.report.total_samples - reference.report.total_tx

    def test_dashboard_matches_node_reconstruction(self, reference):
        node_view = {(r.sensor_id, r.time): r.reconstructed for r in reference.samples}
        dashboard_view = {(row["sensor_id"], row["tick"]): row["value"] for row in reference.reconstruction}
        assert node_view == dashboard_view

    def test_model_refreshes_reach_every_node(self, reference):
        refreshes = Counter(c.sensor_id for c in reference.commands if c.origin == "dps_refresh")
        assert set(refreshes) == {"node-1", "node-2", "node-3", "node-4"}
        assert all(c.applied for c in reference.commands)

    def test_bundle_verifies(self, reference, tmp_path):
        summary = write_simulation_bundle(reference, tmp_path / "reference")
        assert verify_bundle(tmp_path / "reference") == summary


# ── Group 2: schedule ────────────────────────────────────────────────────────

class TestSchedule:
    def test_only_scheduled_intervals_occur(self, schedule):
        assert {c.interval_seconds for c in schedule.intervals} <= {60, 120, 240}

    def test_changes_happen_on_evaluation_boundaries(self, schedule):
        assert all(c.time % 720 == 0 for c in schedule.intervals)

    def test_office_day(self, schedule):
        assert intervals_of(schedule, "office-1") == [(0, 240), (21600, 120), (32400, 60), (61200, 120), (75600, 240)]
        assert intervals_of(schedule, "office-2") == intervals_of(schedule, "office-1")

    def test_per_node_overrides(self, schedule):
        assert intervals_of(schedule, "lab-1") == [(0, 240), (28800, 60), (43200, 120), (57600, 240)]
        # a Tuesday, so the weekday segment applies
        assert intervals_of(schedule, "storage-1") == [(0, 240), (25200, 120), (68400, 240)]

    def test_node_sampling_follows_the_schedule(self, schedule):
        times = [r.time for r in schedule.samples if r.sensor_id == "office-1"]
        gaps = Counter(b - a for a, b in zip(times, times[1:]))
        assert set(gaps) == {60, 120, 240}
        assert all(c.origin == "schedule_rule" for c in schedule.commands)


# ── Group 3: weather relevance ───────────────────────────────────────────────

class TestWeatherRelevance:
    def test_agreeing_node_is_relaxed_and_substituted(self, weather):
        assert intervals_of(weather, "node-north") == [(0, 300), (6900, 1800)]
        (command,) = [c for c in weather.commands if c.sensor_id == "node-north"]
        assert command.origin == "weather_rule"
        assert command.substitute_source == "weather_forecast"
        stored = [row for row in weather.reconstruction if row["sensor_id"] == "node-north"]
        assert {row["provenance"] for row in stored if row["tick"] <= 6900} == {"sensed"}
        sensed = [row["tick"] for row in stored if row["tick"] > 6900 and row["provenance"] == "sensed"]
        forecast = [row["tick"] for row in stored if row["provenance"] == "weather_forecast"]
        assert sensed == list(range(8700, 28800, 1800))
        # the 300 s instants between relaxed samples are filled from the forecast
        assert forecast == [t for t in range(7200, 28500, 300) if t not in sensed]
        assert len(forecast) == 12 * 5

    def test_disagreeing_node_is_kept_eager(self, weather):
        assert intervals_of(weather, "node-south") == [(0, 300), (6900, 60)]
        (command,) = [c for c in weather.commands if c.sensor_id == "node-south"]
        assert command.set_interval_seconds == 60
        assert command.substitute_source == "none"
        stored = [row for row in weather.reconstruction if row["sensor_id"] == "node-south"]
        assert {row["provenance"] for row in stored} == {"sensed"}

    def test_relaxed_node_samples_less(self, weather):
        north = weather.report.node("node-north")
        south = weather.report.node("node-south")
        assert north.samples_taken == 24 + 12
        assert north.energy_spent_joules < south.energy_spent_joules


# ── Group 4: demo topology ───────────────────────────────────────────────────

class TestDemoTopology:
    def test_audit_listener_saw_every_measurement_once(self, demo):
        audit = demo.audit
        assert audit["expected_events"] == 240
        assert audit["received_events"] == audit["expected_events"]
        assert audit["distinct_events"] == audit["expected_events"]
        assert audit["events_dropped"] == 0

    def test_store_holds_every_transmission_exactly_once(self, demo):
        keys = [(row["sensor_id"], row["tick"]) for row in demo.reconstruction]
        assert len(keys) == len(set(keys)) == demo.report.total_tx == 240

    def test_rerun_is_identical(self, demo):
        again = run("demo_topology")
        assert again.report == demo.report
        assert again.samples == demo.samples
        assert again.reconstruction == demo.reconstruction
