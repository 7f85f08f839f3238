"""
Report bundles, trace replay and the command line.

 Group 1 - simulation bundles (verification, tampering, determinism)
 Group 2 - offline trace replay
 Group 3 - CLI exit codes and service start-up
"""

import json
import socket
from pathlib import Path

import numpy as np
import pytest
import requests
import yaml

from app import load_settings
from app.analytics.dps import DpsConfig
from app.cli import main, start_services
from app.config.scenario import parse_scenario
from app.config.traces import write_timed_csv
from app.errors import ReportMismatchError, StartupError, ValidationError
from app.reports import load_summary, recompute_summary, verify_bundle, write_replay_bundle, write_simulation_bundle
from app.sim.replay import replay_trace
from app.sim.simulator import simulate

ROOT = Path(__file__).resolve().parent.parent
START_EPOCH = 1465257600

SCENARIO = {
    "name": "bundle",
    "seed": 3,
    "start": "2016-06-07T00:00:00Z",
    "duration_seconds": 7200,
    "defaults": {
        "interval_seconds": 60,
        "signal": {"kind": "synthetic", "base_level": 20.0, "daily_amplitude": 4.0, "noise_std": 0.2},
        "dps": {"threshold_epsilon": 0.5, "init_phase_ticks": 30, "refresh_interval_ticks": 40, "fit_window_ticks": 80,
                "forecast_order_grid": [[1, 0, 0], [0, 1, 1]]},
    },
    "nodes": [{"sensor_id": "node-1"}, {"sensor_id": "node-2", "dps": False}],
    "commands": [{"at_seconds": 1800, "target_sensor_id": "node-2", "set_interval_seconds": 120}],
}
FAST = {"init_phase_ticks": 30, "refresh_interval_ticks": 60, "fit_window_ticks": 120,
        "forecast_order_grid": [[1, 0, 0], [0, 1, 1]]}


def dead_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def write_trace(path, values):
    write_timed_csv(path, [START_EPOCH + 60 * i for i in range(len(values))], values)
    return path


@pytest.fixture(scope="module")
def bundle_result():
    return simulate(parse_scenario(SCENARIO))


@pytest.fixture
def bundle(tmp_path, bundle_result):
    write_simulation_bundle(bundle_result, tmp_path / "bundle")
    return tmp_path / "bundle"


# ── Group 1: simulation bundles ──────────────────────────────────────────────

class TestSimulationBundle:
    def test_summary_recomputes_from_logs(self, bundle):
        summary = verify_bundle(bundle)
        assert summary == recompute_summary(bundle)
        assert summary["kind"] == "simulation"
        assert summary["report"]["total_samples"] == 120 + 30 + 45

    def test_bundle_contents(self, bundle, bundle_result):
        for name in ("transmissions.csv", "reconstruction.csv", "intervals.csv", "commands.csv", "summary.json", "runtime.json"):
            assert (bundle / name).exists(), name
        summary = load_summary(bundle)
        assert summary["intervals_seen"] == {"node-1": [60], "node-2": [60, 120]}
        assert summary["interval_changes"]["node-2"] == 1
        assert summary["commands"]["by_origin"]["manual"] == 1
        assert summary["stored"]["total"] == bundle_result.report.total_samples
        assert summary["stored"]["by_provenance"]["sensed"] == bundle_result.report.total_tx

    def test_tampered_summary(self, bundle):
        summary = load_summary(bundle)
        summary["report"]["total_tx"] += 1
        (bundle / "summary.json").write_text(json.dumps(summary))
        with pytest.raises(ReportMismatchError) as info:
            verify_bundle(bundle)
        assert info.value.mismatches == ["report.total_tx"]

    def test_tampered_log(self, bundle):
        path = bundle / "transmissions.csv"
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(ReportMismatchError) as info:
            verify_bundle(bundle)
        assert "report.total_samples" in info.value.mismatches

    def test_missing_summary(self, tmp_path):
        with pytest.raises(ValidationError):
            verify_bundle(tmp_path)

    def test_reruns_are_byte_identical(self, tmp_path, bundle_result):
        write_simulation_bundle(bundle_result, tmp_path / "a")
        write_simulation_bundle(simulate(parse_scenario(SCENARIO)), tmp_path / "b")
        names = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
        for name in names:
            if name != "runtime.json":
                assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


# ── Group 2: replay ──────────────────────────────────────────────────────────

class TestReplay:
    def test_constant_trace_is_fully_suppressed_after_init(self, tmp_path):
        trace = write_trace(tmp_path / "flat.csv", [20.0] * 200)
        result = replay_trace(trace, DpsConfig(threshold_epsilon=0.1, **FAST))
        assert result.init_ticks == 30
        assert result.suppression_ratio == 1.0
        assert result.cosim.transmissions == 30
        assert result.max_reconstruction_error == 0.0

    def test_zero_threshold_never_suppresses_noise(self, tmp_path):
        values = 20.0 + np.random.default_rng(4).normal(0, 0.3, 200)
        result = replay_trace(write_trace(tmp_path / "noisy.csv", values), DpsConfig(threshold_epsilon=0.0, **FAST))
        assert result.suppression_ratio == 0.0
        assert result.cosim.transmissions == 200

    def test_reference_trace_stays_within_threshold(self, tmp_path):
        result = replay_trace(ROOT / "fixtures" / "traces" / "indoor_day.csv", DpsConfig(threshold_epsilon=0.5))
        assert result.max_reconstruction_error <= 0.5
        assert result.suppression_ratio > 0.0
        summary = write_replay_bundle(result, tmp_path / "replay")
        assert summary["error_bound_holds"]
        assert verify_bundle(tmp_path / "replay") == summary

    def test_malformed_trace_lists_every_bad_row(self, tmp_path):
        trace = tmp_path / "bad.csv"
        trace.write_text(
            "timestamp,value\n"
            "2016-06-07T00:00:00Z,20.0\n"
            "2016-06-07T00:01:00Z,warm\n"
            "2016-06-07T00:02:00Z,20.1\n"
            "2016-06-07T00:01:30Z,20.2\n"
        )
        with pytest.raises(ValidationError) as info:
            replay_trace(trace, DpsConfig())
        assert info.value.bad_rows == [3, 5]


# ── Group 3: command line ────────────────────────────────────────────────────

class TestCommandLine:
    def test_simulate_then_report(self, tmp_path, capsys):
        scenario = tmp_path / "small.scenario"
        scenario.write_text(yaml.safe_dump({**SCENARIO, "duration_seconds": 3600}))
        output = tmp_path / "out"
        assert main(["simulate", "--scenario", str(scenario), "--embedded", "--output", str(output)]) == 0
        assert json.loads(capsys.readouterr().out)["total_samples"] == 60 + 30 + 15
        assert main(["report", "--output", str(output)]) == 0
        assert "matches its logs" in capsys.readouterr().out

    def test_invalid_scenario_exits_2(self, tmp_path, capsys):
        scenario = tmp_path / "bad.scenario"
        scenario.write_text(yaml.safe_dump({"duration_seconds": -1, "nodes": []}))
        assert main(["simulate", "--scenario", str(scenario), "--embedded"]) == 2
        err = capsys.readouterr().err
        assert "duration_seconds" in err and "nodes" in err

    def test_unreachable_dashboard_exits_3(self, tmp_path):
        scenario = tmp_path / "small.scenario"
        scenario.write_text(yaml.safe_dump(SCENARIO))
        url = f"http://127.0.0.1:{dead_port()}"
        assert main(["simulate", "--scenario", str(scenario), "--dashboard", url, "--output", str(tmp_path / "o")]) == 3

    def test_replay_with_config_file(self, tmp_path, capsys):
        trace = write_trace(tmp_path / "flat.csv", [19.0] * 120)
        config = tmp_path / "dps.yaml"
        config.write_text(yaml.safe_dump({"dps": FAST}))
        output = tmp_path / "replay"
        code = main(["replay", "--trace", str(trace), "--config", str(config), "--epsilon", "0.1", "--output", str(output)])
        assert code == 0
        printed = json.loads(capsys.readouterr().out)
        assert printed["suppression_ratio"] == 1.0
        assert load_summary(output)["dps"]["threshold_epsilon"] == 0.1

    def test_malformed_trace_exits_2(self, tmp_path, capsys):
        trace = tmp_path / "bad.csv"
        trace.write_text("timestamp,value\n2016-06-07T00:00:00Z,oops\n")
        assert main(["replay", "--trace", str(trace), "--output", str(tmp_path / "r")]) == 2
        assert "trace_format" in capsys.readouterr().err

    def test_report_mismatch_exits_2(self, bundle, capsys):
        summary = load_summary(bundle)
        summary["report"]["baseline_tx"] = 0
        (bundle / "summary.json").write_text(json.dumps(summary))
        assert main(["report", "--output", str(bundle)]) == 2
        assert "report_mismatch" in capsys.readouterr().err

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit):
            main(["launch"])

    def test_port_in_use_exits_3(self, tmp_path):
        with socket.socket() as holder:
            holder.bind(("127.0.0.1", 0))
            holder.listen()
            port = holder.getsockname()[1]
            code = main(["serve", "--host", "127.0.0.1", "--port", str(port),
                         "--data-dir", str(tmp_path / "data"), "--fixtures", str(tmp_path / "none")])
        assert code == 3


class TestServices:
    def test_fresh_services_report_zero_metrics(self, tmp_path, weather_fixtures):
        settings = {**load_settings(), "DASHBOARD_HOST": "127.0.0.1", "DASHBOARD_PORT": 0, "WEATHER_HOST": "127.0.0.1",
                    "WEATHER_PORT": 0, "DATA_DIR": str(tmp_path / "data"), "WEATHER_FIXTURES": str(weather_fixtures)}
        services = start_services(settings)
        try:
            assert services.weather is not None
            metrics = requests.get(f"{services.dashboard.url}/metrics", timeout=5).json()
            assert metrics["stored_total"] == 0
            assert metrics["ingested"] == 0
            current = requests.get(f"{services.weather.url}/current", params={"location": "lulea", "at": "2016-06-07T00:00:00Z"}, timeout=5)
            assert current.status_code == 200
        finally:
            services.stop()

    def test_port_conflict(self, tmp_path):
        with socket.socket() as holder:
            holder.bind(("127.0.0.1", 0))
            holder.listen()
            settings = {**load_settings(), "DASHBOARD_HOST": "127.0.0.1", "DASHBOARD_PORT": holder.getsockname()[1],
                        "DATA_DIR": str(tmp_path / "data"), "WEATHER_FIXTURES": str(tmp_path / "none")}
            with pytest.raises(StartupError):
                start_services(settings)
