"""
Command-Line Interface

    python run.py serve    [--config .env] [--host H] [--port P] [--weather-port P] [--data-dir D] [--fixtures D]
    python run.py simulate --scenario FILE [--seed N] [--output DIR] [--embedded | --dashboard URL]
    python run.py replay   --trace FILE [--config dps.yaml] [--epsilon E] [--column C] [--output DIR]
    python run.py report   --output DIR

Exit codes: 0 success, 2 validation, 3 transport, 4 fit, 5 protocol desync,
1 anything else.
"""

import argparse
import json
import logging
import signal
import sys
import threading
from dataclasses import dataclass
from pathlib import Path

import yaml
from dotenv import load_dotenv

from app import configure_logging, create_app, load_settings
from app.analytics.dps import DpsConfig, with_threshold
from app.config.scenario import load_scenario
from app.errors import ValidationError, WsnError
from app.helpers.serving import ServiceThread
from app.reports import verify_bundle, write_replay_bundle, write_simulation_bundle
from app.sim.replay import replay_trace
from app.sim.simulator import simulate
from app.weather.stub import create_weather_app

logger = logging.getLogger(__name__)


# ============================================================================
# SERVE
# ============================================================================

@dataclass
class Services:
    dashboard: ServiceThread
    weather: ServiceThread | None
    app: object

    def stop(self):
        self.dashboard.stop()
        self.app.extensions["dashboard"].close()
        if self.weather is not None:
            self.weather.stop()


def start_services(settings):
    """
    Start the stub weather service (when its fixtures exist) and the dashboard.

    Raises:
        StartupError: A port is already taken
    """
    weather = None
    fixtures = Path(settings["WEATHER_FIXTURES"])
    if fixtures.is_dir():
        weather = ServiceThread(
            create_weather_app(fixtures_dir=fixtures), settings["WEATHER_HOST"], settings["WEATHER_PORT"], "weather"
        ).start_serving()
        settings = {**settings, "WEATHER_URL": weather.url}
    else:
        logger.warning(f"no weather fixtures at {fixtures}; stub weather service not started")
    app = create_app(settings)
    try:
        dashboard = ServiceThread(app, settings["DASHBOARD_HOST"], settings["DASHBOARD_PORT"], "dashboard")
    except WsnError:
        app.extensions["dashboard"].close()
        if weather is not None:
            weather.stop()
        raise
    return Services(dashboard.start_serving(), weather, app)


def serve_settings(args):
    if args.config:
        if not Path(args.config).exists():
            raise ValidationError(f"config file not found: {args.config}")
        # already-set environment variables win over the file
        load_dotenv(args.config, override=False)
    settings = load_settings()
    overrides = {
        "DASHBOARD_HOST": args.host,
        "DASHBOARD_PORT": args.port,
        "WEATHER_PORT": args.weather_port,
        "DATA_DIR": args.data_dir,
        "WEATHER_FIXTURES": args.fixtures,
    }
    settings.update({k: v for k, v in overrides.items() if v is not None})
    return settings


def run_serve(args, stop_event=None):
    services = start_services(serve_settings(args))
    stop_event = stop_event or threading.Event()
    if threading.current_thread() is threading.main_thread():
        for sig in (signal.SIGINT, signal.SIGTERM):
            signal.signal(sig, lambda *_: stop_event.set())
    weather = f", weather stub at {services.weather.url}" if services.weather else ""
    print(f"dashboard ready at {services.dashboard.url}{weather}", flush=True)
    try:
        stop_event.wait()
    finally:
        services.stop()
        logger.info("services stopped")
    return 0


# ============================================================================
# SIMULATE / REPLAY / REPORT
# ============================================================================

def run_simulate(args):
    config = load_scenario(args.scenario, seed=args.seed)
    if args.embedded:
        dashboard_url = None
    else:
        settings = load_settings()
        dashboard_url = args.dashboard or f"http://{settings['DASHBOARD_HOST']}:{settings['DASHBOARD_PORT']}"
    result = simulate(config, dashboard_url)
    output = Path(args.output or f"reports/{config.name}")
    summary = write_simulation_bundle(result, output)
    print(json.dumps(summary["report"], indent=2, sort_keys=True))
    return 0


def load_dps_config(path):
    if path is None:
        return DpsConfig()
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except OSError as exc:
        raise ValidationError(f"cannot read DPS config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ValidationError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: DPS config must be a mapping")
    return DpsConfig.from_dict(data.get("dps", data))


def run_replay(args):
    config = load_dps_config(args.config)
    if args.epsilon is not None:
        config = with_threshold(config, args.epsilon)
    result = replay_trace(args.trace, config, column=args.column)
    output = Path(args.output or f"reports/replay-{Path(args.trace).stem}")
    summary = write_replay_bundle(result, output)
    print(json.dumps({k: v for k, v in summary.items() if k != "dps"}, indent=2, sort_keys=True))
    return 0


def run_report(args):
    summary = verify_bundle(args.output)
    print(f"{args.output}: {summary['kind']} summary matches its logs")
    return 0


# ============================================================================
# ENTRY POINT
# ============================================================================

def build_parser():
    ap = argparse.ArgumentParser(prog="wsn-dashboard", description="Self-managed WSN analytics platform")
    ap.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR (default: $LOG_LEVEL or INFO)")
    sub = ap.add_subparsers(dest="cmd", required=True)

    serve = sub.add_parser("serve", help="run the dashboard and the stub weather service")
    serve.add_argument("--config", help=".env style file with service settings")
    serve.add_argument("--host")
    serve.add_argument("--port", type=int)
    serve.add_argument("--weather-port", type=int)
    serve.add_argument("--data-dir")
    serve.add_argument("--fixtures", help="weather fixture directory")
    serve.set_defaults(func=run_serve)

    sim = sub.add_parser("simulate", help="run a scenario and write a report bundle")
    sim.add_argument("--scenario", required=True)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--output")
    target = sim.add_mutually_exclusive_group()
    target.add_argument("--embedded", action="store_true", help="start the services in-process")
    target.add_argument("--dashboard", help="dashboard base URL (default from DASHBOARD_HOST/PORT)")
    sim.set_defaults(func=run_simulate)

    replay = sub.add_parser("replay", help="replay a trace through the DPS offline")
    replay.add_argument("--trace", required=True)
    replay.add_argument("--config", help="YAML file with DPS parameters")
    replay.add_argument("--epsilon", type=float)
    replay.add_argument("--column", default="value")
    replay.add_argument("--output")
    replay.set_defaults(func=run_replay)

    report = sub.add_parser("report", help="recompute a bundle's summary from its logs")
    report.add_argument("--output", required=True, help="bundle directory")
    report.set_defaults(func=run_report)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level, quiet_requests=True)
    try:
        return args.func(args)
    except WsnError as exc:
        logger.error(f"{exc.kind}: {exc}")
        print(f"error ({exc.kind}): {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        return 130
