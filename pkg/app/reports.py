"""
Report Bundles

A run leaves a directory of per-tick CSV logs and a JSON summary. Every
number in ``summary.json`` can be recomputed from the CSV logs alone;
``verify_bundle`` does exactly that and is what ``cli report`` runs.

Simulation bundle::

    transmissions.csv   one row per sampling instant (node view)
    reconstruction.csv  what the dashboard stored, per sensor and tick
    intervals.csv       sampling interval in force, one row per change
    commands.csv        every command delivered to a node
    summary.json        SimReport plus rule and storage statistics
    runtime.json        wallclock runtime and audit listener counts

Replay bundle::

    transmissions.csv   one row per trace tick (node and sink in lockstep)
    summary.json        suppression ratio, max reconstruction error, refreshes

Only ``runtime.json`` depends on the machine; the rest is byte-identical
across runs of the same scenario and seed.

Requires:
- pandas for CSV reading and writing
"""

import json
import logging
from collections import Counter
from pathlib import Path

import pandas as pd

from app.analytics.dps import DpsConfig
from app.errors import ReportMismatchError, ValidationError
from app.sim.energy import EnergyModel
from app.sim.simulator import summarize_counts, wallclock_of

logger = logging.getLogger(__name__)

SUMMARY = "summary.json"
RUNTIME = "runtime.json"
TRANSMISSIONS = "transmissions.csv"
RECONSTRUCTION = "reconstruction.csv"
INTERVALS = "intervals.csv"
COMMANDS = "commands.csv"

TRANSMISSION_COLUMNS = [
    "time",
    "wallclock",
    "sensor_id",
    "dps_tick",
    "phase",
    "value",
    "transmitted",
    "forecast",
    "reconstructed",
    "abs_error",
    "interval_seconds",
    "battery_joules",
]
RECONSTRUCTION_COLUMNS = ["sensor_id", "tick", "wallclock", "value", "provenance"]
INTERVAL_COLUMNS = ["time", "sensor_id", "interval_seconds"]
COMMAND_COLUMNS = [
    "time",
    "sensor_id",
    "command_id",
    "origin",
    "set_interval_seconds",
    "threshold_epsilon",
    "substitute_source",
    "model_order",
    "received",
    "applied",
    "detail",
]
REPLAY_COLUMNS = [
    "tick",
    "timestamp",
    "phase",
    "value",
    "transmitted",
    "forecast",
    "reconstructed",
    "abs_error",
    "model_refresh",
]


# ============================================================================
# CSV HELPERS
# ============================================================================

def _cell(v):
    """Exact text for one CSV cell: repr for floats, 1/0 for booleans, blank for None."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path, columns, rows):
    frame = pd.DataFrame([[_cell(v) for v in row] for row in rows], columns=columns, dtype=str)
    frame.to_csv(path, index=False)


def _read_csv(path):
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"report log missing: {path}")
    return pd.read_csv(path, float_precision="round_trip")


def _write_json(path, data):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")


def load_summary(output_dir):
    path = Path(output_dir) / SUMMARY
    if not path.exists():
        raise ValidationError(f"no {SUMMARY} in {output_dir}")
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


# ============================================================================
# SIMULATION BUNDLE
# ============================================================================

def _simulation_statistics(intervals, commands, reconstruction, sensor_ids):
    """Rule and storage statistics shared by writing and recomputation."""
    seen = {s: sorted({int(v) for v in intervals.get(s, [])}) for s in sensor_ids}
    return {
        "intervals_seen": seen,
        "interval_changes": {s: max(0, len(intervals.get(s, [])) - 1) for s in sensor_ids},
        "commands": {
            "delivered": len(commands),
            "applied": sum(1 for c in commands if c["applied"]),
            "by_origin": dict(sorted(Counter(c["origin"] for c in commands).items())),
        },
        "stored": {
            "total": len(reconstruction),
            "by_provenance": dict(sorted(Counter(reconstruction).items())),
        },
    }


def write_simulation_bundle(result, output_dir):
    """
    Write the per-tick logs and summary of a simulation run.

    Returns:
        dict: The summary as written
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    config = result.scenario

    _write_csv(
        output_dir / TRANSMISSIONS,
        TRANSMISSION_COLUMNS,
        (
            [
                r.time,
                wallclock_of(config, r.time),
                r.sensor_id,
                r.dps_tick,
                r.phase,
                r.value,
                r.transmitted,
                r.forecast,
                r.reconstructed,
                r.abs_error,
                r.interval_seconds,
                r.battery_joules,
            ]
            for r in result.samples
        ),
    )
    _write_csv(
        output_dir / RECONSTRUCTION,
        RECONSTRUCTION_COLUMNS,
        ([p[c] for c in RECONSTRUCTION_COLUMNS] for p in result.reconstruction),
    )
    _write_csv(
        output_dir / INTERVALS,
        INTERVAL_COLUMNS,
        ([c.time, c.sensor_id, c.interval_seconds] for c in result.intervals),
    )
    _write_csv(
        output_dir / COMMANDS,
        COMMAND_COLUMNS,
        ([getattr(c, name) for name in COMMAND_COLUMNS] for c in result.commands),
    )

    sensor_ids = [n.sensor_id for n in config.nodes]
    intervals = {}
    for change in result.intervals:
        intervals.setdefault(change.sensor_id, []).append(change.interval_seconds)
    summary = {
        "kind": "simulation",
        "scenario": config.describe(),
        "report": result.report.to_dict(),
        **_simulation_statistics(
            intervals,
            [{"applied": c.applied, "origin": c.origin} for c in result.commands],
            [p["provenance"] for p in result.reconstruction],
            sensor_ids,
        ),
    }
    _write_json(output_dir / SUMMARY, summary)
    _write_json(
        output_dir / RUNTIME,
        {"wallclock_runtime_seconds": result.report.wallclock_runtime_seconds, "audit": result.audit},
    )
    logger.info(f"report bundle written to {output_dir}")
    return summary


def _recompute_simulation(output_dir, summary):
    scenario = summary["scenario"]
    sensor_ids = list(scenario["nodes"])
    samples = _read_csv(output_dir / TRANSMISSIONS)
    commands = _read_csv(output_dir / COMMANDS)
    stored = _read_csv(output_dir / RECONSTRUCTION)
    intervals = _read_csv(output_dir / INTERVALS)

    energy = {s: EnergyModel.from_dict(scenario["nodes"][s]["energy"]) for s in sensor_ids}
    counts, tx, rx, errors, halted = {}, {}, {}, {}, {}
    for sensor_id in sensor_ids:
        rows = samples[samples["sensor_id"] == sensor_id]
        received = commands[commands["sensor_id"] == sensor_id]
        counts[sensor_id] = int(len(rows))
        tx[sensor_id] = int(rows["transmitted"].sum())
        rx[sensor_id] = int(received["received"].sum())
        errors[sensor_id] = float((rows["value"] - rows["reconstructed"]).abs().max()) if len(rows) else 0.0
        spent = energy[sensor_id].spent(counts[sensor_id], tx[sensor_id], rx[sensor_id])
        halted[sensor_id] = energy[sensor_id].battery_joules - spent <= 0.0
    report = summarize_counts(sensor_ids, energy, counts, tx, rx, errors, halted)

    by_sensor = {s: list(intervals[intervals["sensor_id"] == s]["interval_seconds"]) for s in sensor_ids}
    return {
        "kind": "simulation",
        "scenario": scenario,
        "report": report.to_dict(),
        **_simulation_statistics(
            by_sensor,
            [{"applied": bool(a), "origin": o} for a, o in zip(commands["applied"], commands["origin"])],
            list(stored["provenance"]),
            sensor_ids,
        ),
    }


# ============================================================================
# REPLAY BUNDLE
# ============================================================================

def _replay_statistics(phases, transmitted, errors, refreshes, epsilon):
    predicting = [t for p, t in zip(phases, transmitted) if p == "predicting"]
    suppressed = sum(1 for t in predicting if not t)
    max_error = max(errors, default=0.0)
    return {
        "ticks": len(phases),
        "transmissions": sum(1 for t in transmitted if t),
        "suppressions": sum(1 for t in transmitted if not t),
        "init_ticks": sum(1 for p in phases if p == "initializing"),
        "suppression_ratio": suppressed / len(predicting) if predicting else 0.0,
        "max_reconstruction_error": max_error,
        "error_bound_holds": max_error <= epsilon,
        "model_refreshes": refreshes,
    }


def write_replay_bundle(result, output_dir):
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    ticks = result.cosim.ticks
    _write_csv(
        output_dir / TRANSMISSIONS,
        REPLAY_COLUMNS,
        (
            [
                t.tick,
                int(result.trace.times[t.tick]),
                t.phase,
                t.measurement,
                t.transmitted,
                t.forecast,
                t.reconstructed,
                abs(t.measurement - t.reconstructed),
                t.model_refresh,
            ]
            for t in ticks
        ),
    )
    summary = {
        "kind": "replay",
        "trace": result.trace_path,
        "column": result.column,
        "dps": result.config.to_dict(),
        **_replay_statistics(
            [t.phase for t in ticks],
            [t.transmitted for t in ticks],
            [abs(t.measurement - t.reconstructed) for t in ticks],
            sum(1 for t in ticks if t.model_refresh),
            result.config.threshold_epsilon,
        ),
    }
    _write_json(output_dir / SUMMARY, summary)
    logger.info(f"replay bundle written to {output_dir}")
    return summary


def _recompute_replay(output_dir, summary):
    rows = _read_csv(output_dir / TRANSMISSIONS)
    epsilon = DpsConfig.from_dict(summary["dps"]).threshold_epsilon
    errors = [float(e) for e in (rows["value"] - rows["reconstructed"]).abs()]
    return {
        "kind": "replay",
        "trace": summary["trace"],
        "column": summary["column"],
        "dps": summary["dps"],
        **_replay_statistics(
            list(rows["phase"]),
            [bool(t) for t in rows["transmitted"]],
            errors,
            int(rows["model_refresh"].sum()),
            epsilon,
        ),
    }


# ============================================================================
# VERIFICATION
# ============================================================================

def recompute_summary(output_dir):
    """Rebuild ``summary.json`` from the bundle's CSV logs."""
    output_dir = Path(output_dir)
    summary = load_summary(output_dir)
    kind = summary.get("kind")
    if kind == "simulation":
        recomputed = _recompute_simulation(output_dir, summary)
    elif kind == "replay":
        recomputed = _recompute_replay(output_dir, summary)
    else:
        raise ValidationError(f"unknown report kind {kind!r}")
    # through JSON, so numbers compare exactly as they are stored
    return json.loads(json.dumps(recomputed))


def _differences(expected, actual, prefix=""):
    if isinstance(expected, dict) and isinstance(actual, dict):
        found = []
        for key in sorted(set(expected) | set(actual)):
            found.extend(_differences(expected.get(key), actual.get(key), f"{prefix}{key}."))
        return found
    return [] if expected == actual else [prefix.rstrip(".")]


def verify_bundle(output_dir):
    """
    Check every summary statistic against the logs.

    Returns:
        dict: The verified summary

    Raises:
        ReportMismatchError: Naming every statistic that does not match
    """
    summary = load_summary(output_dir)
    mismatches = _differences(summary, recompute_summary(output_dir))
    if mismatches:
        raise ReportMismatchError(mismatches)
    return summary
