"""
Append-Only Measurement Store

Measurements live in one newline-delimited JSON file per sensor under
``<DATA_DIR>/measurements/``; reported failures in ``<DATA_DIR>/failures.ndjson``.
Records are only ever appended. An in-memory index (per-sensor sorted ticks
plus the records themselves) is rebuilt from the files on start-up, so a
restarted service answers queries exactly as before.

Sequence numbers are global across sensors and strictly increasing.
"""

import bisect
import json
import logging
import threading
from collections import Counter
from pathlib import Path

from app.errors import ConflictError
from app.models.measurement import StoredMeasurement
from app.models.subscription import Failure

logger = logging.getLogger(__name__)


class MeasurementStore:
    """
    Per-sensor append-only NDJSON logs with an in-memory index.

    Args:
        data_dir (str | Path): Directory holding the store; created if missing

    Example:
        >>> store = MeasurementStore("data")
        >>> stored = store.append(measurement)
        >>> store.query("node-1", 0, 3600)
    """

    def __init__(self, data_dir):
        self.root = Path(data_dir)
        self.measurement_dir = self.root / "measurements"
        self.failure_path = self.root / "failures.ndjson"
        self.measurement_dir.mkdir(parents=True, exist_ok=True)

        self._lock = threading.Lock()
        self._records = {}
        self._ticks = {}
        self._failures = []
        self._last_seq = 0
        self._load()

    # ------------------------------------------------------------------
    # recovery
    # ------------------------------------------------------------------

    def _load(self):
        for path in sorted(self.measurement_dir.glob("*.ndjson")):
            for record in _read_lines(path):
                stored = StoredMeasurement.from_dict(record)
                self._index(stored)
        for record in _read_lines(self.failure_path):
            failure = Failure.from_dict(record)
            self._failures.append(failure)
            self._last_seq = max(self._last_seq, failure.seq)
        if self._records or self._failures:
            logger.info(
                f"store recovered {self.count()} measurements for {len(self._records)} sensors "
                f"and {len(self._failures)} failures from {self.root}"
            )

    def _index(self, stored):
        m = stored.measurement
        self._records.setdefault(m.sensor_id, {})[m.tick] = stored
        bisect.insort(self._ticks.setdefault(m.sensor_id, []), m.tick)
        self._last_seq = max(self._last_seq, stored.seq)

    # ------------------------------------------------------------------
    # measurements
    # ------------------------------------------------------------------

    def contains(self, sensor_id, tick):
        with self._lock:
            return tick in self._records.get(sensor_id, {})

    def append(self, measurement):
        """
        Append one measurement and assign it the next sequence number.

        Raises:
            ConflictError: If (sensor_id, tick) is already stored
        """
        with self._lock:
            existing = self._records.get(measurement.sensor_id, {}).get(measurement.tick)
            if existing is not None:
                raise ConflictError(
                    f"measurement for sensor '{measurement.sensor_id}' at tick {measurement.tick} "
                    f"already stored with seq {existing.seq}"
                )
            stored = StoredMeasurement(self._last_seq + 1, measurement)
            _append_line(self.measurement_dir / f"{measurement.sensor_id}.ndjson", stored.to_dict())
            self._index(stored)
            return stored

    def query(self, sensor_id, from_tick, to_tick):
        """All stored measurements of a sensor with from_tick <= tick <= to_tick, in tick order."""
        with self._lock:
            ticks = self._ticks.get(sensor_id, [])
            records = self._records.get(sensor_id, {})
            lo = bisect.bisect_left(ticks, from_tick)
            hi = bisect.bisect_right(ticks, to_tick)
            return [records[t] for t in ticks[lo:hi]]

    def sensors(self):
        with self._lock:
            return sorted(self._records)

    def count(self):
        return sum(len(r) for r in self._records.values())

    def provenance_counts(self):
        with self._lock:
            counts = Counter(
                s.measurement.provenance.value for records in self._records.values() for s in records.values()
            )
        return dict(counts)

    @property
    def last_seq(self):
        return self._last_seq

    # ------------------------------------------------------------------
    # failures
    # ------------------------------------------------------------------

    def append_failure(self, failure):
        with self._lock:
            stored = Failure(failure.sensor_id, failure.description, failure.wallclock, self._last_seq + 1)
            _append_line(self.failure_path, stored.to_dict())
            self._failures.append(stored)
            self._last_seq = stored.seq
            return stored

    def failures(self, sensor_id=None):
        with self._lock:
            return [f for f in self._failures if sensor_id is None or f.sensor_id == sensor_id]


def _append_line(path, record):
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, separators=(",", ":")) + "\n")
        fh.flush()


def _read_lines(path):
    if not Path(path).exists():
        return
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError:
                # a torn final write from a crash
                logger.warning(f"{path}:{lineno}: skipping unreadable record")
