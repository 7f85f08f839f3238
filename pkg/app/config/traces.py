"""
Trace and Fixture CSV Loading

Reads measurement traces (``timestamp,value``) and weather fixtures
(``timestamp,temperature``, one file per location) with pandas. Every row
is checked; a file with bad rows is rejected with the row numbers of all of
them, counting the header as row 1.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from app.errors import NotFoundError, SignalRangeError, TraceFormatError, ValidationError
from app.helpers.validation import IDENTIFIER_RE, epoch_seconds, from_epoch, parse_timestamp

logger = logging.getLogger(__name__)


def clean_value(v):
    """Normalise a raw CSV cell; blank and NA markers become None."""
    if pd.isna(v):
        return None
    if isinstance(v, str):
        s = v.strip()
        if s == "" or s.lower() in ("nan", "n/a", "none", "null"):
            return None
        return s
    return v


@dataclass(frozen=True)
class TimedValues:
    """
    Strictly time-ordered samples.

    Attributes:
        times (np.ndarray): Epoch seconds, int64, strictly increasing
        values (np.ndarray): Finite floats, one per time
    """

    times: np.ndarray
    values: np.ndarray
    source: str = ""

    def __len__(self):
        return len(self.times)

    @property
    def start(self):
        return int(self.times[0])

    @property
    def end(self):
        return int(self.times[-1])

    def value_at_or_before(self, epoch):
        """The latest sample at or before ``epoch``."""
        idx = int(np.searchsorted(self.times, epoch, side="right")) - 1
        if idx < 0 or epoch > self.end:
            raise SignalRangeError(
                f"{self.source or 'trace'}: time {from_epoch(epoch).isoformat()} outside "
                f"[{from_epoch(self.start).isoformat()}, {from_epoch(self.end).isoformat()}]"
            )
        return float(self.values[idx])

    def window(self, start, end):
        """Samples with start <= time < end."""
        lo = int(np.searchsorted(self.times, start, side="left"))
        hi = int(np.searchsorted(self.times, end, side="left"))
        return self.times[lo:hi], self.values[lo:hi]


def load_timed_csv(path, value_column="value", time_column="timestamp"):
    """
    Load a two-column time series CSV.

    Args:
        path (str | Path): CSV file with a header row
        value_column (str): Column holding the readings
        time_column (str): Column holding ISO-8601 timestamps

    Returns:
        TimedValues

    Raises:
        TraceFormatError: Listing every malformed or out-of-order row
        ValidationError: If the file is missing, empty or lacks a column
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"trace file not found: {path}")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise ValidationError(f"{path}: file is empty") from None
    df.columns = [c.strip() for c in df.columns]
    missing = [c for c in (time_column, value_column) if c not in df.columns]
    if missing:
        raise ValidationError(f"{path}: missing columns {missing}; found {list(df.columns)}")
    if df.empty:
        raise ValidationError(f"{path}: no data rows")

    times, values, bad_rows = [], [], []
    previous = None
    for row_number, (raw_time, raw_value) in enumerate(zip(df[time_column], df[value_column]), start=2):
        stamp, value = clean_value(raw_time), clean_value(raw_value)
        try:
            epoch = epoch_seconds(parse_timestamp(stamp, time_column))
            reading = float(value)
        except (ValidationError, TypeError, ValueError):
            bad_rows.append(row_number)
            continue
        if not np.isfinite(reading) or (previous is not None and epoch <= previous):
            bad_rows.append(row_number)
            continue
        previous = epoch
        times.append(epoch)
        values.append(reading)
    if bad_rows:
        raise TraceFormatError(path, bad_rows)
    logger.debug(f"loaded {len(times)} rows from {path}")
    return TimedValues(np.asarray(times, dtype=np.int64), np.asarray(values, dtype=float), str(path))


def load_trace(path, column="value"):
    return load_timed_csv(path, value_column=column)


def load_weather_fixtures(directory):
    """
    Load every ``<location_id>.csv`` in a directory.

    Returns:
        dict: location_id -> TimedValues of temperatures
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise NotFoundError(f"weather fixture directory not found: {directory}")
    fixtures = {}
    for path in sorted(directory.glob("*.csv")):
        if not IDENTIFIER_RE.match(path.stem):
            logger.warning(f"skipping fixture with unusable location name: {path.name}")
            continue
        fixtures[path.stem] = load_timed_csv(path, value_column="temperature")
    logger.info(f"loaded weather fixtures for {len(fixtures)} locations from {directory}")
    return fixtures


def write_timed_csv(path, times, values, value_column="value"):
    """Write epoch times and values in the format ``load_timed_csv`` reads."""
    frame = pd.DataFrame(
        {
            "timestamp": [from_epoch(t).strftime("%Y-%m-%dT%H:%M:%SZ") for t in times],
            value_column: [repr(float(v)) for v in values],
        }
    )
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
