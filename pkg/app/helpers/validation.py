"""
Input Sanitization and Payload Parsing Helpers

Every string that arrives over HTTP goes through ``clean_text`` (bleach
strips markup, length is capped) before it is used as an identifier or
stored. Numeric and timestamp helpers raise ValidationError instead of
returning None, so a malformed payload always ends in a 400 response.

Requires:
- bleach library for HTML sanitization
"""

import math
import re
from datetime import datetime, timezone

import bleach

from app.errors import ValidationError

IDENTIFIER_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]{0,63}$")


# ============================================================================
# TEXT
# ============================================================================

def clean_text(s, maxlen=256):
    """
    Sanitize and validate user input text.

    Performs multiple sanitization steps:
    1. Converts input to string and strips whitespace
    2. Removes HTML/script tags using bleach library (XSS prevention)
    3. Enforces maximum length limit

    Args:
        s (str): Input string to sanitize
        maxlen (int): Maximum allowed string length (default: 256)

    Returns:
        str: Sanitized string, or None if input is None

    Example:
        >>> clean_text("<b>node-1</b>", maxlen=50)
        'node-1'
    """
    if s is None:
        return None
    t = bleach.clean(str(s).strip(), tags=[], strip=True)
    if maxlen:
        t = t[:maxlen]
    return t


def require_identifier(data, key):
    """
    Read a required identifier (sensor, gateway, listener or location id).

    Identifiers are 1-64 characters of letters, digits, dot, dash and
    underscore; they double as file names in the measurement store.
    """
    raw = data.get(key) if isinstance(data, dict) else None
    value = clean_text(raw, maxlen=64)
    if not value or not IDENTIFIER_RE.match(value):
        raise ValidationError(f"'{key}' must be an identifier of letters, digits, '.', '-' or '_'")
    return value


def optional_text(data, key, maxlen=256, default=None):
    value = clean_text(data.get(key), maxlen=maxlen)
    return value if value else default


# ============================================================================
# NUMBERS
# ============================================================================

def to_int(value, name, minimum=None):
    """Strict integer conversion; booleans and fractional floats are rejected."""
    if isinstance(value, bool) or value is None:
        raise ValidationError(f"'{name}' must be an integer")
    try:
        if isinstance(value, float):
            if not value.is_integer():
                raise ValueError
            result = int(value)
        else:
            result = int(str(value).strip())
    except (TypeError, ValueError):
        raise ValidationError(f"'{name}' must be an integer") from None
    if minimum is not None and result < minimum:
        raise ValidationError(f"'{name}' must be >= {minimum}")
    return result


def to_float(value, name, positive=False):
    """Strict finite float conversion."""
    if isinstance(value, bool) or value is None:
        raise ValidationError(f"'{name}' must be a number")
    try:
        result = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"'{name}' must be a number") from None
    if not math.isfinite(result):
        raise ValidationError(f"'{name}' must be finite")
    if positive and result <= 0:
        raise ValidationError(f"'{name}' must be positive")
    return result


# ============================================================================
# TIMESTAMPS
# ============================================================================

def parse_timestamp(value, name="wallclock"):
    """
    Parse an ISO-8601 timestamp into an aware UTC datetime.

    Naive timestamps are taken as UTC. A trailing ``Z`` is accepted.
    """
    if isinstance(value, datetime):
        parsed = value
    else:
        text = clean_text(value, maxlen=64)
        if not text:
            raise ValidationError(f"'{name}' must be an ISO-8601 timestamp")
        if text.endswith("Z"):
            text = text[:-1] + "+00:00"
        try:
            parsed = datetime.fromisoformat(text)
        except ValueError:
            raise ValidationError(f"'{name}' must be an ISO-8601 timestamp") from None
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed.astimezone(timezone.utc)


def format_timestamp(moment):
    """Render an aware datetime as ISO-8601 UTC with a ``Z`` suffix, second resolution."""
    return moment.astimezone(timezone.utc).replace(microsecond=0).isoformat().replace("+00:00", "Z")


def epoch_seconds(moment):
    return int(moment.timestamp())


def from_epoch(seconds):
    return datetime.fromtimestamp(int(seconds), tz=timezone.utc)
