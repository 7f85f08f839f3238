"""
Offline Trace Replay

Runs both halves of the dual prediction scheme over a recorded trace,
without the dashboard, to see how a DPS configuration would have behaved.
"""

import logging
from dataclasses import dataclass

from app.analytics.dps import co_simulate
from app.config.traces import load_trace

logger = logging.getLogger(__name__)


@dataclass
class ReplayResult:
    trace_path: str
    column: str
    trace: object
    config: object
    cosim: object

    @property
    def init_ticks(self):
        return sum(1 for t in self.cosim.ticks if t.phase == "initializing")

    @property
    def suppression_ratio(self):
        """Suppressed share of the ticks after initialization."""
        predicting = [t for t in self.cosim.ticks if t.phase == "predicting"]
        if not predicting:
            return 0.0
        return sum(1 for t in predicting if not t.transmitted) / len(predicting)

    @property
    def max_reconstruction_error(self):
        return max((abs(t.measurement - t.reconstructed) for t in self.cosim.ticks), default=0.0)


def replay_trace(trace_path, config, column="value"):
    """
    Replay a ``timestamp,value`` CSV trace through the DPS.

    Raises:
        TraceFormatError: Malformed rows, listed by row number
    """
    trace = load_trace(trace_path, column)
    cosim = co_simulate(trace.values, config)
    result = ReplayResult(str(trace_path), column, trace, config, cosim)
    logger.info(
        f"replayed {len(trace)} ticks of {trace_path}: {cosim.transmissions} transmitted, "
        f"suppression ratio {result.suppression_ratio:.3f}, max error {result.max_reconstruction_error:.4g}"
    )
    return result
