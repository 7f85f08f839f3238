"""
Signal Sources

What a simulated node measures: a synthetic daily sinusoid with seeded
Gaussian noise, or a recorded trace replayed on the scenario clock.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from app.config.traces import load_trace
from app.errors import ValidationError, WsnError

SECONDS_PER_DAY = 86400


@dataclass(frozen=True)
class SignalSource:
    """
    Attributes:
        kind (str): "synthetic" or "trace"
        base_level (float): Synthetic mean level
        daily_amplitude (float): Synthetic sinusoid amplitude, period one day
        noise_std (float): Synthetic Gaussian noise standard deviation, >= 0
        seed (tuple): Integers seeding the noise; with the sample time they
            fully determine the noise value
        path (str): Trace CSV path (``timestamp,value``)
        column (str): Trace value column
        trace (TimedValues): Loaded trace data
    """

    kind: str = "synthetic"
    base_level: float = 20.0
    daily_amplitude: float = 0.0
    noise_std: float = 0.0
    seed: tuple = (0,)
    path: str | None = None
    column: str = "value"
    trace: object = field(default=None, compare=False, repr=False)

    def violations(self):
        problems = []
        if self.kind not in ("synthetic", "trace"):
            problems.append(f"signal kind must be 'synthetic' or 'trace', got {self.kind!r}")
        if self.kind == "synthetic":
            numbers = (self.base_level, self.daily_amplitude, self.noise_std)
            if not all(math.isfinite(v) for v in numbers):
                problems.append("signal parameters must be finite")
            elif self.noise_std < 0:
                problems.append("noise_std must be >= 0")
        if self.kind == "trace" and self.trace is None:
            problems.append("trace signal has no loaded trace")
        return problems

    def to_dict(self):
        if self.kind == "trace":
            return {"kind": "trace", "path": self.path, "column": self.column}
        return {
            "kind": "synthetic",
            "base_level": self.base_level,
            "daily_amplitude": self.daily_amplitude,
            "noise_std": self.noise_std,
            "seed": list(self.seed),
        }

    @classmethod
    def from_dict(cls, data, base_dir=".", problems=None):
        """
        Build a source from its scenario form, loading a trace file if needed.

        Problems are appended to ``problems`` when given, else raised.
        """
        collect = problems is not None
        problems = problems if collect else []
        kind = str(data.get("kind", "synthetic"))
        try:
            seed = data.get("seed", 0)
            seed = tuple(int(s) for s in seed) if isinstance(seed, (list, tuple)) else (int(seed),)
            source = cls(
                kind=kind,
                base_level=float(data.get("base_level", 20.0)),
                daily_amplitude=float(data.get("daily_amplitude", 0.0)),
                noise_std=float(data.get("noise_std", 0.0)),
                seed=seed,
                path=data.get("path"),
                column=str(data.get("column", "value")),
            )
        except (TypeError, ValueError) as exc:
            problems.append(f"signal: {exc}")
            source = cls()
        if kind == "trace":
            if not source.path:
                problems.append("trace signal needs a 'path'")
            else:
                path = Path(source.path)
                if not path.is_absolute():
                    path = Path(base_dir) / path
                try:
                    source = cls(kind="trace", path=str(path), column=source.column, trace=load_trace(path, source.column))
                except WsnError as exc:
                    problems.append(str(exc))
                    return source
        problems.extend(source.violations())
        if problems and not collect:
            raise ValidationError("; ".join(problems))
        return source


def sample_signal(source, sim_time_seconds, start_epoch=0):
    """
    The value a node measures at ``sim_time_seconds`` into the scenario.

    Args:
        source (SignalSource): Signal definition
        sim_time_seconds (int): Simulated seconds since scenario start
        start_epoch (int): Epoch seconds of the scenario start, for traces

    Returns:
        float

    Raises:
        SignalRangeError: For a trace sampled outside its span

    Example:
        >>> sample_signal(SignalSource(base_level=20.0, daily_amplitude=4.0), 21600)
        24.0
    """
    t = int(sim_time_seconds)
    if source.kind == "trace":
        return source.trace.value_at_or_before(start_epoch + t)
    value = source.base_level + source.daily_amplitude * math.sin(math.tau * (t / SECONDS_PER_DAY))
    if source.noise_std > 0:
        rng = np.random.default_rng([*source.seed, t])
        value += float(rng.normal(0.0, source.noise_std))
    return value
