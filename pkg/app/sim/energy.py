"""
Node Energy Model

A battery drained by a fixed cost per sample, per transmission and per
reception. The battery never goes below zero; a node whose battery
reaches zero halts.
"""

import math
from dataclasses import dataclass, replace

from app.errors import ValidationError

EVENTS = ("sample", "tx", "rx")


@dataclass(frozen=True)
class EnergyModel:
    battery_joules: float = 100.0
    cost_sample_joules: float = 0.002
    cost_tx_joules: float = 0.05
    cost_rx_joules: float = 0.03

    def violations(self):
        problems = []
        values = (self.battery_joules, self.cost_sample_joules, self.cost_tx_joules, self.cost_rx_joules)
        if not all(math.isfinite(v) for v in values):
            return ["energy values must be finite"]
        if self.battery_joules <= 0:
            problems.append("battery_joules must be positive")
        if min(values[1:]) < 0:
            problems.append("energy costs must be non-negative")
        return problems

    @property
    def depleted(self):
        return self.battery_joules <= 0.0

    def cost_of(self, event):
        if event not in EVENTS:
            raise ValidationError(f"unknown energy event {event!r}")
        return getattr(self, f"cost_{event}_joules")

    def spent(self, samples, transmissions, receptions):
        """Energy used by the given event counts."""
        return (
            self.cost_sample_joules * samples
            + self.cost_tx_joules * transmissions
            + self.cost_rx_joules * receptions
        )

    def to_dict(self):
        return {
            "battery_joules": self.battery_joules,
            "cost_sample_joules": self.cost_sample_joules,
            "cost_tx_joules": self.cost_tx_joules,
            "cost_rx_joules": self.cost_rx_joules,
        }

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(**{k: float(v) for k, v in dict(data or {}).items()})
        except TypeError as exc:
            raise ValidationError(f"energy: {exc}") from exc


def apply_energy(model, event):
    """
    Charge one event against the battery, flooring at zero.

    Example:
        >>> apply_energy(EnergyModel(battery_joules=1.0, cost_tx_joules=0.3), "tx").battery_joules
        0.7
    """
    remaining = model.battery_joules - model.cost_of(event)
    return replace(model, battery_joules=max(0.0, remaining))
