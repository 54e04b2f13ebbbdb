"""Sinusoidal heaving deck."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class HeaveModel:
    """z_plat(t) = A sin(2 pi f t + phase), with the deck's true restitution."""

    amplitude: float = 0.1
    frequency: float = 1.5
    phase: float = 5 * math.pi / 8
    restitution: float = 0.5

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")
        if self.frequency < 0:
            raise ValueError("frequency must be >= 0")
        if not 0.0 <= self.restitution <= 1.0:
            raise ValueError("restitution out of [0,1]")

    @property
    def omega(self) -> float:
        return 2 * math.pi * self.frequency

    @property
    def peak_velocity(self) -> float:
        return self.omega * self.amplitude


def deck_position(m: HeaveModel, t: float) -> float:
    return m.amplitude * math.sin(m.omega * t + m.phase)


def deck_velocity(m: HeaveModel, t: float) -> float:
    return m.omega * m.amplitude * math.cos(m.omega * t + m.phase)


def deck_acceleration(m: HeaveModel, t: float) -> float:
    return -m.omega**2 * m.amplitude * math.sin(m.omega * t + m.phase)
