"""Planar multirotor rigid-body model.

Configuration q = [x, z, theta] with mass-inertia matrix diag(m, m, I).
Inputs are total thrust T along the body z-axis and pitch torque tau.
Gravity enters as -m*g on the z coordinate; velocities are advanced first
and positions are then integrated with the *new* velocity (semi-implicit
Euler).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class VehicleParams:
    """Mass properties and actuator limits (nano-quadrotor scale defaults)."""

    mass: float = 0.03
    inertia: float = 1.4e-5
    gravity: float = 9.81
    thrust_min: float = 0.0
    thrust_max: float = 0.6
    torque_min: float = -0.01
    torque_max: float = 0.01

    def __post_init__(self):
        if not (self.mass > 0 and self.inertia > 0 and self.gravity > 0):
            raise ValueError("mass, inertia and gravity must be positive")
        if self.thrust_min < 0:
            raise ValueError("thrust_min must be >= 0 (rotors cannot pull downward)")
        if not self.thrust_min < self.thrust_max:
            raise ValueError("thrust_min must be < thrust_max")
        if not self.torque_min < self.torque_max:
            raise ValueError("torque_min must be < torque_max")

    @property
    def hover_thrust(self) -> float:
        return self.mass * self.gravity

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.thrust_min, self.torque_min])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.thrust_max, self.torque_max])


@dataclass(frozen=True)
class State:
    """Generalized coordinates and velocities. theta is never wrapped."""

    q: np.ndarray = field(default_factory=lambda: np.zeros(3))
    qdot: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(3)
        qdot = np.asarray(self.qdot, dtype=float).reshape(3)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qdot))):
            raise ValueError(f"non-finite state: q={q}, qdot={qdot}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qdot)

    @classmethod
    def from_vector(cls, v) -> "State":
        v = np.asarray(v, dtype=float)
        return cls(v[:3], v[3:6])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.qdot])

    @property
    def x(self) -> float:
        return float(self.q[0])

    @property
    def z(self) -> float:
        return float(self.q[1])

    @property
    def theta(self) -> float:
        return float(self.q[2])

    @property
    def zdot(self) -> float:
        return float(self.qdot[1])


@dataclass(frozen=True)
class ControlInput:
    thrust: float
    torque: float = 0.0

    def as_vector(self) -> np.ndarray:
        return np.array([self.thrust, self.torque], dtype=float)

    def clipped(self, p: VehicleParams) -> "ControlInput":
        """Project onto the actuator box."""
        return ControlInput(
            min(max(self.thrust, p.thrust_min), p.thrust_max),
            min(max(self.torque, p.torque_min), p.torque_max),
        )

    @classmethod
    def hover(cls, p: VehicleParams) -> "ControlInput":
        return cls(p.hover_thrust, 0.0)


def mass_matrix(p: VehicleParams) -> np.ndarray:
    return np.diag([p.mass, p.mass, p.inertia])


def input_map(theta: float) -> np.ndarray:
    """Return B(theta), mapping [T, tau] to generalized forces (Fx, Fz, tau)."""
    s, c = math.sin(theta), math.cos(theta)
    return np.array([[-s, 0.0], [c, 0.0], [0.0, 1.0]])


def free_velocity_update(s: State, u: ControlInput, p: VehicleParams, dt: float) -> np.ndarray:
    """Velocity after one step with no contact impulse.

    qdot_free = qdot + M^-1 (-m g e_z + B(theta) u) dt
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    force = input_map(s.theta) @ u.as_vector()
    force[1] -= p.mass * p.gravity
    return s.qdot + force / np.array([p.mass, p.mass, p.inertia]) * dt


def integrate_position(s: State, qdot_next: np.ndarray, dt: float) -> State:
    """Advance q with the post-update velocity (semi-implicit Euler)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    qdot_next = np.asarray(qdot_next, dtype=float)
    return State(s.q + dt * qdot_next, qdot_next)


def free_step(s: State, u: ControlInput, p: VehicleParams, dt: float) -> State:
    return integrate_position(s, free_velocity_update(s, u, p, dt), dt)
