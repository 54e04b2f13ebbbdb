"""Velocity-level contact with Newton restitution against a heaving deck.

The contact is a single frictionless normal at the vehicle's centre of
mass, so the complementarity problem is scalar:

    nu = R * lam + u,    0 <= lam  _|_  nu >= 0

with R = J_N M^-1 J_N^T = 1/m and u = (1 + eps) * (zdot_k - zdot_plat,k).
The deck velocity is frozen at the step start when assembling u.

`contact_step` is the single time-stepping kernel shared by the plant and
by the controller's prediction model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np

from .dynamics import ControlInput, State, VehicleParams
from .heave import HeaveModel, deck_position, deck_velocity

NORMAL_JACOBIAN = np.array([0.0, 1.0, 0.0])


@dataclass(frozen=True)
class ContactParams:
    """Contact-law parameters.

    Attributes:
        restitution: Newton coefficient used by this model (plant or predictor).
        rest_velocity: closing speeds below this are treated as perfectly
            inelastic so the vehicle can settle instead of micro-bouncing.
        gap_tol: activation / penetration tolerance on the gap (m).
    """

    restitution: float = 0.5
    rest_velocity: float = 0.02
    gap_tol: float = 1e-6

    def __post_init__(self):
        if not 0.0 <= self.restitution <= 1.0:
            raise ValueError("restitution out of [0,1]")
        if self.rest_velocity < 0 or self.gap_tol < 0:
            raise ValueError("rest_velocity and gap_tol must be >= 0")

    @property
    def normal_jacobian(self) -> np.ndarray:
        return NORMAL_JACOBIAN.copy()


@dataclass(frozen=True)
class ContactOutcome:
    """Result of one contact-aware step.

    gap_rate_post is the relative normal velocity right after the impulse,
    i.e. gap_rate_pre + R * impulse, before the step's gravity/thrust
    increment. With an active contact it satisfies Newton's law exactly
    through residual == 0.
    """

    active: bool
    impulse: float
    residual: float
    gap_rate_pre: float
    gap_rate_post: float
    restitution_used: float = 0.0
    clamped: bool = False


class KernelResult(NamedTuple):
    y: Tuple[float, float, float, float, float, float]
    impulse: float
    residual: float
    active: bool
    gap_rate_pre: float
    gap_rate_post: float
    restitution_used: float
    clamped: bool


def gap(s: State, m: HeaveModel, t: float) -> float:
    return s.z - deck_position(m, t)


def gap_rate(s: State, m: HeaveModel, t: float) -> float:
    return s.zdot - deck_velocity(m, t)


def _check_finite(*values):
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"non-finite contact input: {values}")


def assemble_lcp(
    qdot_free: np.ndarray,
    qdot_prev: np.ndarray,
    deck_vel: float,
    cp: ContactParams,
    p: VehicleParams,
) -> Tuple[float, float]:
    """Return (R, u) of the scalar LCP nu = R lam + u.

    ``qdot_free`` is accepted for interface symmetry; the affine term uses
    the pre-step relative velocity (quasi-constant deck velocity).
    """
    qdot_free = np.asarray(qdot_free, dtype=float)
    qdot_prev = np.asarray(qdot_prev, dtype=float)
    _check_finite(*qdot_free, *qdot_prev, deck_vel)
    R = 1.0 / p.mass
    u = (1.0 + cp.restitution) * (float(NORMAL_JACOBIAN @ qdot_prev) - deck_vel)
    return R, u


def solve_lcp_scalar(R: float, u: float) -> float:
    """Closed-form solution of the scalar LCP: lam = max(0, -u/R)."""
    if not R > 0:
        raise ValueError(f"LCP matrix must be positive, got R={R}")
    return max(0.0, -u / R)


def solve_lcp_oracle(R: float, u: float) -> float:
    """Enumerate both complementarity branches and return the feasible one.

    Branch A: lam = 0, w = u (needs u >= 0).
    Branch B: w = 0, lam = -u/R (needs lam >= 0).
    """
    if not R > 0:
        raise ValueError(f"LCP matrix must be positive, got R={R}")
    candidates = []
    if u >= 0:
        candidates.append(0.0)
    lam_b = -u / R
    if lam_b >= 0:
        candidates.append(lam_b)
    if not candidates:
        raise ArithmeticError(f"no feasible branch for R={R}, u={u}")
    # u == 0 makes both branches coincide at lam = 0
    return min(candidates)


def restitution_residual(R: float, u: float, impulse: float) -> float:
    if impulse < 0:
        raise ValueError("impulse must be >= 0")
    return R * impulse + u


def step_kernel(
    y,
    thrust: float,
    torque: float,
    m: HeaveModel,
    cp: ContactParams,
    p: VehicleParams,
    t: float,
    dt: float,
) -> KernelResult:
    """Scalar contact-aware semi-implicit step on y = (x, z, th, xd, zd, thd)."""
    x, z, th, xd, zd, thd = y
    s, c = math.sin(th), math.cos(th)
    mass = p.mass
    xd_n = xd + ((-s * thrust) / mass) * dt
    zd_n = zd + ((c * thrust - mass * p.gravity) / mass) * dt
    thd_n = thd + (torque / p.inertia) * dt

    zp1 = deck_position(m, t + dt)
    vp0 = deck_velocity(m, t)
    rel = zd - vp0
    predicted_gap = z + dt * zd_n - zp1

    eps = cp.restitution
    impulse = 0.0
    active = predicted_gap <= cp.gap_tol and rel < 0.0
    if active:
        if abs(rel) < cp.rest_velocity:
            eps = 0.0
        R = 1.0 / mass
        u = (1.0 + eps) * rel
        impulse = solve_lcp_scalar(R, u)
        residual = R * impulse + u
        zd_n = zd_n + impulse / mass
        rel_post = rel + R * impulse
    else:
        # virtual residual: as if impact happened now
        residual = (1.0 + eps) * rel
        rel_post = rel

    x_n = x + dt * xd_n
    z_n = z + dt * zd_n
    th_n = th + dt * thd_n

    clamped = False
    if z_n - zp1 < -cp.gap_tol:
        clamped = True
        z_n = zp1
        vp1 = deck_velocity(m, t + dt)
        if zd_n < vp1:
            zd_n = vp1

    out = (x_n, z_n, th_n, xd_n, zd_n, thd_n)
    for v in out:
        if not math.isfinite(v):
            raise FloatingPointError(f"non-finite state after contact step at t={t}: {out}")
    return KernelResult(out, impulse, residual, active, rel, rel_post, eps, clamped)


def contact_step(
    s: State,
    u_in: ControlInput,
    m: HeaveModel,
    cp: ContactParams,
    p: VehicleParams,
    t: float,
    dt: float,
) -> Tuple[State, ContactOutcome]:
    """One plant/prediction step: free update, LCP impulse if closing, integrate, clamp."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    y = tuple(float(v) for v in s.as_vector())
    _check_finite(*y, u_in.thrust, u_in.torque, t)
    k = step_kernel(y, u_in.thrust, u_in.torque, m, cp, p, t, dt)
    outcome = ContactOutcome(
        active=k.active,
        impulse=k.impulse,
        residual=k.residual,
        gap_rate_pre=k.gap_rate_pre,
        gap_rate_post=k.gap_rate_post,
        restitution_used=k.restitution_used,
        clamped=k.clamped,
    )
    return State.from_vector(k.y), outcome
