"""Closed-loop landing simulation and landing metrics."""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .contact import ContactParams, step_kernel
from .dynamics import ControlInput, State, VehicleParams
from .heave import HeaveModel, deck_position, deck_velocity
from .mpc import LcpRestitution, MpcConfig, RecedingHorizonController, StrategyVariant, TrackingNoLcp

UNSETTLED = math.inf

# Tuned heaving-deck study. The library defaults (20 x 50 ms horizon, equal
# position/velocity weights, W = 0.1) approach so slowly that no strategy
# touches down within a few seconds, and a 50 ms prediction step cannot
# resolve bounces shorter than g*dt/eps. These values give a 0.5 s lookahead
# at 10 ms, weight positions only, and scale W so that the residual term is
# comparable to tracking.
STUDY_HORIZON = 50
STUDY_DT = 0.01
STUDY_POSITION_WEIGHT = 8e6
STUDY_W = 5e4
STUDY_START_HEIGHT = 0.6
STUDY_DURATION = 2.5
STUDY_STRATEGIES = (TrackingNoLcp(), LcpRestitution(0.0), LcpRestitution(0.25), LcpRestitution(0.5), LcpRestitution(0.75))


@dataclass(frozen=True)
class Scenario:
    heave: HeaveModel = field(default_factory=HeaveModel)
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    initial_state: State = field(default_factory=lambda: State([0.0, 0.5, 0.0], [0.0, 0.0, 0.0]))
    mpc: MpcConfig = field(default_factory=MpcConfig)
    plant_dt: float = 1e-3
    control_period: float = 0.05
    duration: float = 3.0
    seed: int = 0
    rest_velocity: float = 0.02
    gap_tol: float = 1e-6

    def __post_init__(self):
        if not self.plant_dt > 0 or not self.duration > 0:
            raise ValueError("plant_dt and duration must be positive")
        if self.plant_dt > self.control_period:
            raise ValueError("plant_dt must not exceed the controller period")
        ratio = self.control_period / self.plant_dt
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ValueError("controller period must be an integer multiple of plant_dt")

    @property
    def plant_contact(self) -> ContactParams:
        return ContactParams(self.heave.restitution, self.rest_velocity, self.gap_tol)

    @property
    def steps_per_control(self) -> int:
        return int(round(self.control_period / self.plant_dt))

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.plant_dt))


@dataclass(frozen=True)
class ContactEvent:
    """Onset of a contact phase (first impulse after a contact-free step)."""

    index: int
    time: float
    gap_rate_pre: float
    impulse: float


@dataclass(frozen=True)
class SolveRecord:
    time: float
    tracking_cost: float
    restitution_cost: float
    warm_cost: float
    flag: int
    iterations: int

    @property
    def total_cost(self) -> float:
        return self.tracking_cost + self.restitution_cost


@dataclass
class SimResult:
    """Plant-rate log.

    Row k holds the state at t_k = k * plant_dt together with the input,
    impulse and residual of the step that produced it (row 0: initial state,
    first commanded input, zero impulse).
    """

    t: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    z_plat: np.ndarray
    zdot_plat: np.ndarray
    gap: np.ndarray
    gap_rate: np.ndarray
    impulse: np.ndarray
    residual: np.ndarray
    solver_flag: np.ndarray
    solves: List[SolveRecord]
    events: List[ContactEvent]
    scenario: Scenario
    aborted: Optional[str] = None
    wall_time: float = 0.0

    @property
    def dt(self) -> float:
        return self.scenario.plant_dt

    def monotonicity_violations(self, atol: float = 1e-12) -> int:
        return sum(1 for s in self.solves if s.total_cost > s.warm_cost + atol)


@dataclass(frozen=True)
class LandingMetrics:
    mae_z: float
    post_impact_deflection: float
    time_to_land: float
    success: bool
    pre_impact_relative_velocity: float
    impulse_total: float
    first_impact_time: float
    first_braking_time: float


class ConstantInput:
    """Open-loop stand-in for the MPC (drop tests, plant checks)."""

    def __init__(self, u: ControlInput):
        self.u = u
        self.last = None

    def step(self, x0: State, t0: float) -> ControlInput:
        return self.u


def study_mpc_config(strategy: StrategyVariant) -> MpcConfig:
    q = np.diag([STUDY_POSITION_WEIGHT] * 3 + [0.0] * 3)
    return MpcConfig(horizon=STUDY_HORIZON, dt=STUDY_DT, Q=q, W=STUDY_W, strategy=strategy)


def study_scenario(strategy: StrategyVariant = LcpRestitution(0.5), **overrides) -> Scenario:
    """Heaving-deck scenario with the tuned controller and a 100 Hz control rate."""
    kw = dict(
        mpc=study_mpc_config(strategy),
        initial_state=State([0.0, STUDY_START_HEIGHT, 0.0], [0.0, 0.0, 0.0]),
        control_period=STUDY_DT,
        duration=STUDY_DURATION,
    )
    kw.update(overrides)
    return Scenario(**kw)


def simulate(sc: Scenario, controller=None) -> SimResult:
    """Run the closed loop: ZOH controller at control_period, plant at plant_dt.

    ``controller`` defaults to a fresh `RecedingHorizonController` for
    ``sc.mpc``; anything with ``step(state, t)`` and a ``last`` attribute
    (an `MpcSolution` or None) can stand in.
    """
    wall0 = _time.perf_counter()
    p, m, cp = sc.vehicle, sc.heave, sc.plant_contact
    ctrl = controller or RecedingHorizonController(sc.mpc, m, p)
    n = sc.n_steps
    dt = sc.plant_dt
    per = sc.steps_per_control

    t = np.arange(n + 1) * dt
    states = np.full((n + 1, 6), np.nan)
    inputs = np.full((n + 1, 2), np.nan)
    impulse = np.zeros(n + 1)
    residual = np.zeros(n + 1)
    flags = np.zeros(n + 1, dtype=int)
    solves: List[SolveRecord] = []
    events: List[ContactEvent] = []

    y = tuple(float(v) for v in sc.initial_state.as_vector())
    states[0] = y
    u = ControlInput.hover(p)
    flag = 0
    aborted = None
    last = n
    for k in range(n):
        tk = t[k]
        if k % per == 0:
            u = ctrl.step(State.from_vector(y), tk).clipped(p)
            sol = ctrl.last
            if sol is not None:
                flag = sol.flag
                solves.append(
                    SolveRecord(tk, sol.cost.tracking, sol.cost.restitution, sol.warm_cost, sol.flag, sol.iterations)
                )
            if k == 0:
                inputs[0] = (u.thrust, u.torque)
                flags[0] = flag
        try:
            res = step_kernel(y, u.thrust, u.torque, m, cp, p, tk, dt)
        except FloatingPointError as exc:
            aborted = str(exc)
            last = k
            break
        y = res.y
        states[k + 1] = y
        inputs[k + 1] = (u.thrust, u.torque)
        impulse[k + 1] = res.impulse
        residual[k + 1] = res.residual
        flags[k + 1] = flag
        if res.impulse > 0 and impulse[k] == 0:
            events.append(ContactEvent(k + 1, t[k + 1], res.gap_rate_pre, res.impulse))

    if aborted is not None:
        keep = slice(0, last + 1)
        t, states, inputs = t[keep], states[keep], inputs[keep]
        impulse, residual, flags = impulse[keep], residual[keep], flags[keep]

    z_plat = np.array([deck_position(m, tk) for tk in t])
    zdot_plat = np.array([deck_velocity(m, tk) for tk in t])
    return SimResult(
        t=t,
        states=states,
        inputs=inputs,
        z_plat=z_plat,
        zdot_plat=zdot_plat,
        gap=states[:, 1] - z_plat,
        gap_rate=states[:, 4] - zdot_plat,
        impulse=impulse,
        residual=residual,
        solver_flag=flags,
        solves=solves,
        events=events,
        scenario=sc,
        aborted=aborted,
        wall_time=_time.perf_counter() - wall0,
    )


def first_impact(r: SimResult) -> Optional[Tuple[float, float]]:
    """(time, relative velocity of the last pre-impact sample), or None."""
    idx = np.flatnonzero(r.impulse > 0)
    if idx.size == 0:
        return None
    i = int(idx[0])
    return float(r.t[i]), float(r.gap_rate[i - 1])


def post_impact_deflection(r: SimResult) -> float:
    """Largest gap after first contact, clipped at zero."""
    idx = np.flatnonzero(r.impulse > 0)
    if idx.size == 0:
        raise ValueError("no touchdown")
    after = r.gap[int(idx[0]):]
    return max(0.0, float(np.max(after)))


def time_to_land(r: SimResult, settle_window: float = 0.5, tol: Optional[float] = None) -> float:
    """Earliest t with gap <= tol on all of [t, t + settle_window]; inf if never."""
    tol = 10 * r.scenario.gap_tol if tol is None else tol
    near = r.gap <= tol
    w = int(round(settle_window / r.dt))
    n = len(near)
    if n == 0:
        return UNSETTLED
    # run[i] = length of the contiguous True run starting at i
    run = np.zeros(n + 1, dtype=int)
    for i in range(n - 1, -1, -1):
        run[i] = run[i + 1] + 1 if near[i] else 0
    ok = np.flatnonzero(run[:n] >= w + 1)
    if ok.size == 0:
        return UNSETTLED
    return float(r.t[ok[0]])


def mae_z(r: SimResult) -> float:
    return float(np.mean(np.abs(r.states[:, 1] - r.z_plat)))


def first_braking_time(r: SimResult) -> float:
    """First instant with thrust above hover while the vehicle descends."""
    hover = r.scenario.vehicle.hover_thrust
    braking = (r.inputs[:-1, 0] > hover) & (r.states[:-1, 4] < 0)
    idx = np.flatnonzero(braking)
    return float(r.t[idx[0]]) if idx.size else math.inf


def landing_metrics(r: SimResult, settle_window: float = 0.5, success_threshold: float = 1e-3) -> LandingMetrics:
    hit = first_impact(r)
    if hit is None:
        deflection = math.inf
        t_imp, v_pre = math.inf, math.nan
    else:
        t_imp, v_pre = hit
        deflection = post_impact_deflection(r)
    return LandingMetrics(
        mae_z=mae_z(r),
        post_impact_deflection=deflection,
        time_to_land=time_to_land(r, settle_window),
        success=bool(deflection <= success_threshold),
        pre_impact_relative_velocity=v_pre,
        impulse_total=float(np.sum(r.impulse)),
        first_impact_time=t_imp,
        first_braking_time=first_braking_time(r),
    )
