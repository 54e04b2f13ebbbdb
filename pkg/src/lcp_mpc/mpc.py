"""Receding-horizon controller with the contact LCP embedded in its prediction.

The optimal control problem is transcribed by single shooting: the decision
variables are the N inputs, and states are produced by rolling the
contact-aware kernel forward. Cost is

    J = sum_k |x_k - x_ref,k|_Q^2 + |u_k|_R^2   +   W sum_k nu_k^2

where nu_k is the restitution residual evaluated at every horizon step as
if an impact happened there (zero impulse when the contact is inactive).

Gradients come from a hand-written adjoint of a smoothed rollout in which
max(0, y) is replaced by (y + sqrt(y^2 + beta^2)) / 2. Activation and the
penetration clamp are treated as locally constant.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy.optimize import minimize

from .contact import ContactParams, step_kernel
from .dynamics import ControlInput, State, VehicleParams
from .heave import HeaveModel, deck_position, deck_velocity

log = logging.getLogger(__name__)

# solver flags, also written to the trajectory CSV
CONVERGED = 0
ITERATION_CAP = 1
WARM_START_KEPT = 2
NON_FINITE = 3


@dataclass(frozen=True)
class TrackingNoLcp:
    """Track the deck with free-flight prediction; no LCP, no residual cost."""

    @property
    def name(self) -> str:
        return "tracking"

    @property
    def uses_lcp(self) -> bool:
        return False

    @property
    def restitution(self) -> float:
        return 0.0


@dataclass(frozen=True)
class LcpRestitution:
    """Track the deck with the restitution LCP inside the prediction model."""

    restitution: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.restitution <= 1.0:
            raise ValueError("restitution out of [0,1]")

    @property
    def name(self) -> str:
        return f"lcp_eps{self.restitution:g}"

    @property
    def uses_lcp(self) -> bool:
        return True


StrategyVariant = Union[TrackingNoLcp, LcpRestitution]


def _diag(value: float, n: int) -> np.ndarray:
    return value * np.eye(n)


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 20
    dt: float = 0.05
    Q: np.ndarray = field(default_factory=lambda: _diag(8e6, 6))
    R: np.ndarray = field(default_factory=lambda: _diag(1e-3, 2))
    W: float = 0.1
    strategy: StrategyVariant = field(default_factory=LcpRestitution)
    rest_velocity: float = 0.02
    gap_tol: float = 1e-6
    smoothing: float = 1e-4
    max_iter: int = 50
    tol: float = 1e-6
    thrust_bounds: Optional[Tuple[float, float]] = None
    torque_bounds: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        R = np.asarray(self.R, dtype=float)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if Q.shape != (6, 6) or R.shape != (2, 2):
            raise ValueError("Q must be 6x6 and R 2x2")
        if not np.allclose(Q, Q.T) or np.linalg.eigvalsh(Q).min() < -1e-9 * max(1.0, abs(Q).max()):
            raise ValueError("Q must be symmetric positive semidefinite")
        if not np.allclose(R, R.T) or np.linalg.eigvalsh(R).min() <= 0:
            raise ValueError("R must be symmetric positive definite")
        if self.W < 0:
            raise ValueError("W must be >= 0")
        if self.smoothing < 0:
            raise ValueError("smoothing must be >= 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    @property
    def contact(self) -> ContactParams:
        return ContactParams(self.strategy.restitution, self.rest_velocity, self.gap_tol)

    def bounds(self, p: VehicleParams) -> Tuple[np.ndarray, np.ndarray]:
        tb = self.thrust_bounds or (p.thrust_min, p.thrust_max)
        qb = self.torque_bounds or (p.torque_min, p.torque_max)
        return np.array([tb[0], qb[0]], dtype=float), np.array([tb[1], qb[1]], dtype=float)


ReferenceProvider = Callable[[float], np.ndarray]


def deck_reference(m: HeaveModel, x_deck: float = 0.0) -> ReferenceProvider:
    """Full deck state: (x_deck, z_plat, 0, 0, zdot_plat, 0)."""

    def ref(t: float) -> np.ndarray:
        return np.array([x_deck, deck_position(m, t), 0.0, 0.0, deck_velocity(m, t), 0.0])

    return ref


@dataclass
class Rollout:
    states: np.ndarray  # (N+1, 6)
    residuals: np.ndarray  # (N,)
    impulses: np.ndarray  # (N,)


@dataclass
class CostBreakdown:
    tracking: float
    restitution: float

    @property
    def total(self) -> float:
        return self.tracking + self.restitution


@dataclass
class MpcSolution:
    controls: np.ndarray  # (N, 2)
    prediction: Rollout
    cost: CostBreakdown
    warm_cost: float
    flag: int
    iterations: int


def _free_kernel(y, thrust, torque, p: VehicleParams, dt: float):
    x, z, th, xd, zd, thd = y
    s, c = math.sin(th), math.cos(th)
    mass = p.mass
    xd_n = xd + ((-s * thrust) / mass) * dt
    zd_n = zd + ((c * thrust - mass * p.gravity) / mass) * dt
    thd_n = thd + (torque / p.inertia) * dt
    return (x + dt * xd_n, z + dt * zd_n, th + dt * thd_n, xd_n, zd_n, thd_n)


def rollout(
    x0: State,
    controls: np.ndarray,
    cfg: MpcConfig,
    m: HeaveModel,
    p: VehicleParams,
    t0: float,
) -> Rollout:
    """Exact (unsmoothed) prediction over the horizon."""
    controls = np.asarray(controls, dtype=float).reshape(-1, 2)
    n = controls.shape[0]
    states = np.empty((n + 1, 6))
    residuals = np.zeros(n)
    impulses = np.zeros(n)
    y = tuple(float(v) for v in x0.as_vector())
    states[0] = y
    cp = cfg.contact
    lcp = cfg.strategy.uses_lcp
    for k in range(n):
        t = t0 + k * cfg.dt
        T, tau = float(controls[k, 0]), float(controls[k, 1])
        if lcp:
            res = step_kernel(y, T, tau, m, cp, p, t, cfg.dt)
            y = res.y
            residuals[k] = res.residual
            impulses[k] = res.impulse
        else:
            y = _free_kernel(y, T, tau, p, cfg.dt)
            if not all(math.isfinite(v) for v in y):
                raise FloatingPointError(f"non-finite free-flight prediction at t={t}")
        states[k + 1] = y
    return Rollout(states, residuals, impulses)


def reference_trajectory(ref: ReferenceProvider, t0: float, cfg: MpcConfig) -> np.ndarray:
    return np.array([ref(t0 + k * cfg.dt) for k in range(cfg.horizon)])


def tracking_cost(states: np.ndarray, controls: np.ndarray, refs: np.ndarray, cfg: MpcConfig) -> float:
    """sum_{k<N} |x_k - ref_k|_Q^2 + |u_k|_R^2 (terminal state not weighted)."""
    controls = np.asarray(controls, dtype=float).reshape(-1, 2)
    n = controls.shape[0]
    states = np.asarray(states, dtype=float)
    refs = np.asarray(refs, dtype=float)
    if states.shape[0] < n or refs.shape[0] < n:
        raise ValueError("states/refs shorter than the control sequence")
    err = states[:n] - refs[:n]
    return float(np.einsum("ki,ij,kj->", err, cfg.Q, err) + np.einsum("ki,ij,kj->", controls, cfg.R, controls))


def restitution_cost(residuals: np.ndarray, cfg: MpcConfig) -> float:
    if not cfg.strategy.uses_lcp:
        return 0.0
    r = np.asarray(residuals, dtype=float)
    return float(cfg.W * np.dot(r, r))


def evaluate(
    x0: State, controls: np.ndarray, cfg: MpcConfig, m: HeaveModel, p: VehicleParams, t0: float, refs: np.ndarray
) -> Tuple[Rollout, CostBreakdown]:
    ro = rollout(x0, controls, cfg, m, p, t0)
    return ro, CostBreakdown(tracking_cost(ro.states, controls, refs, cfg), restitution_cost(ro.residuals, cfg))


def smoothed_cost_and_grad(
    x0: State,
    controls: np.ndarray,
    cfg: MpcConfig,
    m: HeaveModel,
    p: VehicleParams,
    t0: float,
    refs: np.ndarray,
    deck: Optional[Tuple[list, list, list]] = None,
) -> Tuple[float, np.ndarray]:
    """Total cost of the smoothed rollout and its exact adjoint gradient (N, 2).

    With cfg.smoothing == 0 the forward pass follows `rollout` exactly; the
    cost then agrees with `evaluate` up to floating-point summation order.
    ``deck`` optionally supplies precomputed samples from `deck_samples`.
    """
    controls = np.asarray(controls, dtype=float).reshape(-1, 2)
    n = controls.shape[0]
    dt = cfg.dt
    mass, inertia, grav = p.mass, p.inertia, p.gravity
    R_lcp = 1.0 / mass
    lcp = cfg.strategy.uses_lcp
    eps_model = cfg.strategy.restitution
    beta2 = cfg.smoothing**2
    gap_tol, v_rest = cfg.gap_tol, cfg.rest_velocity
    W = cfg.W if lcp else 0.0

    if lcp and deck is None:
        deck = deck_samples(m, t0, dt, n)
    ys = np.empty((n + 1, 6))
    y = tuple(float(v) for v in x0.as_vector())
    ys[0] = y
    tape = []
    nu = np.zeros(n)
    for k in range(n):
        x, z, th, xd, zd, thd = y
        T, tau = float(controls[k, 0]), float(controls[k, 1])
        s, c = math.sin(th), math.cos(th)
        xd_n = xd + ((-s * T) / mass) * dt
        zd_n = zd + ((c * T - mass * grav) / mass) * dt
        thd_n = thd + (tau / inertia) * dt
        active = False
        eps = eps_model
        dsmax = 0.0
        zclamp = vclamp = False
        if lcp:
            zp1, vp0 = deck[0][k], deck[1][k]
            rel = zd - vp0
            active = (z + dt * zd_n - zp1) <= gap_tol and rel < 0.0
            if active:
                if abs(rel) < v_rest:
                    eps = 0.0
                u = (1.0 + eps) * rel
                arg = -u / R_lcp
                root = math.sqrt(arg * arg + beta2)
                lam = 0.5 * (arg + root)
                dsmax = 0.5 * (1.0 + arg / root) if root > 0 else 0.5
                nu[k] = R_lcp * lam + u
                zd_n = zd_n + lam / mass
            else:
                nu[k] = (1.0 + eps) * rel
        x_n = x + dt * xd_n
        z_n = z + dt * zd_n
        th_n = th + dt * thd_n
        if lcp and z_n - zp1 < -gap_tol:
            zclamp = True
            z_n = zp1
            vp1 = deck[2][k]
            if zd_n < vp1:
                vclamp = True
                zd_n = vp1
        y = (x_n, z_n, th_n, xd_n, zd_n, thd_n)
        ys[k + 1] = y
        tape.append((s, c, T, active, eps, dsmax, zclamp, vclamp))

    err = ys[:n] - refs[:n]
    QE = err @ cfg.Q
    RU = controls @ cfg.R
    J = float(np.sum(QE * err) + np.sum(RU * controls) + W * np.dot(nu, nu))
    if not math.isfinite(J):
        return math.inf, np.zeros_like(controls)

    grad = np.empty((n, 2))
    ax = az = ath = axd = azd = athd = 0.0
    for k in range(n - 1, -1, -1):
        s, c, T, active, eps, dsmax, zclamp, vclamp = tape[k]
        az_eff = 0.0 if zclamp else az
        azd_eff = 0.0 if vclamp else azd
        g_xd = axd + dt * ax
        g_zd_n = azd_eff + dt * az_eff
        g_thd = athd + dt * ath
        g_nu = 2.0 * W * nu[k]
        if lcp and active:
            g_lam = g_zd_n / mass + g_nu * R_lcp
            g_u = g_nu - g_lam * dsmax / R_lcp
            g_rel = g_u * (1.0 + eps)
        elif lcp:
            g_rel = g_nu * (1.0 + eps)
        else:
            g_rel = 0.0
        g_T = g_zd_n * c * dt / mass - g_xd * s * dt / mass
        g_th = ath - g_zd_n * s * T * dt / mass - g_xd * c * T * dt / mass
        g_tau = g_thd * dt / inertia
        grad[k, 0] = g_T + 2.0 * RU[k, 0]
        grad[k, 1] = g_tau + 2.0 * RU[k, 1]
        qe = QE[k]
        ax = ax + 2.0 * qe[0]
        az = az_eff + 2.0 * qe[1]
        ath = g_th + 2.0 * qe[2]
        axd = g_xd + 2.0 * qe[3]
        azd = g_zd_n + g_rel + 2.0 * qe[4]
        athd = g_thd + 2.0 * qe[5]
    return J, grad


def deck_samples(m: HeaveModel, t0: float, dt: float, n: int) -> Tuple[list, list, list]:
    """Per-step (z_plat(t+dt), zdot_plat(t), zdot_plat(t+dt)) as used by `step_kernel`."""
    ts = [t0 + k * dt for k in range(n)]
    return (
        [deck_position(m, t + dt) for t in ts],
        [deck_velocity(m, t) for t in ts],
        [deck_velocity(m, t + dt) for t in ts],
    )


def hover_sequence(cfg: MpcConfig, p: VehicleParams) -> np.ndarray:
    lo, hi = cfg.bounds(p)
    u = np.clip([p.hover_thrust, 0.0], lo, hi)
    return np.tile(u, (cfg.horizon, 1))


def solve_mpc(
    x0: State,
    t0: float,
    cfg: MpcConfig,
    m: HeaveModel,
    p: VehicleParams,
    warm: Optional[np.ndarray] = None,
    ref: Optional[ReferenceProvider] = None,
) -> MpcSolution:
    """Minimise J over the input sequence with box-constrained L-BFGS.

    The returned sequence is never worse (in exact cost) than the projected
    warm start.
    """
    n = cfg.horizon
    lo, hi = cfg.bounds(p)
    if warm is None:
        warm = hover_sequence(cfg, p)
    warm = np.clip(np.asarray(warm, dtype=float).reshape(-1, 2), lo, hi)
    if warm.shape[0] != n:
        raise ValueError(f"warm start has {warm.shape[0]} steps, horizon is {n}")
    ref = ref or deck_reference(m)
    refs = reference_trajectory(ref, t0, cfg)

    warm_ro, warm_cost = evaluate(x0, warm, cfg, m, p, t0, refs)
    span = hi - lo

    def fun(v):
        u = lo + v.reshape(n, 2) * span
        J, g = smoothed_cost_and_grad(x0, u, cfg, m, p, t0, refs, deck)
        return J, (g * span).ravel()

    deck = deck_samples(m, t0, cfg.dt, n) if cfg.strategy.uses_lcp else None
    v0 = ((warm - lo) / span).ravel()
    flag = CONVERGED
    iterations = 0
    try:
        res = minimize(
            fun,
            v0,
            jac=True,
            method="L-BFGS-B",
            bounds=[(0.0, 1.0)] * (2 * n),
            options={"maxiter": cfg.max_iter, "ftol": cfg.tol, "gtol": 1e-12, "maxls": 30},
        )
        iterations = int(res.nit)
        cand = np.clip(lo + res.x.reshape(n, 2) * span, lo, hi)
        if res.status == 1:
            flag = ITERATION_CAP
        cand_ro, cand_cost = evaluate(x0, cand, cfg, m, p, t0, refs)
        if not math.isfinite(cand_cost.total):
            raise FloatingPointError("non-finite candidate cost")
    except (FloatingPointError, ValueError) as exc:
        log.warning("MPC solve fell back to warm start: %s", exc)
        return MpcSolution(warm, warm_ro, warm_cost, warm_cost.total, NON_FINITE, iterations)

    if cand_cost.total <= warm_cost.total:
        return MpcSolution(cand, cand_ro, cand_cost, warm_cost.total, flag, iterations)
    return MpcSolution(warm, warm_ro, warm_cost, warm_cost.total, WARM_START_KEPT, iterations)


class RecedingHorizonController:
    """Stateful wrapper: shift-and-repeat warm start, return the first input."""

    def __init__(self, cfg: MpcConfig, heave: HeaveModel, params: VehicleParams, ref: Optional[ReferenceProvider] = None):
        self.cfg = cfg
        self.heave = heave
        self.params = params
        self.ref = ref or deck_reference(heave)
        self._previous: Optional[np.ndarray] = None
        self.last: Optional[MpcSolution] = None

    def reset(self):
        self._previous = None
        self.last = None

    def warm_start(self) -> np.ndarray:
        if self._previous is None:
            return hover_sequence(self.cfg, self.params)
        return np.vstack([self._previous[1:], self._previous[-1:]])

    def step(self, x0: State, t0: float) -> ControlInput:
        sol = solve_mpc(x0, t0, self.cfg, self.heave, self.params, warm=self.warm_start(), ref=self.ref)
        self._previous = sol.controls
        self.last = sol
        return ControlInput(float(sol.controls[0, 0]), float(sol.controls[0, 1]))
