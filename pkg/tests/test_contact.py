import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lcp_mpc.contact import (
    NORMAL_JACOBIAN,
    ContactParams,
    assemble_lcp,
    contact_step,
    gap,
    gap_rate,
    restitution_residual,
    solve_lcp_oracle,
    solve_lcp_scalar,
    step_kernel,
)
from lcp_mpc.dynamics import ControlInput, State, VehicleParams, free_step
from lcp_mpc.heave import HeaveModel

P = VehicleParams()
STILL = HeaveModel(amplitude=0.0)
DECK = HeaveModel()
OFF = ControlInput(0.0, 0.0)


def test_normal_jacobian_is_gap_gradient():
    # g_N = z - z_plat, so dg/dq = [0, 1, 0]
    np.testing.assert_array_equal(NORMAL_JACOBIAN, [0.0, 1.0, 0.0])
    np.testing.assert_array_equal(ContactParams().normal_jacobian, [0.0, 1.0, 0.0])


def test_gap_examples():
    assert gap(State([0, 1, 0], [0, 0, 0]), STILL, 2.0) == 1.0
    assert gap(State([0, 0.5, 0], [0, 0, 0]), DECK, 0.0) == pytest.approx(0.40761, abs=1e-5)
    z = 0.1 * math.sin(5 * math.pi / 8)
    assert gap(State([0, z, 0], [0, 0, 0]), DECK, 0.0) == 0.0


def test_gap_rate_examples():
    assert gap_rate(State([0, 1, 0], [0, -1, 0]), STILL, 0.0) == -1.0
    rising = HeaveModel(phase=0.0)
    assert gap_rate(State([0, 1, 0], [0, 0, 0]), rising, 0.0) == pytest.approx(-0.9425, abs=1e-4)


def test_assemble_lcp():
    R, u = assemble_lcp(np.zeros(3), np.array([0, -1.0, 0]), 0.0, ContactParams(0.5), P)
    assert R == pytest.approx(1 / 0.03, rel=1e-15)
    assert u == -1.5
    _, u0 = assemble_lcp(np.zeros(3), np.array([0, 0.2, 0]), 0.2, ContactParams(0.0), P)
    assert u0 == 0.0


def test_assemble_lcp_rejects_non_finite():
    with pytest.raises(ValueError):
        assemble_lcp(np.zeros(3), np.array([0, math.nan, 0]), 0.0, ContactParams(), P)


def test_scalar_solve_examples():
    assert solve_lcp_scalar(5.0, 2.0) == 0.0
    assert solve_lcp_scalar(1 / 0.03, -1.5) == pytest.approx(0.045, rel=1e-14)
    assert solve_lcp_scalar(1 / 0.03, -1.5) == pytest.approx(0.03 * 1.5 * 1.0, rel=1e-14)
    assert solve_lcp_scalar(3.0, 0.0) == 0.0


def test_oracle_examples():
    assert solve_lcp_oracle(1 / 0.03, -1.5) == pytest.approx(0.045, rel=1e-14)
    assert solve_lcp_oracle(1.0, 0.7) == 0.0


@pytest.mark.parametrize("solver", [solve_lcp_scalar, solve_lcp_oracle])
def test_non_positive_R_rejected(solver):
    with pytest.raises(ValueError):
        solver(0.0, 1.0)


def test_lcp_random_samples_match_oracle():
    rng = np.random.default_rng(1234)
    R = rng.uniform(0.0, 100.0, 20000)
    R[R == 0] = 1.0
    u = rng.uniform(-10.0, 10.0, 20000)
    for r, a in zip(R, u):
        lam = solve_lcp_scalar(r, a)
        w = r * lam + a
        assert lam >= 0 and w >= -1e-12 and abs(lam * w) <= 1e-12
        assert lam == solve_lcp_oracle(r, a)


def test_residual_examples():
    R, u = 1 / 0.03, -1.5
    assert restitution_residual(R, u, solve_lcp_scalar(R, u)) == pytest.approx(0.0, abs=1e-15)
    assert restitution_residual(R, 0.3, 0.0) == 0.3
    with pytest.raises(ValueError):
        restitution_residual(R, u, -1.0)


def test_newton_law_numeric_instance():
    # eps = 0.5, incoming -1 m/s on a static deck: the impulse alone leaves +0.5 m/s
    R, u = assemble_lcp(np.zeros(3), np.array([0, -1.0, 0]), 0.0, ContactParams(0.5), P)
    lam = solve_lcp_scalar(R, u)
    assert -1.0 + R * lam == pytest.approx(0.5, rel=1e-14)


@settings(max_examples=300, deadline=None)
@given(R=st.floats(1e-3, 1e3), u1=st.floats(-10, 10), u2=st.floats(-10, 10), l1=st.floats(0, 10), l2=st.floats(0, 10))
def test_lcp_monotonicity(R, u1, u2, l1, l2):
    lo, hi = sorted((u1, u2))
    assert solve_lcp_scalar(R, hi) <= solve_lcp_scalar(R, lo)
    a, b = sorted((l1, l2))
    assert restitution_residual(R, u1, a) <= restitution_residual(R, u1, b)


def _at_surface(zdot: float) -> State:
    return State([0.0, 0.0, 0.0], [0.0, zdot, 0.0])


def test_hover_far_above_is_free_step():
    s = State([0.0, 1.0, 0.0], [0.0, 0.0, 0.0])
    nxt, out = contact_step(s, ControlInput.hover(P), STILL, ContactParams(), P, 0.0, 0.01)
    np.testing.assert_array_equal(nxt.as_vector(), free_step(s, ControlInput.hover(P), P, 0.01).as_vector())
    assert not out.active and out.impulse == 0.0


def test_impact_at_surface_hand_computation():
    dt = 1e-3
    nxt, out = contact_step(_at_surface(-1.0), OFF, STILL, ContactParams(0.5), P, 0.0, dt)
    assert out.active
    assert out.impulse == pytest.approx(0.03 * 1.5 * 1.0, rel=1e-14)
    assert nxt.zdot == pytest.approx(0.5 - 9.81 * dt, rel=1e-12)
    assert out.residual == pytest.approx(0.0, abs=1e-12)
    assert out.gap_rate_post == pytest.approx(-0.5 * out.gap_rate_pre, rel=1e-14)


def test_inelastic_impact_kills_relative_velocity():
    _, out = contact_step(_at_surface(-1.0), OFF, STILL, ContactParams(0.0), P, 0.0, 1e-3)
    assert out.gap_rate_post == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("eps", [0.0, 0.25, 0.5, 0.75, 1.0])
def test_normal_kinetic_energy_ratio(eps):
    _, out = contact_step(_at_surface(-1.3), OFF, STILL, ContactParams(eps), P, 0.0, 1e-3)
    ke_pre = 0.5 * P.mass * out.gap_rate_pre**2
    ke_post = 0.5 * P.mass * out.gap_rate_post**2
    assert ke_post / ke_pre == pytest.approx(eps**2, abs=1e-9)


def test_rest_velocity_switches_to_inelastic():
    _, out = contact_step(_at_surface(-0.01), OFF, STILL, ContactParams(0.5, rest_velocity=0.02), P, 0.0, 1e-3)
    assert out.active and out.restitution_used == 0.0
    assert out.gap_rate_post == pytest.approx(0.0, abs=1e-15)


def test_inactive_residual_is_virtual():
    s = State([0.0, 1.0, 0.0], [0.0, -0.4, 0.0])
    _, out = contact_step(s, OFF, STILL, ContactParams(0.5), P, 0.0, 1e-3)
    assert not out.active
    assert out.residual == pytest.approx(1.5 * -0.4, rel=1e-15)


def test_separating_contact_is_inactive():
    _, out = contact_step(_at_surface(0.3), OFF, STILL, ContactParams(0.5), P, 0.0, 1e-3)
    assert not out.active and out.impulse == 0.0


def test_penetration_is_clamped():
    # the deck rises into a vehicle that is moving up slower than the deck
    deck = HeaveModel(phase=0.0)
    s = State([0.0, 0.0, 0.0], [0.0, 0.5, 0.0])
    nxt, out = contact_step(s, OFF, deck, ContactParams(0.0), P, 0.0, 1e-2)
    assert out.clamped
    assert gap(nxt, deck, 1e-2) == pytest.approx(0.0, abs=1e-15)
    assert nxt.zdot >= deck.peak_velocity * math.cos(deck.omega * 1e-2) - 1e-12


@settings(max_examples=500, deadline=None)
@given(
    z=st.floats(-0.05, 0.3),
    zdot=st.floats(-3, 3),
    thrust=st.floats(0, 0.6),
    t=st.floats(0, 5),
    eps=st.floats(0, 1),
    dt=st.sampled_from([1e-3, 1e-2, 5e-2]),
)
def test_kernel_lcp_triple(z, zdot, thrust, t, eps, dt):
    s = State([0.0, z, 0.0], [0.0, zdot, 0.0])
    _, out = contact_step(s, ControlInput(thrust, 0.0), DECK, ContactParams(eps), P, t, dt)
    assert out.impulse >= 0
    if out.active:
        assert out.residual >= -1e-9
        assert out.impulse * out.residual <= 1e-9
    else:
        assert out.impulse == 0.0


def test_non_finite_input_rejected():
    with pytest.raises(ValueError):
        contact_step(_at_surface(-1.0), ControlInput(math.inf, 0.0), STILL, ContactParams(), P, 0.0, 1e-3)


def test_overflow_raises_instead_of_returning_nan():
    y = (0.0, 1.0, 0.0, 0.0, 0.0, 0.0)
    with pytest.raises(FloatingPointError):
        step_kernel(y, 1e308, 0.0, STILL, ContactParams(), P, 0.0, 1e-3)


def test_contact_params_validation():
    with pytest.raises(ValueError, match=r"restitution out of \[0,1\]"):
        ContactParams(1.2)
    with pytest.raises(ValueError):
        ContactParams(0.5, rest_velocity=-1.0)
