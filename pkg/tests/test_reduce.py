import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from augphase.adjoint import phase_shift_oracle
from augphase.odecore import IntegratorConfig, integrate
from augphase.reduce import (ControlSignal, ReducedState, ReductionError, compare_reductions,
                             simulate_full_perturbed, simulate_reduced)

TWO_PI = 2 * math.pi


def test_reduced_state_wraps():
    s = ReducedState(7.0, 0.5)
    assert abs(s.theta - (7.0 - TWO_PI)) < 1e-15 and s.psi == 0.5
    with pytest.raises(ValueError):
        ReducedState(float("nan"))
    with pytest.raises(ValueError):
        ReducedState(0.0, float("inf"))


def test_control_validation():
    with pytest.raises(ValueError):
        ControlSignal.impulses([1.0, 1.0], [[0, 1], [1, 0]])
    with pytest.raises(ValueError):
        ControlSignal.piecewise([0.0, 2.0, 1.0], np.zeros((3, 2)))
    with pytest.raises(ValueError):
        ControlSignal.piecewise([0.0], [[np.nan, 0.0]])
    with pytest.raises(ValueError):
        ControlSignal("ramp", [0.0], [[0.0]])
    with pytest.raises(ValueError):
        ControlSignal.impulses([0.0], [[1.0, 2.0, 3.0]]).check_dim(2)


def test_piecewise_evaluation():
    u = ControlSignal.piecewise([1.0, 2.0], [[1.0, 0.0], [0.0, 3.0]])
    assert np.array_equal(u(0.5), [0, 0])
    assert np.array_equal(u(1.0), [1, 0]) and np.array_equal(u(1.99), [1, 0])
    assert np.array_equal(u(2.0), [0, 3]) and np.array_equal(u(50.0), [0, 3])
    assert not u.is_zero and ControlSignal.zero(2).is_zero


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=8, unique=True))
def test_control_times_sorted_accepted(ts):
    ts = sorted(ts)
    u = ControlSignal.impulses(ts, np.ones((len(ts), 2)))
    assert u.dim == 2 and np.array_equal(u.times, ts)
    if len(ts) > 1:
        with pytest.raises(ValueError):
            ControlSignal.impulses(ts[::-1], np.ones((len(ts), 2)))


def test_unforced_closed_form(hopf_red):
    Z, I = hopf_red.prc, hopf_red.irc
    t = np.linspace(0, 7.3, 50)
    run = simulate_reduced(Z, I, -2.0, 1.0, ControlSignal.zero(2), ReducedState(0.7, 0.3), (0, 7.3), t_eval=t)
    assert np.max(np.abs(run.theta_unwrapped - (0.7 + t))) < 1e-10
    assert np.max(np.abs(run.psi - 0.3 * np.exp(-2 * t))) < 1e-10
    assert abs(run.final().theta - (0.7 + 7.3) % TWO_PI) < 1e-10


def test_hopf_impulse_rules(hopf_red_vneg):
    Z, I, k = hopf_red_vneg.prc, hopf_red_vneg.irc, hopf_red_vneg.floquet.k
    for d, want in (((0.0, 1e-3), (1e-3, 0.0)), ((-1e-3, 0.0), (0.0, 1e-3))):
        run = simulate_reduced(Z, I, k, 1.0, ControlSignal.impulses([0.0], [d]), ReducedState(0.0),
                               (0.0, 1.0), t_eval=[0.0])
        assert abs(run.theta_unwrapped[0] - want[0]) < 1e-8
        assert abs(run.psi[0] - want[1]) < 1e-8
        assert len(run.jumps) == 1


def test_forced_constant_input(hopf_red):
    # constant input u along y at small amplitude: dtheta/dt = 1 + eps cos(theta) to first order
    Z, I = hopf_red.prc, hopf_red.irc
    eps = 1e-3
    u = ControlSignal.piecewise([0.0], [[0.0, eps]])
    run = simulate_reduced(Z, I, -2.0, 1.0, u, ReducedState(0.0), (0.0, 3.0), t_eval=[3.0])
    # closed-form solution of theta' = 1 + eps cos theta, theta(0)=0
    a = math.sqrt(1 - eps * eps)
    th = 2 * math.atan(math.sqrt((1 + eps) / (1 - eps)) * math.tan(a * 3.0 / 2))
    th = th % TWO_PI
    assert abs(run.theta[0] - th) < 1e-8


def test_impulse_composition(hopf_red):
    Z, I, k = hopf_red.prc, hopf_red.irc, -2.0
    d1, d2 = np.array([2e-3, -1e-3]), np.array([-5e-4, 3e-3])
    both = simulate_reduced(Z, I, k, 1.0, ControlSignal.impulses([0.5, 1.7], [d1, d2]),
                            ReducedState(0.2, 0.1), (0.0, 3.0), t_eval=[3.0])
    a = simulate_reduced(Z, I, k, 1.0, ControlSignal.impulses([0.5], [d1]), ReducedState(0.2, 0.1),
                         (0.0, 1.7), t_eval=[1.7])
    mid = a.final()
    b = simulate_reduced(Z, I, k, 1.0, ControlSignal.impulses([0.0], [d2]), ReducedState(mid.theta, mid.psi),
                         (0.0, 1.3), t_eval=[1.3])
    assert abs((both.theta[0] - b.theta[0] + math.pi) % TWO_PI - math.pi) < 1e-10
    assert abs(both.psi[0] - b.psi[0]) < 1e-10


def test_nonfinite_reported(hopf_red):
    Z, I = hopf_red.prc, hopf_red.irc
    u = ControlSignal.piecewise([0.0], [[1e300, 1e300]])
    with pytest.raises(ReductionError):
        simulate_reduced(Z, I, 50.0, 1.0, u, ReducedState(0.0, 1.0), (0.0, 30.0))


def test_grid_mismatch_rejected(hopf_red, vdp01_red):
    with pytest.raises(ValueError):
        simulate_reduced(hopf_red.prc, hopf_red.irc.__class__("IRC", hopf_red.irc.theta[::2],
                                                              hopf_red.irc.values[::2], {}),
                         -2.0, 1.0, ControlSignal.zero(2), ReducedState(0.0), (0, 1))


def test_full_unforced_bit_identical(hopf_red):
    cfg = IntegratorConfig(rtol=1e-11, atol=1e-13)
    a = simulate_full_perturbed(hopf_red.field, ControlSignal.zero(2), [0.3, 0.4], (0, 5), cfg)
    b = integrate(hopf_red.field, [0.3, 0.4], (0, 5), cfg)
    assert np.array_equal(a.t, b.t) and np.array_equal(a.y, b.y)


def test_full_impulse_is_exact_jump(hopf_red):
    d = np.array([1e-3, -2e-3])
    x0 = np.array([1.0, 0.0])
    tr = simulate_full_perturbed(hopf_red.field, ControlSignal.impulses([0.0], [d]), x0, (0, 1.0))
    assert np.array_equal(tr.x0, x0 + d)
    tr2 = simulate_full_perturbed(hopf_red.field, ControlSignal.impulses([0.4], [d]), x0, (0, 1.0))
    pre = tr2(0.4 - 1e-12)
    assert np.max(np.abs(tr2(0.4) - pre - d)) < 1e-9


def test_full_impulse_phase_shift(hopf_red):
    o = hopf_red.orbit
    d = np.array([0.0, 1e-3])
    assert np.allclose(o(0.0), [1.0, 0.0], atol=1e-9)
    s = phase_shift_oracle(hopf_red.field, o, 0.0, d, k=-2.0)
    assert abs(s - 1e-3) < 1e-5


def test_compare_reductions_sweep(hopf_red):
    rep = compare_reductions(hopf_red.field, hopf_red.orbit, hopf_red.prc, hopf_red.irc, hopf_red.floquet,
                             thetas=(0.0, 2.0))
    assert rep.max_phase_err[0] < 0.01 * 1e-4
    assert 1.5 <= rep.phase_exponent <= 2.5
    assert rep.max_psi_err[0] < 0.02 * 1e-4
    assert np.all(np.diff(rep.max_phase_err) > 0)


def test_compare_zero_input_degenerate(hopf_red):
    rep = compare_reductions(hopf_red.field, hopf_red.orbit, hopf_red.prc, hopf_red.irc, hopf_red.floquet,
                             magnitudes=(0.0,))
    assert rep.max_phase_err[0] == 0.0 and rep.max_psi_err[0] == 0.0
