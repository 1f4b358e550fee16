from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import compatible_loop_b_data
from pdeloopgain.kernels import Kernel
from pdeloopgain.model import DisturbanceSignal, LoopAParams, LoopBParams, WaveKVParams
from pdeloopgain.solvers import Grid, simulate_loop_a
from pdeloopgain.verify import (
    check_iss_bound,
    check_parabolic_bound,
    delay_independence_sweep,
    fit_decay,
    magnification_probe,
    running_sup,
    sharpness_mode,
    sharpness_probe,
    verify_loop_a,
)

PI2 = math.pi ** 2

# least-squares slope of log(2 e^-t + e^-5t) on 401 samples of [1, 5], from the
# normal equations (see test_fit_two_mode_oracle); frozen
TWO_MODE_RATE = 1.0007608965616264


def test_fit_exact_exponential():
    t = np.linspace(0, 5, 501)
    fit = fit_decay((t, np.exp(-2 * t)))
    assert fit.delta_hat == pytest.approx(2.0, abs=1e-6)
    assert fit.M_hat == pytest.approx(1.0, abs=1e-12)


def test_fit_constant_norm():
    t = np.linspace(0, 5, 501)
    fit = fit_decay((t, np.full_like(t, 3.0)))
    assert fit.delta_hat == pytest.approx(0.0, abs=1e-9)
    assert fit.M_hat == 1.0


def test_fit_two_mode_oracle():
    t = np.linspace(1, 5, 401)
    y = np.log(2 * np.exp(-t) + np.exp(-5 * t))
    tm, ym = t.mean(), y.mean()
    slope = np.sum((t - tm) * (y - ym)) / np.sum((t - tm) ** 2)
    assert -slope == pytest.approx(TWO_MODE_RATE, rel=1e-12)
    fit = fit_decay((t, np.exp(y)), window=(1.0, 5.0))
    assert fit.delta_hat == pytest.approx(TWO_MODE_RATE, rel=1e-10)
    # the fast mode only steepens the fit: the rate sits just above the slow mode
    assert 1.0 < fit.delta_hat < 1.001


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 5.0), st.floats(0.5, 3.0), st.floats(0.0, 2.0), st.floats(0.5, 8.0))
def test_fit_envelope_invariant(rate, amp, wobble, freq):
    t = np.linspace(0, 6, 301)
    y = amp * np.exp(-rate * t) * (1 + 0.5 * wobble * np.sin(freq * t) ** 2)
    fit = fit_decay((t, y))
    assert np.all(y <= fit.envelope(t, y[0]) * (1 + 1e-12))
    assert fit.M_hat >= 1.0


def test_fit_reports_growth_honestly():
    t = np.linspace(0, 2, 201)
    assert fit_decay((t, np.exp(0.5 * t)), envelope="none").delta_hat == pytest.approx(-0.5)


def test_fit_needs_samples():
    with pytest.raises(ValueError):
        fit_decay((np.linspace(0, 1, 10), np.ones(10)))


def test_running_sup():
    d = DisturbanceSignal("sinusoid", 2.0, math.pi)
    t = np.array([0.0, 0.25, 0.5, 1.0, 3.0])
    rs = running_sup(d, t, per_interval=200)
    np.testing.assert_allclose(rs, [0.0, 2 * math.sin(math.pi / 4), 2.0, 2.0, 2.0], rtol=1e-12)
    assert np.all(running_sup(None, t) == 0)


def test_iss_bound_trivial_on_zero_data():
    traj = simulate_loop_a(LoopAParams(1, 1, 1, 1), lambda z: 0 * z, None, None, Grid(11, 0.1, 1.0, 4))
    t = np.linspace(0, 1, 50)
    rep = check_iss_bound(traj, fit_decay((t, np.exp(-t))))
    assert rep.ok and rep.count == 0 and rep.max_excess == 0.0


def test_iss_bound_detects_violation():
    params = LoopAParams(2.0, 1.5, 3.0, 2.0)
    traj = simulate_loop_a(params, lambda z: np.sin(np.pi * z), None, None, Grid(51, 1e-2, 2.0, 16))
    t = traj.times
    too_fast = fit_decay((t, np.exp(-20 * t)))
    rep = check_iss_bound(traj, too_fast)
    assert rep.count > 0 and not rep.ok


def test_loop_a_soundness_with_sinusoid():
    params = LoopAParams(2.0, 1.5, 3.0, 2.0)
    d = DisturbanceSignal("sinusoid", 0.5, 2 * math.pi)
    rep = verify_loop_a(params, lambda z: np.sin(np.pi * z), lambda z: 0.3 * np.sin(2 * np.pi * z), d,
                        Grid(101, 1e-2, 10.0, 32))
    assert rep.certificate.passed and rep.fit.delta_hat > 0
    assert rep.iss.count == 0 and rep.weighted.count == 0
    assert rep.ok
    assert rep.to_json()["bound_violations"]["count"] == 0


def test_parabolic_bound_pure_heat():
    params = LoopAParams(1.0, 0.0, 0.0, 1.0)
    d = DisturbanceSignal("sinusoid", 0.1, 2 * math.pi)
    traj = simulate_loop_a(params, lambda z: np.sin(np.pi * z), None, d, Grid(101, 1e-3, 2.0, 32))
    for theta in (0.3, math.pi / 4, 1.2):
        assert check_parabolic_bound(traj, params, theta, d).count == 0


def test_sharpness_mode_algebra():
    at_edge = LoopAParams(1.0, 1.0, 1.0 + PI2, 1.0)
    m = sharpness_mode(at_edge)
    assert m.mu == 0.0
    above = LoopAParams(1.0, 1.0, 1.0 + PI2 + 1.0, 1.0)
    m2 = sharpness_mode(above)
    # quadratic-formula oracle: mu^2 + (pi^2 + K + b) mu + b (pi^2 + K - r a) = 0
    B, C = PI2 + 1.0 + 1.0, 1.0 * (PI2 + 1.0 - (PI2 + 2.0))
    assert m2.mu == pytest.approx((-B + math.sqrt(B * B - 4 * C)) / 2, rel=1e-12)
    assert abs(m2.dispersion_residual(above)) <= 1e-12
    with pytest.raises(ValueError):
        sharpness_mode(LoopAParams(1.0, 1.0, 1.0, 1.0))


def test_sharpness_probe_stationary_at_edge():
    rep = sharpness_probe(LoopAParams(1.0, 1.0, 1.0 + PI2, 1.0))
    assert rep.max_rel_deviation <= 0.01


def test_delay_sweep_zero_kernel_rate():
    params = LoopBParams(1.0, 1.0, 0.0, 0.0, 0.5)
    rep = delay_independence_sweep(params, [0.5, 2.0], grid=Grid(51, 1e-2, 4.0, 16), which="u1")
    for row in rep.rows:
        assert row.fit.delta_hat == pytest.approx((math.pi / 2) ** 2, rel=1e-6)
    assert rep.all_decay and not rep.falsified


def test_delay_sweep_certified_instance():
    params = LoopBParams(1.0, 1.0, -0.5, -0.5, 0.5, Kernel.expr("one", 0.5))
    u1_0, u2_0 = compatible_loop_b_data(params)
    rep = delay_independence_sweep(params, [0.5, 2.0], grid=Grid(51, 1e-2, 6.0, 16), u1_0=u1_0, u2_0=u2_0)
    assert rep.certificate.passed and rep.all_decay


def test_magnification_quasi_static():
    wp = WaveKVParams(1.0, 1.0, 1.0)  # mu sigma = c^2, so s = 0 and g = 1
    d = DisturbanceSignal("sinusoid", 1.0, 0.5)
    rep = magnification_probe(wp, d, 4 * math.pi / 0.5, dt=1e-2, n_z=51, modes=16)
    assert 1.0 - 1e-3 <= rep.empirical_gain <= 1.2
    assert rep.empirical_gain <= rep.gamma_bound
    assert magnification_probe(wp, DisturbanceSignal(), 1.0).empirical_gain == 0.0
    with pytest.raises(ValueError):
        magnification_probe(WaveKVParams(0.1, 3.0, 0.0), d, 1.0)
