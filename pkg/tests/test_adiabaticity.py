import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ionengine.adiabaticity import (FrequencyRamp, load_ramp, make_ramp,
                                    qstar, qstar_for_ramp, solve_fundamental)


def test_sudden_ramp_identity_solution():
    sol = solve_fundamental(make_ramp("sudden", 1.0, 2.0, 0.0))
    assert (sol.x, sol.xdot, sol.y, sol.ydot) == (1.0, 0.0, 0.0, 1.0)


def test_sudden_factor_exact():
    sol = solve_fundamental(make_ramp("sudden", 1.0, 2.0, 0.0))
    assert abs(qstar(sol, 1.0, 2.0) - 1.25) <= 1e-12


def test_constant_frequency_analytic_solution():
    w, T = 1.3, 7.0
    sol = solve_fundamental(make_ramp("linear", w, w, T))
    assert sol.x == pytest.approx(math.cos(w * T), rel=1e-6, abs=1e-9)
    assert sol.xdot == pytest.approx(-w * math.sin(w * T), rel=1e-6, abs=1e-9)
    assert qstar(sol, w, w) == pytest.approx(1.0, abs=1e-9)


def test_slow_linear_ramp_is_adiabatic():
    ws = []
    sol = solve_fundamental(make_ramp("linear", 1.0, 2.0, 500.0),
                            wronskian_samples=ws)
    assert abs(qstar(sol, 1.0, 2.0) - 1.0) <= 1e-3
    assert max(abs(e) for _, e in ws) <= 1e-9


def test_wronskian_conserved_along_trajectory():
    ws = []
    solve_fundamental(make_ramp("linear", 1.0, 2.0, 200.0),
                      wronskian_samples=ws)
    assert len(ws) > 10
    assert max(abs(e) for _, e in ws) <= 1e-9


def test_convergence_under_dt_halving():
    ramp = make_ramp("linear", 1.0, 2.0, 30.0)
    dt = 2.0 * math.pi / 2.0 / 100.0
    q1 = qstar(solve_fundamental(ramp, dt=dt), 1.0, 2.0)
    q2 = qstar(solve_fundamental(ramp, dt=dt / 2), 1.0, 2.0)
    assert abs(q2 - q1) / q1 <= 1e-6


def test_limit_interpolation_sudden_to_adiabatic():
    durations = [0.01, 0.1, 1.0, 5.0, 20.0, 100.0, 500.0]
    qs = [qstar_for_ramp(make_ramp("linear", 1.0, 2.0, d)) for d in durations]
    assert qs[0] == pytest.approx(1.25, abs=5e-3)
    assert abs(qs[-1] - 1.0) <= 1e-3
    running_max = qs[0]
    for q in qs[1:]:
        assert q <= running_max * (1.0 + 1e-9)
        running_max = max(running_max, q)


def test_step_size_guard():
    ramp = make_ramp("linear", 1.0, 2.0, 10.0)
    with pytest.raises(ValueError):
        solve_fundamental(ramp, dt=2.0 * math.pi / 2.0 / 10.0)


def test_make_ramp_linear_midpoint():
    ramp = make_ramp("linear", 1.0, 2.0, 10.0)
    assert ramp.omega(5.0) == pytest.approx(1.5)
    assert ramp.omega(0.0) == 1.0
    assert ramp.omega(10.0) == 2.0


def test_make_ramp_validation():
    with pytest.raises(ValueError):
        make_ramp("sudden", 1.0, 2.0, 1.0)      # sudden needs zero duration
    with pytest.raises(ValueError):
        make_ramp("linear", 1.0, 2.0, 0.0)
    with pytest.raises(ValueError):
        make_ramp("nope", 1.0, 2.0, 1.0)
    with pytest.raises(ValueError):
        make_ramp("tabulated", 1.0, 2.0, 1.0,
                  samples=[[0.5, 1.0], [1.0, 2.0]])  # does not bracket 0
    with pytest.raises(ValueError):
        FrequencyRamp("linear", -1.0, 2.0, 1.0)


def test_tabulated_tanh_profile_endpoints():
    ts = np.linspace(0.0, 40.0, 400)
    ws = 1.5 + 0.5 * np.tanh((ts - 20.0) / 5.0)
    ramp = make_ramp("tabulated", 1.0, 2.0, 40.0, np.column_stack([ts, ws]))
    assert ramp.omega(0.0) == pytest.approx(1.0, rel=1e-12)
    assert ramp.omega(40.0) == pytest.approx(2.0, rel=1e-12)
    assert qstar_for_ramp(ramp) >= 1.0 - 1e-9


def test_load_ramp_roundtrip(tmp_path):
    ts = np.linspace(0.0, 3.0, 50)
    ws = 1.0 + ts / 3.0
    path = tmp_path / "ramp.txt"
    np.savetxt(path, np.column_stack([ts, ws]))
    ramp = load_ramp(path)
    assert ramp.kind == "tabulated"
    assert ramp.duration == pytest.approx(3.0)
    assert ramp.omega(1.5) == pytest.approx(1.5, rel=1e-9)


@settings(max_examples=25, derandomize=True, deadline=None)
@given(omega_f=st.floats(1.1, 3.0), duration=st.floats(0.05, 60.0))
def test_factor_never_below_one_linear(omega_f, duration):
    q = qstar_for_ramp(make_ramp("linear", 1.0, omega_f, duration))
    assert q >= 1.0 - 1e-9


@settings(max_examples=15, derandomize=True, deadline=None)
@given(omega_f=st.floats(1.1, 2.5), duration=st.floats(1.0, 30.0),
       steep=st.floats(2.0, 10.0))
def test_factor_never_below_one_tabulated(omega_f, duration, steep):
    ts = np.linspace(0.0, duration, 300)
    shape = np.tanh(steep * (ts / duration - 0.5))
    ws = 1.0 + (shape - shape[0]) / (shape[-1] - shape[0]) * (omega_f - 1.0)
    ramp = make_ramp("tabulated", 1.0, omega_f, duration,
                     np.column_stack([ts, ws]))
    assert qstar_for_ramp(ramp) >= 1.0 - 1e-9
