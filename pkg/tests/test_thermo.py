import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ionengine import thermo
from ionengine.thermo import (ADIABATIC, AdiabaticityPair, CycleParams,
                              NotAnEngine, StrokeDurations, coth,
                              sudden_adiabaticity)
from ionengine.units import NATURAL, UnitSystem

# Frozen against a 40-digit arbitrary-precision evaluation.
COTH_1 = 1.3130352854993313036
EA_BETA2 = 0.65651764274966565182        # equals the Fock partition sum, n<=200
W1_REF = 0.50004540199100968777
Q2HOT_REF = 0.3129444815173119281
Q1_MAX_REF = 1.3129160674923457794
Q2_MIN_REF = 0.76166331173780835688


def test_coth_matches_reference():
    assert coth(1.0) == pytest.approx(COTH_1, rel=1e-15)
    assert coth(5.0) == pytest.approx(1.0000908039820193, rel=1e-15)


def test_coth_limits_and_errors():
    assert coth(400.0) == 1.0
    assert coth(1e-8) == pytest.approx(1e8, rel=1e-9)
    for bad in (0.0, -1.0, math.nan, math.inf):
        with pytest.raises(ValueError):
            coth(bad)


def test_ground_state_limit():
    # Zero temperature: every corner at the ground-state energy omega/2.
    p = CycleParams(1.0, 1.0, 1e6, 1e6)
    e = thermo.stage_energies(p, ADIABATIC)
    for v in (e.eA, e.eB, e.eC, e.eD):
        assert v == pytest.approx(0.5, rel=1e-12)


def test_classical_limit_energy():
    # High temperature: mean energy kB*T = 1/beta within 0.01%.
    p = CycleParams(1.0, 1.0, 0.01, 0.01)
    e = thermo.stage_energies(p)
    assert e.eA == pytest.approx(100.0, rel=1e-4)
    assert e.eA == pytest.approx(100.00083333194444775, rel=1e-12)


def test_energy_against_fock_partition_sum():
    p = CycleParams(1.0, 1.0, 2.0, 2.0)
    e = thermo.stage_energies(p)
    assert e.eA == pytest.approx(EA_BETA2, rel=1e-14)


def test_degenerate_cycle_vanishes():
    p = CycleParams(1.0, 1.0, 1.0, 1.0)
    r = thermo.stroke_quantities(p, ADIABATIC)
    assert r.w1 == r.w3 == r.q2hot == r.q4cold == 0.0


def test_stroke_quantities_reference_values():
    p = CycleParams(1.0, 2.0, 10.0, 1.0)
    r = thermo.stroke_quantities(p, ADIABATIC)
    assert r.w1 == pytest.approx(W1_REF, rel=1e-14)
    assert r.q2hot == pytest.approx(Q2HOT_REF, rel=1e-14)
    assert r.w1 + r.w3 + r.q2hot + r.q4cold == pytest.approx(0.0, abs=1e-18)


def test_sudden_switch_signs():
    p = CycleParams(1.0, 2.0, 10.0, 1.0)
    q = sudden_adiabaticity(1.0, 2.0)
    assert q == 1.25
    pair = AdiabaticityPair(q, q)
    r = thermo.stroke_quantities(p, pair)
    q1_max, q2_min = thermo.engine_window(p)
    assert (q <= q1_max) == (r.q2hot >= 0.0)
    assert (q >= q2_min) == (r.q4cold <= 0.0)


def test_engine_window_reference():
    p = CycleParams(1.0, 2.0, 10.0, 1.0)
    q1_max, q2_min = thermo.engine_window(p)
    assert q1_max == pytest.approx(Q1_MAX_REF, rel=1e-14)
    assert q2_min == pytest.approx(Q2_MIN_REF, rel=1e-14)


def test_symmetric_window_is_a_point():
    p = CycleParams(1.0, 1.0, 2.0, 2.0)
    q1_max, q2_min = thermo.engine_window(p)
    assert q1_max == q2_min == 1.0


def test_adiabatic_engine_regime_signs():
    p = CycleParams(1.0, 2.0, 10.0, 1.0)
    assert thermo.is_engine(p, ADIABATIC)
    r = thermo.stroke_quantities(p, ADIABATIC)
    assert r.q2hot > 0.0 and r.q4cold < 0.0
    assert r.eta == pytest.approx(0.5, abs=1e-15)


def test_efficiency_consistency_with_strokes():
    p = CycleParams(1.0, 2.0, 10.0, 1.0)
    pair = AdiabaticityPair(1.25, 1.25)
    r = thermo.stroke_quantities(p, pair)
    eta = thermo.efficiency(p, pair)
    assert eta == pytest.approx(-(r.w1 + r.w3) / r.q2hot, rel=1e-12)


def test_curzon_ahlborn_bar_level():
    # Quasistatic strokes at frequency ratio 1.5 cap the efficiency at 1/3.
    p = CycleParams(1.0, 1.5, 10.0, 1.0)
    assert thermo.efficiency(p, ADIABATIC) == pytest.approx(1.0 / 3.0, rel=1e-12)


def test_not_an_engine_raises():
    p = CycleParams(1.0, 2.0, 10.0, 1.0)
    with pytest.raises(NotAnEngine):
        thermo.efficiency(p, AdiabaticityPair(2.0, 1.0))


def test_power():
    r = thermo.CycleResult(w1=-0.4, w3=-0.6, q2hot=2.0, q4cold=-1.0, eta=0.5)
    d = StrokeDurations(0.25, 0.25, 0.25, 0.25)
    assert thermo.power(r, d) == pytest.approx(1.0)
    zero = thermo.CycleResult(w1=0.0, w3=0.0, q2hot=0.0, q4cold=0.0, eta=None)
    assert thermo.power(zero, d) == 0.0
    with pytest.raises(ValueError):
        thermo.power(r, StrokeDurations(0, 0, 0, 0))


def test_power_paper_scale():
    # Net work ~1e-25 J over ~10 us gives ~1e-20 W.
    r = thermo.CycleResult(w1=-0.5e-25, w3=-0.5e-25, q2hot=3e-25,
                           q4cold=-2e-25, eta=None)
    d = StrokeDurations(2.5e-6, 2.5e-6, 2.5e-6, 2.5e-6)
    assert thermo.power(r, d) == pytest.approx(1e-20, rel=1e-12)


def test_validation_rejects_bad_params():
    for bad in (0.0, -1.0, math.inf, math.nan):
        with pytest.raises(ValueError):
            CycleParams(bad, 1.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            CycleParams(1.0, 1.0, bad, 1.0)
    with pytest.raises(ValueError):
        AdiabaticityPair(0.99, 1.0)
    with pytest.raises(ValueError):
        UnitSystem(0.0, 1.0)


engine_params = st.builds(
    CycleParams,
    omega1=st.floats(0.2, 5.0),
    omega2=st.floats(0.2, 5.0),
    beta1=st.floats(0.05, 20.0),
    beta2=st.floats(0.05, 20.0),
)


@settings(max_examples=150, derandomize=True, deadline=None)
@given(p=engine_params,
       q1=st.floats(1.0, 3.0), q2=st.floats(1.0, 3.0))
def test_first_law_closure(p, q1, q2):
    r = thermo.stroke_quantities(p, AdiabaticityPair(q1, q2))
    terms = (r.w1, r.w3, r.q2hot, r.q4cold)
    scale = max(abs(t) for t in terms) or 1.0
    assert abs(sum(terms)) <= 10 * np.finfo(float).eps * scale


@settings(max_examples=150, derandomize=True, deadline=None)
@given(p=engine_params, q1=st.floats(1.0, 3.0), q2=st.floats(1.0, 3.0))
def test_engine_window_equivalence(p, q1, q2):
    pair = AdiabaticityPair(q1, q2)
    r = thermo.stroke_quantities(p, pair)
    assert thermo.is_engine(p, pair) == (r.q2hot >= 0.0 and r.q4cold <= 0.0)


@settings(max_examples=100, derandomize=True, deadline=None)
@given(omega2=st.floats(1.01, 8.0), beta1=st.floats(0.5, 30.0),
       ratio=st.floats(0.05, 0.95))
def test_adiabatic_efficiency_identity(omega2, beta1, ratio):
    p = CycleParams(1.0, omega2, beta1, ratio * beta1)
    q1_max, _ = thermo.engine_window(p)
    if q1_max <= 1.0 + 1e-12:
        return  # boundary point: both coth factors saturate, no heat flows
    assert abs(thermo.efficiency(p, ADIABATIC) - (1.0 - 1.0 / omega2)) <= 1e-12


@settings(max_examples=60, derandomize=True, deadline=None)
@given(omega2=st.floats(1.2, 4.0), beta1=st.floats(1.0, 10.0),
       ratio=st.floats(0.1, 0.6))
def test_efficiency_decreases_with_nonadiabaticity(omega2, beta1, ratio):
    p = CycleParams(1.0, omega2, beta1, ratio * beta1)
    q1_max, q2_min = thermo.engine_window(p)
    if q1_max < 1.02:
        return
    q1_in = min(1.01, 0.5 * (1.0 + q1_max))
    h = min(0.005, 0.2 * (q1_max - q1_in))
    base = thermo.efficiency(p, AdiabaticityPair(q1_in, 1.0))
    assert thermo.efficiency(p, AdiabaticityPair(q1_in + h, 1.0)) < base
    assert thermo.efficiency(p, AdiabaticityPair(q1_in, 1.0 + h)) < base


@settings(max_examples=60, derandomize=True, deadline=None)
@given(omega2=st.floats(1.2, 6.0), beta1=st.floats(0.5, 5.0),
       ratio=st.floats(0.1, 0.9))
def test_classical_limit_matches_highT_formula(omega2, beta1, ratio):
    from ionengine import optimizer
    tiny = UnitSystem(hbar=1e-8, kB=1.0)
    p = CycleParams(1.0, omega2, beta1, ratio * beta1, units=tiny)
    r = thermo.stroke_quantities(p, ADIABATIC)
    w_formula = optimizer.total_work_highT(p, "adiabatic")
    assert r.w1 + r.w3 == pytest.approx(w_formula, rel=1e-6)
    q = sudden_adiabaticity(1.0, omega2)
    r_ss = thermo.stroke_quantities(p, AdiabaticityPair(q, q))
    w_ss = optimizer.total_work_highT(p, "sudden")
    assert r_ss.w1 + r_ss.w3 == pytest.approx(w_ss, rel=1e-6)
