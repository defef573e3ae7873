import math
from dataclasses import replace

import numpy as np
import pytest

from ionengine import engine, thermo, trap
from ionengine.engine import (Ensemble, EnsembleConfig, NoSteadyState,
                              RunRecord, init_ensemble, measure_performance,
                              radial_temperature, run_engine, run_self_driven)
from ionengine.units import HBAR_SI, KB_SI

from conftest import paper_beams


@pytest.fixture(scope="module")
def geo():
    return trap.default_geometry()


def small_cfg(geo, beams, diss, **kw):
    base = dict(geometry=geo, beams=beams, dissipation=diss,
                n_trajectories=400, seed=7, cycles=40,
                init_temperature=0.045, seed_amplitude=3.2e-4,
                measure_cycles=10, threads=1)
    base.update(kw)
    return EnsembleConfig(**base)


def test_init_ensemble_zero_temperature(geo):
    ens = init_ensemble(0.0, geo, 128, seed=1)
    assert not ens.pos.any() and not ens.vel.any()


def test_init_ensemble_variance(geo):
    T = 0.1
    ens = init_ensemble(T, geo, 5000, seed=2)
    var_expect = KB_SI * T / (geo.mass * geo.omega0x ** 2)
    var = ens.pos[:, 0].var()
    sigma = var_expect * math.sqrt(2.0 / 5000)
    assert abs(var - var_expect) <= 3 * sigma
    vv = ens.vel.var(axis=0)
    vv_expect = KB_SI * T / geo.mass
    assert np.all(np.abs(vv - vv_expect) <= 3 * vv_expect * math.sqrt(2.0 / 5000))


def test_init_ensemble_deterministic(geo):
    a = init_ensemble(0.05, geo, 1500, seed=42)
    b = init_ensemble(0.05, geo, 1500, seed=42)
    assert np.array_equal(a.pos, b.pos) and np.array_equal(a.vel, b.vel)
    c = init_ensemble(0.05, geo, 1500, seed=43)
    assert not np.array_equal(a.pos, c.pos)


def test_radial_temperature_round_trip(geo):
    T = 0.1
    ens = init_ensemble(T, geo, 5000, seed=3)
    reading = radial_temperature(ens, geo)
    assert abs(reading.temperature - T) <= 3 * reading.stderr
    with pytest.raises(ValueError):
        radial_temperature(Ensemble(np.empty((0, 3)), np.empty((0, 3))), geo)


def test_phonon_numbers_match_bath_temperatures(geo):
    # 20 mK and 200 mK at 6.0e6 rad/s bracket the expected ~440 and ~4400.
    for T, lo, hi in ((0.020, 350.0, 500.0), (0.200, 3500.0, 5000.0)):
        ens = init_ensemble(T, geo, 4000, seed=4)
        reading = radial_temperature(ens, geo)
        assert lo <= reading.phonon_number <= hi


def test_synthetic_record_matches_exact_efficiency(geo):
    # Corner energies laid down from the exact closed forms feed back the
    # exact efficiency through the measured-cycle pipeline.
    p = thermo.CycleParams(5.0e6, 7.3e6, 1.0 / (KB_SI * 0.033),
                           1.0 / (KB_SI * 0.062), units=__import__(
                               "ionengine.units", fromlist=["SI"]).SI)
    q = thermo.AdiabaticityPair(1.02, 1.03)
    e = thermo.stage_energies(p, q)
    rows = []
    for cycle in range(6):
        for ti, (w, en) in enumerate(((5.0e6, e.eA), (7.3e6, e.eB),
                                      (7.3e6, e.eC), (5.0e6, e.eD))):
            rows.append((cycle, ti, cycle * 1e-5, w, en))
    table = np.asarray(rows)
    per = engine._per_cycle_quantities(table, 0, 6)
    eta = float(per["eta"].mean())
    assert eta == pytest.approx(thermo.efficiency(p, q), rel=1e-12)


def test_engine_smoke_corner_ordering_and_loop(geo):
    beams, diss = paper_beams()
    rec = run_engine(small_cfg(geo, beams, diss))
    lo, hi = rec.measure_start, rec.measure_stop
    omega = {t: rec.corners(t, lo, hi)[1].mean() for t in "ABCD"}
    energy = {t: rec.corners(t, lo, hi)[2].mean() for t in "ABCD"}
    assert min(omega["B"], omega["C"]) > max(omega["A"], omega["D"])
    assert energy["C"] > energy["B"]
    assert energy["A"] < energy["D"]
    m = measure_performance(rec)
    assert 0.1 < m["eta"] < 0.5
    assert rec.alpha > 100.0
    assert rec.realized["T_cold"] > 0.02 and rec.realized["T_hot"] < 0.2


def test_engine_without_beams_has_no_cycle(geo):
    cfg = small_cfg(geo, [], None, seed_amplitude=0.0, cycles=20,
                    measure_cycles=8, init_temperature=0.1)
    rec = run_engine(cfg)
    lo, hi = rec.measure_start, rec.measure_stop
    # Signed loop area in the (omega, E) plane, per measured cycle.
    areas = []
    for c in range(lo, hi):
        rows = rec.corner_table[rec.corner_table[:, 0] == c]
        if rows.shape[0] != 4:
            continue
        byt = {int(r[1]): r for r in rows}
        w = [byt[t][3] for t in range(4)]
        e = [byt[t][4] for t in range(4)]
        area = 0.0
        for i in range(4):
            j = (i + 1) % 4
            area += w[i] * e[j] - w[j] * e[i]
        areas.append(0.5 * area)
    areas = np.asarray(areas)
    # Zero within error against the scale an actual engine loop would have
    # at these frequencies and energies.
    rows = rec.corner_table
    loop_scale = float(np.mean(rows[:, 3])) * float(np.mean(rows[:, 4]))
    assert abs(areas.mean()) <= 1e-4 * loop_scale
    # Axial amplitude stays at the thermal ensemble-mean level.
    sigma_z = math.sqrt(KB_SI * 0.1 / geo.mass) / geo.omega0z
    assert rec.amplitudes[-1] <= 5 * sigma_z / math.sqrt(400)


def test_engine_bit_determinism_same_seed(geo):
    beams, diss = paper_beams()
    cfg = small_cfg(geo, beams, diss, n_trajectories=256, cycles=18,
                    measure_cycles=6)
    r1 = run_engine(cfg)
    r2 = run_engine(small_cfg(geo, beams, diss, n_trajectories=256, cycles=18,
                              measure_cycles=6))
    assert np.array_equal(r1.corner_table, r2.corner_table)
    assert np.array_equal(r1.axial_trace, r2.axial_trace)
    assert r1.measured == r2.measured


def test_engine_thread_count_invariance(geo):
    beams, diss = paper_beams()
    recs = []
    for threads in (1, 3):
        cfg = small_cfg(geo, beams, diss, n_trajectories=1100, cycles=16,
                        measure_cycles=5, threads=threads)
        recs.append(run_engine(cfg))
    assert np.array_equal(recs[0].corner_table, recs[1].corner_table)
    assert np.array_equal(recs[0].axial_trace, recs[1].axial_trace)
    assert recs[0].measured == recs[1].measured


def test_no_steady_state_raises(geo):
    # Strong damping on a small seed decays the amplitude by percents per
    # cycle, so it never satisfies the steadiness window within the budget.
    beams, diss = paper_beams(s_diss=10.0)
    cfg = small_cfg(geo, beams, diss, n_trajectories=800, cycles=12,
                    measure_cycles=5, seed_amplitude=1e-4)
    with pytest.raises(NoSteadyState):
        run_engine(cfg)


def test_gating_with_full_window_equals_always_on(geo):
    # A phase window covering the whole period is the same gate as none.
    from ionengine import reservoir as rsv
    gamma = rsv.GAMMA_CA40
    k = 2.0 * math.pi / rsv.WAVELENGTH_CA40
    full = rsv.GateSpec(kind="phase_window", window_fraction=1.0)
    variants = []
    for gate in (full, rsv.ALWAYS_ON):
        beams = [rsv.LaserBeam((1, 0, 0), k, -0.5 * gamma, gamma, 0.8,
                               "cool", gate)]
        cfg = small_cfg(geo, beams, None, n_trajectories=128, cycles=10,
                        measure_cycles=4, seed_amplitude=0.0,
                        init_temperature=0.08)
        variants.append(run_engine(cfg))
    assert np.array_equal(variants[0].axial_trace, variants[1].axial_trace)
    assert np.array_equal(variants[0].amplitudes, variants[1].amplitudes)


def test_self_driven_validation(geo):
    beams, diss = paper_beams()
    cfg = small_cfg(geo, beams, diss)
    with pytest.raises(ValueError):
        run_self_driven(cfg)          # wrong mode
    cfg2 = small_cfg(geo, beams, diss, mode="self_driven")
    with pytest.raises(ValueError):
        run_self_driven(cfg2)         # phase-gated beams in self-driven mode


def test_find_threshold_smoke(geo):
    from ionengine import reservoir as rsv
    gamma = rsv.GAMMA_CA40
    k = 2.0 * math.pi / rsv.WAVELENGTH_CA40
    hot = rsv.GateSpec(kind="spatial_focus", focus_z=-1e-4, waist=4e-5)
    cold = rsv.GateSpec(kind="spatial_focus", focus_z=1e-4, waist=4e-5)
    beams = [rsv.LaserBeam((1, 0, 0), k, 0.5 * gamma, gamma, 3.0, "heat", hot),
             rsv.LaserBeam((0, 1, 0), k, 0.5 * gamma, gamma, 3.0, "heat", hot),
             rsv.LaserBeam((1, 0, 0), k, -0.5 * gamma, gamma, 2.0, "cool", cold),
             rsv.LaserBeam((0, 1, 0), k, -0.5 * gamma, gamma, 2.0, "cool", cold)]
    diss = rsv.LaserBeam((0, 0, 1), k, -0.5 * gamma, gamma, 0.2, "dissipation")
    cfg = EnsembleConfig(geometry=geo, beams=beams, dissipation=diss,
                         mode="self_driven", n_trajectories=128, seed=5,
                         cycles=40, init_temperature=0.03,
                         seed_amplitude=1.3e-4, measure_cycles=8, threads=1)
    thr = engine.find_threshold(cfg, 2e-5, 1.3e-4, iters=2)
    assert 2e-5 <= thr <= 1.3e-4


def test_config_validation(geo):
    with pytest.raises(ValueError):
        EnsembleConfig(geometry=geo, mode="sideways")
    with pytest.raises(ValueError):
        EnsembleConfig(geometry=geo, cycles=5, measure_cycles=10)
    with pytest.raises(ValueError):
        EnsembleConfig(geometry=geo, n_trajectories=0)
    with pytest.warns(UserWarning):
        EnsembleConfig(geometry=geo, n_trajectories=50)
    with pytest.raises(ValueError):
        EnsembleConfig(geometry=geo, threads=0)


def test_measure_performance_needs_cycles(geo):
    rec = RunRecord(corner_table=np.zeros((0, 5)), axial_trace=np.zeros((0, 3)),
                    amplitudes=np.zeros(0), phase_histograms={},
                    steady_start=0, measure_start=0, measure_stop=0,
                    cycle_period=1e-5, alpha=0.0,
                    measured={"n_cycles": 2, "eta": 0.1, "eta_stderr": 0.0,
                              "power": 0.0, "power_stderr": 0.0},
                    realized={}, qeff={}, audit={})
    with pytest.raises(ValueError):
        measure_performance(rec)
