import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from flowrecon.errors import ConfigError, DomainError, StabilityError
from flowrecon.flow import (G_BASE, RANGES, FlowParams, SolverConfig, WindkesselState, inlet_profile_f,
                            inlet_profile_g, logit_normal_mode, sample_manifold, solve_steady,
                            solve_unsteady, windkessel_step)

FAST = SolverConfig(dt=4e-3, n_cycles=1, n_save=10)


# -- inflow waveform and profile -----------------------------------------------------

def test_g_starts_at_baseline():
    assert inlet_profile_g(0.0, 70.0, 0.3) == pytest.approx(G_BASE, abs=1e-14)


@given(t=st.floats(0, 5), HR=st.floats(48, 120), T_sys=st.floats(0.2863, 0.3182))
def test_g_periodic(t, HR, T_sys):
    a = inlet_profile_g(t, HR, T_sys)
    b = inlet_profile_g(t + 60.0 / HR, HR, T_sys)
    assert a == pytest.approx(b, abs=1e-9)
    assert G_BASE - 1e-12 <= a <= 1.0 + 1e-12


@pytest.mark.parametrize("HR", [48.0, 75.0, 120.0])
def test_g_peak_in_systole(HR):
    T_sys = 0.3
    t = np.linspace(0, 60 / HR, 10_000, endpoint=False)
    g = inlet_profile_g(t, HR, T_sys)
    tp = t[np.argmax(g)]
    assert 0 < tp < T_sys
    assert g.max() == pytest.approx(1.0, abs=1e-6)


def test_g_rejects_long_systole():
    with pytest.raises(DomainError):
        inlet_profile_g(0.1, 120.0, 0.6)


def test_f_symmetric_peak_at_half():
    assert inlet_profile_f(0.5, 0.0) == pytest.approx(1.0, abs=1e-14)
    xi = np.linspace(0.01, 0.99, 99)
    np.testing.assert_allclose(inlet_profile_f(xi, 0.0), inlet_profile_f(1 - xi, 0.0), rtol=1e-12)


def test_f_mode_shifts_with_s():
    xi = np.linspace(1e-4, 1 - 1e-4, 200_001)
    am = xi[np.argmax(inlet_profile_f(xi, 0.2))]
    assert am > 0.5
    assert am == pytest.approx(logit_normal_mode(0.2), abs=1e-4)


@pytest.mark.parametrize("xi", [0.0, 1.0, -0.1, 1.2, np.nan])
def test_f_domain(xi):
    with pytest.raises(DomainError):
        inlet_profile_f(xi, 0.1)


# -- Windkessel -----------------------------------------------------------------

def test_windkessel_literal_form_zero_flux():
    P, C, dt = 1.0e5, 0.5, 1e-3
    st0 = WindkesselState(np.array([P, P]), C, 100.0, 1.0)
    new, _ = windkessel_step(st0, np.zeros(2), dt, form="literal")
    np.testing.assert_allclose(new.p_d, P * (1 - dt / C), rtol=1e-14)
    # with R_d = 1 both forms coincide
    new2, _ = windkessel_step(st0, np.zeros(2), dt, form="consistent")
    np.testing.assert_allclose(new2.p_d, new.p_d, rtol=1e-14)


def test_windkessel_literal_form_unstable_with_default_constants():
    wk = SolverConfig().windkessel(1.0)
    with pytest.raises(StabilityError):
        windkessel_step(wk, np.zeros(2), 2e-3, form="literal")


def test_windkessel_fixed_point():
    wk = SolverConfig().windkessel(1.0)
    q = np.array([3.0, 5.0])
    C, Rd = np.asarray(wk.C_d, float), np.asarray(wk.R_d, float)
    for _ in range(20_000):
        wk, _ = windkessel_step(wk, q, 2e-3)
    resid = wk.p_d / Rd - q           # C dp/dt = q - p/R_d vanishes at equilibrium
    assert np.all(np.abs(resid) / q < 1e-8)


def test_windkessel_zero_rp():
    wk = WindkesselState(np.array([1.0, 2.0]), 1.6e-5, 0.0, 60012.0)
    new, p = windkessel_step(wk, np.array([0.3, 0.4]), 1e-3)
    np.testing.assert_array_equal(p, new.p_d)


def _wk_run(q, dt=2e-3, n=500):
    wk = SolverConfig().windkessel(0.8)
    traj = [np.asarray(wk.p_d, float)]
    p = wk
    for k in range(n):
        p, _ = windkessel_step(p, q(k * dt), dt)
        traj.append(p.p_d)
    return wk, np.array(traj)


def windkessel_oracle(wk, q, dt=2e-3, n=500, hold=True):
    """RK45 reference; with ``hold`` the flux is the step-wise constant signal the update sees."""
    C, Rd = np.asarray(wk.C_d, float), np.asarray(wk.R_d, float)
    qq = (lambda t: q(min(math.floor(t / dt + 1e-9), n - 1) * dt)) if hold else q
    ts = np.arange(n + 1) * dt
    ref = solve_ivp(lambda t, y: (qq(t) - y / Rd) / C, (0, n * dt), np.asarray(wk.p_d, float),
                    method="RK45", rtol=1e-11, atol=1e-8, t_eval=ts, max_step=dt / 4)
    return ref.y.T


def pulsatile_flux(t):
    return np.array([4.0, 3.0]) * inlet_profile_g(t, 75.0, 0.3)


def test_windkessel_matches_ode_oracle():
    wk, traj = _wk_run(pulsatile_flux)
    ref = windkessel_oracle(wk, pulsatile_flux)
    assert np.max(np.abs(traj - ref) / np.abs(ref)) <= 1e-3


def test_windkessel_smooth_input_first_order():
    # against the continuous input the gap is input sampling, O(dt |dQ| / C)
    errs = []
    for dt, n in ((2e-3, 500), (1e-3, 1000)):
        wk = SolverConfig().windkessel(0.8)
        p = wk
        for k in range(n):
            p, _ = windkessel_step(p, pulsatile_flux(k * dt), dt)
        ref = windkessel_oracle(wk, pulsatile_flux, dt, n, hold=False)[-1]
        errs.append(np.max(np.abs(p.p_d - ref) / ref))
    assert errs[0] < 2e-3
    assert errs[1] == pytest.approx(errs[0] / 2, rel=0.1)


def test_windkessel_rejects_bad_dt():
    wk = SolverConfig().windkessel(1.0)
    with pytest.raises(ConfigError):
        windkessel_step(wk, np.zeros(2), 0.0)
    with pytest.raises(ConfigError):
        windkessel_step(wk, np.zeros(2), 1e-3, form="other")


# -- forward solver ---------------------------------------------------------------

@pytest.fixture(scope="module")
def run(small):
    y = FlowParams(HR=90.0, s=0.1, T_sys=0.3, u0=18.0, eta=0.7)
    return y, solve_unsteady(y, small, dt=FAST.dt, n_cycles=1, n_save=10, config=FAST)


def test_snapshot_bookkeeping(run):
    y, snaps = run
    assert len(snaps) == 10
    t = np.array([s.y.t for s in snaps])
    np.testing.assert_allclose(t, np.arange(10) * y.period / 10, atol=1e-12)


def test_mass_balance_every_snapshot(run, small):
    L = small.layout
    for s in run[1]:
        qin = L.inlet_flux(s.u)
        qout = L.outlet_flux(s.u).sum()
        assert abs(qin + qout) <= 1e-6 * abs(qin)
        assert s.div_norm < 1e-8


def test_no_slip_and_finite(run, small):
    from flowrecon.mac import WALL
    L = small.layout
    wall = L.faces_of(WALL)
    for s in run[1]:
        assert np.all(np.isfinite(s.u)) and np.all(np.isfinite(s.p))
        assert np.all(s.u[wall] == 0)


def test_zero_forcing_gives_rest(small):
    y = FlowParams(HR=90.0, u0=0.0)
    snaps = solve_unsteady(y, small, dt=FAST.dt, n_cycles=1, n_save=5, config=FAST)
    for s in snaps:
        assert np.abs(s.u).max() <= 1e-10
        assert np.ptp(s.p) <= 1e-8 * np.abs(s.p).max()


def test_symmetric_outlets(channel):
    y = FlowParams(HR=100.0, s=0.0, u0=18.0, eta=1.0)
    snaps = solve_unsteady(y, channel, dt=FAST.dt, n_cycles=1, n_save=5, config=FAST)
    for s in snaps:
        q = channel.layout.outlet_flux(s.u)
        assert abs(q[0] - q[1]) <= 1e-6 * abs(q).max()


def test_cfl_guard(small):
    with pytest.raises(StabilityError):
        solve_unsteady(FlowParams(u0=20.0), small, dt=0.05, n_cycles=1, n_save=5,
                       config=SolverConfig(dt=0.05, n_cycles=1, n_save=5))


def test_steady_solution_is_divergence_free(small):
    u, p, its = solve_steady(small, u0=5.0)
    assert its < 300
    assert np.linalg.norm(small.layout.div @ u) < 1e-9


def test_sample_manifold_deterministic(small):
    a = sample_manifold(None, 1, 99, small, FAST)
    b = sample_manifold(None, 1, 99, small, FAST)
    assert len(a) == 10 == len(b)
    for x, y in zip(a.snapshots, b.snapshots):
        assert np.array_equal(x.u, y.u) and np.array_equal(x.p, y.p) and x.y == y.y
    assert a.provenance == b.provenance


def test_sample_manifold_parameters_in_range(small):
    m = sample_manifold(None, 2, 5, small, FAST)
    assert len(m) == 2 * 10
    for s in m.snapshots:
        s.y.check()
    tab = m.parameter_table
    for k, name in enumerate(("t", "HR", "s", "T_sys", "u0", "eta")):
        if name in RANGES:
            lo, hi = RANGES[name]
            assert np.all((tab[:, k] >= lo) & (tab[:, k] <= hi))


def test_sample_manifold_count_validated(small):
    with pytest.raises(ConfigError):
        sample_manifold(None, 0, 1, small, FAST)


def test_flow_params_check():
    with pytest.raises(ConfigError):
        FlowParams(HR=200.0).check()
    with pytest.raises(ConfigError):
        FlowParams(mu=-1.0).check()
    FlowParams().check()
