import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_config
from fracnls.config import ConfigError
from fracnls.evolution import (
    BoundaryContaminationError,
    InstabilityError,
    PhaseAccumulator,
    ScatteringSnapshot,
    SolverState,
    accumulate_phase,
    compute_profile,
    initial_state,
    iterate_simulation,
    ladder_times,
    phase_constant,
    run_simulation,
    scattering_snapshot,
    strang_step,
)
from fracnls.spectral_core import FractionalSymbol, Grid1D, SpectralField, half_wave_propagate


@pytest.fixture
def setup():
    g = Grid1D(16 * np.pi, 512)
    sym = FractionalSymbol(0.5, g)
    u0 = 0.2 * np.exp(-g.x**2 / 2) * np.exp(2j * g.x)
    return g, sym, initial_state(g, u0)


def advance(state, sym, c, dt, n):
    for _ in range(n):
        state = strang_step(state, sym, c, dt)
    return state


def test_linear_step_is_exact_propagator(setup):
    g, sym, st0 = setup
    out = strang_step(st0, sym, 0.0, 0.3)
    exact = half_wave_propagate(st0.u, sym, 0.3, sign=-1)
    assert np.max(np.abs(out.u.u_hat() - exact.frequency)) < 1e-14


def test_constant_field_only_feels_nonlinearity():
    g = Grid1D(8.0, 64)
    A, dt = 0.7, 0.25
    st0 = initial_state(g, np.full(g.N, A, dtype=complex))
    out = strang_step(st0, FractionalSymbol(0.5, g), 1.0, dt)
    assert np.allclose(out.u.u(), A * np.exp(-1j * A**2 * dt), atol=1e-14)


def test_step_rejects_nonpositive_dt(setup):
    g, sym, st0 = setup
    with pytest.raises(ValueError):
        strang_step(st0, sym, 1.0, 0.0)


def test_non_finite_values_are_reported(setup):
    g, sym, _ = setup
    u = np.ones(g.N, dtype=complex)
    u[3] = np.nan
    with pytest.raises(InstabilityError):
        strang_step(initial_state(g, u), sym, 1.0, 0.1)


def test_profile_at_time_zero(setup):
    g, sym, st0 = setup
    assert np.array_equal(compute_profile(st0, sym).frequency, st0.u.u_hat())


def test_free_flow_profile_is_constant(setup):
    g, sym, st0 = setup
    st = advance(st0, sym, 0.0, 0.1, 50)
    assert np.max(np.abs(compute_profile(st, sym).frequency - st0.u.u_hat())) < 1e-12


@pytest.mark.parametrize("eps", [0.05, 0.1])
def test_profile_change_is_cubic_in_amplitude(eps):
    # f_hat(t) - u0_hat ~ eps^3 t for small t
    g = Grid1D(16 * np.pi, 512)
    sym = FractionalSymbol(0.5, g)
    shape = np.exp(-g.x**2 / 2)
    d = []
    for a in (eps, eps / 2):
        st0 = initial_state(g, a * shape)
        st = advance(st0, sym, 1.0, 0.01, 20)
        d.append(np.max(np.abs(compute_profile(st, sym).frequency - st0.u.u_hat())))
    assert d[0] / d[1] == pytest.approx(8.0, rel=0.02)


def test_mass_is_conserved(setup):
    g, sym, st0 = setup
    st = advance(st0, sym, 1.0, 0.05, 400)
    assert st.mass_drift < 1e-12


@settings(max_examples=15, deadline=None)
@given(theta=st.floats(-np.pi, np.pi))
def test_gauge_covariance(theta):
    g = Grid1D(8 * np.pi, 256)
    sym = FractionalSymbol(0.6, g)
    u0 = 0.3 * np.exp(-g.x**2) * np.exp(1j * g.x)
    a = advance(initial_state(g, u0), sym, 1.0, 0.05, 20)
    b = advance(initial_state(g, np.exp(1j * theta) * u0), sym, 1.0, 0.05, 20)
    assert np.max(np.abs(b.u.u() - np.exp(1j * theta) * a.u.u())) < 1e-13


def test_strang_is_second_order(setup):
    g, sym, st0 = setup
    st0 = initial_state(g, 5 * st0.u.u())  # strong nonlinearity so splitting error dominates
    ref = advance(st0, sym, 1.0, 1 / 160, 160).u.u()
    errs = [np.max(np.abs(advance(st0, sym, 1.0, 1 / n, n).u.u() - ref)) for n in (10, 20)]
    order = np.log2(errs[0] / errs[1])
    assert 1.8 <= order <= 2.2


# ---------------------------------------------------------------------------
# phase accumulator


def test_phase_constant_half():
    assert phase_constant(0.5) == pytest.approx(8 * np.pi)


def test_accumulator_vanishes_on_zero_profile():
    g = Grid1D(4.0, 32)
    acc = PhaseAccumulator.start(g, 0.5, 1.0, np.zeros(g.N))
    acc = accumulate_phase(acc, np.zeros(g.N), np.zeros(g.N), 0.0, 1.0)
    assert np.all(acc.H == 0)


def test_accumulator_log_integral():
    g = Grid1D(4.0, 32)
    c = np.full(g.N, 0.3 + 0.1j)
    acc = PhaseAccumulator.start(g, 0.5, 1.0, c)
    T, n = 5.0, 4000
    ts = np.linspace(0, T, n + 1)
    for a, b in zip(ts[:-1], ts[1:]):
        acc = accumulate_phase(acc, c, c, a, b)
    exact = acc.rate * abs(c[0]) ** 2 * np.log1p(T)
    err = np.max(np.abs(acc.H - exact))
    assert err < 1e-6 * np.max(exact)
    # trapezoid error is second order
    acc2 = PhaseAccumulator.start(g, 0.5, 1.0, c)
    ts2 = np.linspace(0, T, 2 * n + 1)
    for a, b in zip(ts2[:-1], ts2[1:]):
        acc2 = accumulate_phase(acc2, c, c, a, b)
    assert np.log2(err / np.max(np.abs(acc2.H - exact))) == pytest.approx(2.0, abs=0.1)


def test_accumulator_rate_uses_constant():
    g = Grid1D(4.0, 32)
    acc = PhaseAccumulator.start(g, 0.5, 1.0, np.ones(g.N))
    xi = np.abs(g.xi)
    assert np.allclose(acc.rate, 8 * np.pi / (4 * np.pi**2) * xi**1.5)
    assert acc.rate[0] == 0.0


def test_accumulator_rejects_backwards_time():
    g = Grid1D(4.0, 32)
    acc = PhaseAccumulator.start(g, 0.5, 1.0, np.ones(g.N))
    with pytest.raises(ValueError):
        accumulate_phase(acc, np.ones(g.N), np.ones(g.N), 2.0, 1.0)


@settings(max_examples=20, deadline=None)
@given(values=st.lists(st.floats(0, 3), min_size=2, max_size=6))
def test_accumulator_monotone_for_positive_coupling(values):
    g = Grid1D(4.0, 16)
    acc = PhaseAccumulator.start(g, 0.6, 1.0, np.full(g.N, values[0]))
    prev = acc.H.copy()
    for i, (a, b) in enumerate(zip(values[:-1], values[1:])):
        acc = accumulate_phase(acc, np.full(g.N, a), np.full(g.N, b), float(i), float(i + 1))
        assert np.all(acc.H >= prev) and np.all(np.isreal(acc.H))
        prev = acc.H.copy()
    assert acc.H[0] == 0.0


# ---------------------------------------------------------------------------
# scattering snapshots


def test_snapshot_is_unimodular_and_self_distance_zero(setup):
    g, sym, st0 = setup
    acc = PhaseAccumulator.start(g, 0.5, 1.0, st0.u.u_hat())
    st = st0
    for _ in range(5):
        nxt = strang_step(st, sym, 1.0, 0.1)
        acc = accumulate_phase(acc, compute_profile(st, sym).frequency, compute_profile(nxt, sym).frequency, st.t, nxt.t)
        st = nxt
    snap = scattering_snapshot(st, acc, sym)
    f = compute_profile(st, sym).frequency
    assert np.array_equal(np.abs(snap.corrected), np.abs(f)) or np.allclose(np.abs(snap.corrected), np.abs(f), rtol=1e-15)
    assert scattering_snapshot(st, acc, sym, reference=snap).distance == 0.0


def test_snapshot_requires_current_accumulator(setup):
    g, sym, st0 = setup
    acc = PhaseAccumulator.start(g, 0.5, 1.0, st0.u.u_hat())
    with pytest.raises(ValueError):
        scattering_snapshot(strang_step(st0, sym, 1.0, 0.1), acc, sym)


def test_snapshot_grid_mismatch(setup):
    g, sym, st0 = setup
    acc = PhaseAccumulator.start(g, 0.5, 1.0, st0.u.u_hat())
    bad = ScatteringSnapshot(0.0, np.zeros(g.N // 2, dtype=complex))
    with pytest.raises(ValueError):
        scattering_snapshot(st0, acc, sym, reference=bad)


# ---------------------------------------------------------------------------
# driver


def test_ladder_times_are_geometric():
    steps = ladder_times(400.0, 0.05, 4, 1.0)
    assert steps[0] == 0 and steps[-1] == 8000
    assert 4000 in steps and 2000 in steps and 500 in steps


def test_t_end_zero_single_snapshot(small_run):
    cfg = make_config(small_run, t_end=0.0)
    res = run_simulation(cfg)
    assert res.status == "ok" and len(res.series) == 1 and len(res.ladder) == 1
    assert res.series[0]["t"] == 0.0 and res.series[0]["d_ref"] == 0.0
    assert np.allclose(res.ladder[0].f_hat, cfg.grid and SpectralField.from_physical(cfg.grid, cfg.initial_samples()).u_hat())


def test_free_run_has_zero_phase_and_constant_profile(small_run):
    cfg = make_config(small_run, c_star=0.0)
    res = run_simulation(cfg)
    f0 = res.ladder[0].f_hat
    for snap in res.ladder:
        assert np.all(snap.H == 0)
        assert np.max(np.abs(snap.f_hat - f0)) < 1e-12 * np.max(np.abs(f0))


def test_runs_are_deterministic(small_run):
    a = run_simulation(make_config(small_run))
    b = run_simulation(make_config(small_run))
    assert a.series == b.series
    assert all(np.array_equal(x.corrected, y.corrected) for x, y in zip(a.ladder, b.ladder))


def test_gauge_off_forces_zero_phase(small_run):
    res = run_simulation(make_config(small_run, gauge=False))
    assert all(np.all(s.H == 0) for s in res.ladder)
    on = run_simulation(make_config(small_run))
    assert on.status == "ok"
    assert np.max(np.abs(on.ladder[-1].H)) > 0


def test_boundary_contamination_aborts(small_run):
    # a wide packet on a short box reaches the edge at once
    d = dict(small_run, grid={"half_length": 8.0, "point_count": 256})
    d["datum"] = {"family": "gaussian", "sigma": 4.0, "xi0": 2.0}
    d["monitor"] = {}
    res = run_simulation(make_config(d))
    assert res.status == "boundary_contamination"
    assert "boundary" in res.diagnostic
    with pytest.raises(BoundaryContaminationError):
        list(iterate_simulation(make_config(d)))


def test_observers_see_every_snapshot(small_run):
    seen = []
    res = run_simulation(make_config(small_run), observers=[lambda s: seen.append(s.t)])
    assert len(seen) == len(set(round(r["t"], 9) for r in res.series) | set(round(s.t, 9) for s in res.ladder))
    assert seen == sorted(seen)


def test_invalid_configs(small_run):
    for key, value in (("alpha", 0.2), ("alpha", 1.0), ("dt", 0.0), ("epsilon0", -1.0), ("t_end", 0.01)):
        with pytest.raises(ConfigError) as err:
            make_config(small_run, **{key: value})
        assert key in str(err.value)
    d = dict(small_run)
    del d["alpha"]
    with pytest.raises(ConfigError, match="alpha"):
        make_config(d)


def test_p0_outside_nominal_range_is_noted(small_run):
    cfg = make_config(small_run, monitor={"p0": 0.1})
    assert any("p0" in n for n in cfg.deviation_notes())
    with pytest.raises(ConfigError):
        make_config(small_run, monitor={"p0": 0.6})
