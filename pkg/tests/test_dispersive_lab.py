import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracnls.dispersive_lab import (
    OscillatoryIntegralSpec,
    evaluate_linear_solution,
    linear_solution_values,
    profile_from_field,
    profile_support,
    region_split,
    stationary_phase_estimate,
    stationary_phase_leading,
    stationary_point,
    stationary_point_bisection,
    stationary_point_closed_form,
    stationary_window_index,
    sup_linear_solution,
    verify_dispersive_bound,
)
from fracnls.spectral_core import Grid1D, LpBank, SpectralField


def gauss_hat(xi):
    # transform of exp(-x^2)
    return np.sqrt(np.pi) * np.exp(-np.asarray(xi) ** 2 / 4)


def packet(xi0, width=4.0):
    return lambda xi: np.exp(-width * (np.asarray(xi, dtype=float) - xi0) ** 2)


def test_time_zero_inverts_transform():
    xs = np.array([0.0, 0.5, -1.3, 2.0])
    vals = linear_solution_values(gauss_hat, 0.5, 0.0, xs, (-20, 20), rtol=1e-12)
    assert np.max(np.abs(vals - 2 * np.pi * np.exp(-xs**2))) < 1e-10


def test_narrow_bump_follows_group_velocity():
    # concentration near xi0 moves with speed -alpha xi0^(alpha-1)
    alpha, t, xi0 = 0.5, 50.0, 2.0
    prof = packet(xi0, width=2.0)
    sup, arg = sup_linear_solution(prof, alpha, t, (-3, 7), n_x=128)
    assert arg == pytest.approx(-alpha * t * xi0 ** (alpha - 1), rel=0.1)


def test_zero_profile_gives_zero():
    vals = linear_solution_values(lambda xi: np.zeros_like(np.asarray(xi, float), dtype=complex), 0.5, 3.0, [0.0, 1.0], (-1, 1))
    assert np.all(vals == 0)


def unit_packet(xi):
    # transform of exp(-x^2/2) exp(i x)
    return np.sqrt(2 * np.pi) * np.exp(-((np.asarray(xi, dtype=float) - 1) ** 2) / 2)


@pytest.mark.parametrize("alpha", [0.4, 0.5, 0.75, 0.9])
def test_stationary_phase_matches_quadrature(alpha):
    err = []
    for t in (100.0, 400.0):
        spec = OscillatoryIntegralSpec(alpha, t, -alpha * t, unit_packet, (-12.0, 14.0))
        exact = evaluate_linear_solution(spec, rtol=1e-10)
        err.append(abs(stationary_phase_estimate(spec) - exact) / abs(exact))
    assert err[0] < 0.05
    # next-order correction is O(1/t)
    assert err[1] < err[0] / 2


def test_stationary_phase_scaling_in_t():
    alpha, xi0 = 0.5, 2.0
    est = []
    for t in (100.0, 400.0):
        x = -alpha * t * xi0 ** (alpha - 1)
        est.append(abs(stationary_phase_estimate(OscillatoryIntegralSpec(alpha, t, x, packet(xi0), (-3, 7)))))
    assert est[1] / est[0] == pytest.approx(0.5, rel=1e-12)


@pytest.mark.parametrize("lam", [1e2, 1e4])
def test_leading_term_against_complex_gaussian(lam):
    # int exp(i lam xi^2 / 2) exp(-xi^2 / 2) dxi = sqrt(2 pi / (1 - i lam))
    exact = np.sqrt(2 * np.pi / (1 - 1j * lam))
    lead = stationary_phase_leading(0.0, lam, 1.0)
    assert abs(lead - exact) / abs(exact) < 1.0 / lam
    lead_neg = stationary_phase_leading(0.0, -lam, 1.0)
    assert abs(lead_neg - np.conj(exact)) / abs(exact) < 1.0 / lam


@settings(max_examples=60, deadline=None)
@given(alpha=st.floats(0.34, 0.99), t=st.floats(0.1, 1e3), x=st.floats(-1e3, 1e3).filter(lambda v: abs(v) > 1e-3))
def test_stationary_point_zeroes_phase_derivative(alpha, t, x):
    xi0 = stationary_point(alpha, t, x)
    assert math.copysign(1, xi0) == -math.copysign(1, x)
    spec = OscillatoryIntegralSpec(alpha, t, x, gauss_hat, (-1, 1))
    assert abs(spec.phase_d1(xi0)) < 1e-9 * max(t, abs(x))
    assert stationary_point(alpha, t, -x) == -xi0


@pytest.mark.parametrize("alpha", [0.4, 0.5, 0.9])
def test_bisection_agrees_with_root(alpha):
    for t, x in ((1.0, 1.0), (10.0, -3.0), (250.0, 40.0)):
        a = stationary_point(alpha, t, x)
        b = stationary_point_bisection(alpha, t, x)
        assert abs(a - b) <= 1e-10 * max(1.0, abs(a))


def test_sign_reversed_closed_form_is_not_a_critical_point():
    assert stationary_point_closed_form(0.5, 1.0, 1.0) == pytest.approx(4.0)
    assert stationary_point(0.5, 1.0, 1.0) == pytest.approx(-0.25)


def test_stationary_point_x_zero():
    assert stationary_point(0.5, 1.0, 0.0) is None
    with pytest.raises(ValueError):
        stationary_point_bisection(0.5, 1.0, 0.0)


def test_reflection_symmetry():
    # even real profile: A(t, -x) = A(t, x)
    xs = np.array([3.0, 7.5, 12.0])
    a = linear_solution_values(gauss_hat, 0.6, 20.0, xs, (-20, 20))
    b = linear_solution_values(gauss_hat, 0.6, 20.0, -xs, (-20, 20))
    assert np.max(np.abs(a - b)) < 1e-8 * np.max(np.abs(a))


def test_grid_profile_matches_closed_form():
    g = Grid1D(16 * np.pi, 512)
    f = SpectralField.from_physical(g, np.exp(-g.x**2))
    prof = profile_from_field(f)
    xi = np.linspace(-6, 6, 37)
    assert np.max(np.abs(prof(xi) - gauss_hat(xi))) < 1e-13
    lo, hi = profile_support(f)
    assert lo < -10 and hi > 10 and hi < 14


@settings(max_examples=100, deadline=None)
@given(alpha=st.floats(0.34, 0.99), t=st.floats(1.0, 1e4), k=st.integers(-20, 20))
def test_window_index_is_minimal(alpha, t, k):
    l0 = stationary_window_index(alpha, t, k)
    target = 2.0 ** (k * (2 - alpha)) / t
    assert 2.0 ** (2 * l0) >= target * (1 - 1e-12)
    assert 2.0 ** (2 * (l0 - 1)) < target * (1 + 1e-12)


def test_region_split_single_shell_equals_full_sup():
    bank = LpBank(-6, 5)
    support = (-3.0, 7.0)
    prof = packet(2.0)
    dec = region_split(prof, support, 0.5, 1e-3, 20.0, bank, margin_log2=10, n_x=64)
    assert dec.middle == [] and dec.high == []
    full, _ = sup_linear_solution(prof, 0.5, 20.0, support, n_x=64)
    assert dec.sup_low == pytest.approx(full / (2 * np.pi), rel=1e-3)


def test_region_split_populates_middle_with_small_margin():
    bank = LpBank(-6, 5)
    dec = region_split(packet(2.0), (-3.0, 7.0), 0.5, 1e-3, 20.0, bank, margin_log2=0, n_x=64)
    assert dec.middle and set(dec.windows) == set(dec.middle)
    assert sorted(dec.low + dec.middle + dec.high) == list(bank.indices)


def test_region_split_requires_t_at_least_one():
    with pytest.raises(ValueError):
        region_split(packet(2.0), (-3, 7), 0.5, 1e-3, 0.5, LpBank(-3, 3))


def test_dispersive_bound_zero_field():
    g = Grid1D(8 * np.pi, 256)
    rows = verify_dispersive_bound(SpectralField.from_physical(g, np.zeros(g.N)), 0.5, 1e-3, [1.0, 10.0])
    assert all(r.lhs == 0 and r.ratio == 0 for r in rows)


def test_dispersive_bound_ratio_is_bounded():
    g = Grid1D(16 * np.pi, 512)
    u = np.exp(-g.x**2 / 2) * np.exp(2j * g.x)
    f = SpectralField.from_physical(g, u)
    prof = lambda xi: np.sqrt(2 * np.pi) * np.exp(-((np.asarray(xi) - 2) ** 2) / 2)
    rows = verify_dispersive_bound(f, 0.5, 1e-3, [10.0, 20.0, 40.0], profile=prof, n_x=64)
    ratios = [r.ratio for r in rows]
    assert all(0 < r < 10 for r in ratios)
    assert max(ratios) / min(ratios) < 1.5
    assert rows[-1].lhs < rows[0].lhs
    assert rows[0].dominant in ("term1", "term2")
