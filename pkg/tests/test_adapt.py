import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saia import adapt, kernels
from saia.adapt import (S_OMEGA_PLAIN, S_OMEGA_SIGMA, S_PLAIN, BOptTable,
                        CoefficientClampWarning, FittingResult, aia_coefficient,
                        estimate_stability_limit, expected_energy_error_from_ar,
                        fitting_factors, load_or_tabulate, load_table, lookup_bopt,
                        nondimensionalize, save_table, select_mode, small_step_limit,
                        tabulate_bopt, with_mode)
from saia.integrator import B_VV, hyperbola_a, rho
from saia.model import FrequencySummary

AR_UNIT = 1.0 - 1.0 / (8.0 * math.sqrt(2.0 * math.pi))  # 2 pi (1 - AR)^2 = 1/64


def _brute_max_rho(k, b, hbar, n=4000):
    hs = np.linspace(hbar / n, hbar, n)
    return max(rho(k, h, b) for h in hs)


# --------------------------------------------------------------------------
# Minimax table
# --------------------------------------------------------------------------

def test_small_step_limits():
    assert small_step_limit(2) == pytest.approx((3 - math.sqrt(5)) / 4, abs=1e-15)
    assert small_step_limit(3) == pytest.approx(0.108991425, abs=1e-9)
    with pytest.raises(ValueError):
        small_step_limit(1)


@pytest.mark.parametrize("k", [2, 3])
def test_table_invariants(k, small_tables):
    t = small_tables[k]
    assert t.n_grid == 200 and t.h_max == pytest.approx(2 * k)
    assert np.all(np.diff(t.values) >= -1e-6)
    assert t.values[0] >= small_step_limit(k) - 1e-6
    assert t.values[-1] == B_VV[k]
    if k == 3:
        np.testing.assert_allclose(6 * t.a_values * t.values - 2 * t.a_values - t.values + 0.5,
                                   0.0, atol=1e-14)
    else:
        assert t.a_values is None


@pytest.mark.parametrize("k,hbar", [(2, 1.0), (2, 2.6), (3, 1.5), (3, 4.0)])
def test_minimax_certificate(k, hbar):
    # nudging b either way must not lower the worst-case rho
    b = kernels.minimax_b(k, hbar, *adapt._search_bracket(k))
    best = _brute_max_rho(k, b, hbar)
    for db in (-2e-3, 2e-3):
        other = b + db
        if not kernels.stable_on(k, other, hbar):
            continue
        assert _brute_max_rho(k, other, hbar) >= best * (1 - 1e-3)


def test_lookup_exact_grid_point_and_interpolation(small_tables):
    t = small_tables[2]
    b, a, clamped = t.lookup(t.grid[37])
    assert b == t.values[37] and a is None and not clamped
    mid = 0.5 * (t.grid[10] + t.grid[11])
    assert t.lookup(mid)[0] == pytest.approx(0.5 * (t.values[10] + t.values[11]))
    # below the first grid point interpolation runs towards the h -> 0 limit
    assert small_step_limit(2) <= t.lookup(1e-4)[0] <= t.values[0]


def test_lookup_at_two_and_at_the_end():
    t = tabulate_bopt(2, n_grid=400)
    assert lookup_bopt(t, 2.0)[0] == pytest.approx(0.211781, abs=2e-4)
    assert lookup_bopt(t, 4.0)[0] == pytest.approx(0.25, abs=1e-3)
    t3 = tabulate_bopt(3, n_grid=400)
    b, a = lookup_bopt(t3, 3.0)
    assert b == pytest.approx(0.118880, abs=2e-4)
    assert a == pytest.approx(hyperbola_a(b))


def test_lookup_beyond_table_warns(small_tables):
    with pytest.warns(CoefficientClampWarning):
        b, a = lookup_bopt(small_tables[3], 7.0)
    assert b == B_VV[3] and a == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        lookup_bopt(small_tables[3], 0.0)


def test_tabulate_argument_checks():
    with pytest.raises(ValueError):
        tabulate_bopt(1)
    with pytest.raises(ValueError):
        tabulate_bopt(2, n_grid=5)


def test_table_round_trip(tmp_path, small_tables):
    for k in (2, 3):
        path = tmp_path / f"t{k}.csv"
        save_table(small_tables[k], path)
        back = load_table(path)
        assert back.k == k and back.n_grid == 200
        np.testing.assert_allclose(back.values, small_tables[k].values, atol=1e-9)
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n")
    with pytest.raises(ValueError):
        load_table(bad)


def test_load_or_tabulate_uses_cache(tmp_path):
    t1 = load_or_tabulate(2, n_grid=50, cache_dir=tmp_path)
    assert (tmp_path / "bopt_k2_n50.csv").exists()
    t2 = load_or_tabulate(2, n_grid=50, cache_dir=tmp_path)
    # fresh and cached tables must be bit-identical so reruns reproduce
    np.testing.assert_array_equal(t1.values, t2.values)
    np.testing.assert_array_equal(t1.grid, t2.grid)
    (tmp_path / "bopt_k2_n50.csv").write_text("garbage")
    t3 = load_or_tabulate(2, n_grid=50, cache_dir=tmp_path)
    np.testing.assert_allclose(t1.values, t3.values)


def test_table_shape_validation():
    with pytest.raises(ValueError):
        BOptTable(2, np.arange(3.0), np.arange(4.0))


# --------------------------------------------------------------------------
# Fitting factors
# --------------------------------------------------------------------------

@pytest.mark.parametrize("ar,want", [(1.0, 0.0), (0.92, 4 * math.pi * 0.08 ** 2),
                                     (0.5, math.pi)])
def test_expected_energy_error_from_ar(ar, want):
    assert expected_energy_error_from_ar(ar) == pytest.approx(want, abs=1e-15)


def test_expected_energy_error_rejects_bad_ar():
    with pytest.raises(ValueError):
        expected_energy_error_from_ar(1.2)


def test_fitting_factor_unit_example():
    freqs = FrequencySummary.from_omegas([1.0])
    res = fitting_factors(AR_UNIT, 1.0, 1, freqs, want_omega_mode=True)
    assert res.S == pytest.approx(1.0, abs=1e-12)
    assert res.S_omega == pytest.approx(1.0, abs=1e-12)


def test_fitting_factor_above_one():
    # half the step at the same acceptance means twice the factor
    freqs = FrequencySummary.from_omegas([1.0])
    res = fitting_factors(AR_UNIT, 0.5, 1, freqs)
    assert res.S == pytest.approx(2.0, rel=1e-12)


@settings(max_examples=100)
@given(ar=st.floats(0.0, 1.0), dt=st.floats(1e-3, 10.0), D=st.integers(1, 1000),
       w=st.floats(0.1, 100.0))
def test_fitting_factors_are_floored(ar, dt, D, w):
    freqs = FrequencySummary.from_omegas(np.full(D, w))
    res = fitting_factors(ar, dt, D, freqs, want_omega_mode=True)
    assert res.S >= 1.0 and res.S_omega >= 1.0
    # identical frequencies make the two factors coincide
    assert res.S == pytest.approx(res.S_omega, rel=1e-9)


def test_fitting_factors_at_perfect_acceptance():
    res = fitting_factors(1.0, 0.1, 5, FrequencySummary.from_omegas([1, 2, 3, 4, 5]), True)
    assert res.S == 1.0 and res.S_omega == 1.0


def test_fitting_factor_checks():
    freqs = FrequencySummary.from_omegas([1.0])
    with pytest.raises(ValueError):
        fitting_factors(0.9, 0.0, 1, freqs)
    with pytest.raises(ValueError):
        fitting_factors(0.9, 0.1, 1, FrequencySummary.from_omegas([0.0]))
    with pytest.raises(ValueError):
        fitting_factors(0.9, 0.1, 1, FrequencySummary(2.0), want_omega_mode=True)


def _result(S=1.0, S_omega=None, ar=0.9, dt_vv=0.1, D=4, mode=S_PLAIN):
    return FittingResult(S=S, AR_burnin=ar, E_dH=0.0, dt_vv=dt_vv, D=D, S_omega=S_omega,
                         mode=mode)


def test_nondimensionalize_plain_branches():
    freqs = FrequencySummary(3.0)
    assert nondimensionalize(0.2, _result(S=1.0), freqs) == pytest.approx(0.6)
    got = nondimensionalize(0.05, _result(S=1.5), freqs)
    assert got == pytest.approx((2 * math.pi * 0.01 / 4) ** (1 / 6), rel=1e-12)
    assert got == pytest.approx(0.5004, abs=1e-4)


def test_nondimensionalize_sigma_zero_equals_plain():
    freqs = FrequencySummary.from_omegas([2.0, 2.0, 2.0])
    assert freqs.sigma == 0.0
    a = nondimensionalize(0.1, _result(S_omega=1.3, mode=S_OMEGA_SIGMA), freqs)
    b = nondimensionalize(0.1, _result(S_omega=1.3, mode=S_OMEGA_PLAIN), freqs)
    assert a == b


def test_nondimensionalize_sigma_branch():
    freqs = FrequencySummary.from_omegas([1.0, 3.0])
    got = nondimensionalize(0.1, _result(S_omega=1.2, mode=S_OMEGA_SIGMA), freqs)
    assert got == pytest.approx(1.2 * (3.0 - 1.0) * 0.1)
    with pytest.raises(ValueError):
        nondimensionalize(0.1, _result(mode=S_OMEGA_PLAIN), freqs)


def test_stability_limit_examples():
    freqs = FrequencySummary(2.0)
    res = _result(S=1.0)
    assert estimate_stability_limit(1, res, freqs) == (1.0, False)
    sl1 = estimate_stability_limit(1, _result(S=1.7), freqs)[0]
    sl3 = estimate_stability_limit(3, _result(S=1.7), freqs)[0]
    assert sl3 == pytest.approx(3 * sl1)


def test_stability_limit_sigma_fallback():
    freqs = FrequencySummary(1.0, np.array([1.0]), sigma=2.0)
    sl, fallback = estimate_stability_limit(1, _result(S_omega=1.0, mode=S_OMEGA_SIGMA), freqs)
    assert fallback and sl == pytest.approx(2.0)


@settings(max_examples=100)
@given(mode=st.sampled_from([S_PLAIN, S_OMEGA_PLAIN, S_OMEGA_SIGMA]),
       S=st.floats(1.0, 3.0), So=st.floats(1.0, 3.0), dt=st.floats(1e-3, 1.0))
def test_stability_limit_maps_to_2k(mode, S, So, dt):
    # in the S = 1 or frequency modes the limit sits at h_bar = 2
    freqs = FrequencySummary.from_omegas([0.5, 2.0, 5.0])
    S = 1.0 if mode == S_PLAIN else S
    res = with_mode(_result(S=S, S_omega=So), mode, 1, freqs)
    assert nondimensionalize(res.SL, res, freqs) == pytest.approx(2.0, rel=1e-12)


@pytest.mark.parametrize("args,want", [
    ((False, 1.5), S_PLAIN), ((True, 1.5, 0.5), S_OMEGA_PLAIN),
    ((False, 2.97, 0.578), S_OMEGA_PLAIN), ((True, 1.0, 3.0), S_OMEGA_SIGMA),
])
def test_select_mode(args, want):
    assert select_mode(*args) == want


def test_select_mode_needs_sigma():
    with pytest.raises(ValueError):
        select_mode(True, 1.0)


def test_aia_coefficient():
    # at h_bar = sqrt(2) * omega * dt = 2 this is the two-stage minimax value
    b = aia_coefficient(1.0, 2.0 / math.sqrt(2.0))
    assert b == pytest.approx(0.211781, abs=1e-4)
    assert math.isnan(aia_coefficient(1.0, 3.0))
