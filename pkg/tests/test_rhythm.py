"""Cosinor and nonparametric metric tests against independent oracles."""

from __future__ import annotations

import math

import numpy as np
import pytest

from cosinorage.errors import (InsufficientData, ProfileIncomplete,
                               ZeroDenominator, ZeroVariance)
from cosinorage.rhythm import (OMEGA, evaluate_cosinor, fit_cosinor,
                               hourly_profile, interdaily_stability,
                               intradaily_variability, m10_l5,
                               relative_amplitude)

from conftest import daily_pattern, series_from_minutes, sinusoid_pattern


# --- oracles --------------------------------------------------------------

def cosinor_normal_equations(t_minutes, y):
    """Independent least-squares solve via the normal equations."""
    x = np.column_stack([np.ones(len(t_minutes)),
                         np.cos(OMEGA * np.asarray(t_minutes, float)),
                         np.sin(OMEGA * np.asarray(t_minutes, float))])
    mesor, b, c = np.linalg.solve(x.T @ x, x.T @ np.asarray(y, float))
    amp = math.hypot(b, c)
    phi = math.atan2(-c, b)
    if phi > 0:
        phi -= 2.0 * math.pi
    return float(mesor), float(amp), float(phi)


def is_oracle(day_hour_values):
    """Brute-force IS on a days x 24 nested list (None = missing)."""
    flat = [v for row in day_hour_values for v in row if v is not None]
    n = len(flat)
    xbar = sum(flat) / n
    s_hours = 0.0
    p = 0
    for h in range(24):
        col = [row[h] for row in day_hour_values if row[h] is not None]
        if not col:
            continue
        p += 1
        s_hours += (sum(col) / len(col) - xbar) ** 2
    s_total = sum((v - xbar) ** 2 for v in flat)
    return n * s_hours / (p * s_total)


def iv_oracle(day_hour_values):
    """Brute-force IV on the concatenated hour sequence."""
    seq = [v for row in day_hour_values for v in row]
    flat = [v for v in seq if v is not None]
    n = len(flat)
    xbar = sum(flat) / n
    s_total = sum((v - xbar) ** 2 for v in flat)
    diff = 0.0
    for a, b in zip(seq, seq[1:]):
        if a is not None and b is not None:
            diff += (b - a) ** 2
    return n * diff / ((n - 1) * s_total)


def scan_oracle(profile):
    """Exhaustive circular window scan with modular fancy indexing."""
    prof = np.asarray(profile, dtype=np.float64)
    idx = np.arange(1440)

    def windows(w):
        return np.array([np.nanmean(prof[(idx[:w] + s) % 1440])
                         for s in range(1440)])

    def tied_start(tied):
        if tied.all():
            return 0
        return min(i for i in range(1440) if tied[i] and not tied[i - 1])

    m10s = windows(600)
    l5s = windows(300)
    m10 = float(np.max(m10s))
    l5 = float(np.min(l5s))
    return (m10, tied_start(m10s == m10), l5, tied_start(l5s == l5))


def hourly_means(values, n_days):
    """days x 24 hourly means for fully-worn UTC minute data."""
    mat = np.asarray(values, float).reshape(n_days, 24, 60).mean(axis=2)
    return [[float(v) for v in row] for row in mat]


# --- cosinor --------------------------------------------------------------

def test_fit_recovers_noiseless_sinusoid():
    series = series_from_minutes(
        daily_pattern(sinusoid_pattern(30.0, 20.0, 840.0), 7))
    fit = fit_cosinor(series)
    assert fit.mesor_mg == pytest.approx(30.0, abs=1e-9)
    assert fit.amplitude_mg == pytest.approx(20.0, abs=1e-9)
    assert fit.acrophase_minutes == pytest.approx(840.0, abs=1e-9)
    assert fit.goodness == pytest.approx(1.0, abs=1e-9)
    assert fit.n_minutes_used == 7 * 1440


def test_fit_constant_is_degenerate():
    series = series_from_minutes(np.full(2 * 1440, 30.0))
    fit = fit_cosinor(series)
    assert fit.mesor_mg == pytest.approx(30.0)
    assert fit.amplitude_mg == 0.0
    assert fit.goodness == 0.0
    assert fit.acrophase_rad == 0.0


def test_fit_matches_normal_equations_oracle(rng):
    values = daily_pattern(sinusoid_pattern(40.0, 15.0, 600.0), 5)
    values = values + rng.normal(0.0, 6.0, values.shape)
    values = np.maximum(values, 0.0)
    series = series_from_minutes(values)
    fit = fit_cosinor(series)
    t = series.local_minute_of_day
    mesor, amp, phi = cosinor_normal_equations(t, series.enmo_mg)
    assert fit.mesor_mg == pytest.approx(mesor, abs=1e-9)
    assert fit.amplitude_mg == pytest.approx(amp, abs=1e-9)
    assert fit.acrophase_rad == pytest.approx(phi, abs=1e-9)


def test_acrophase_conventions(rng):
    for peak in (0.0, 90.0, 720.0, 1250.0):
        series = series_from_minutes(
            daily_pattern(sinusoid_pattern(30.0, 10.0, peak), 2))
        fit = fit_cosinor(series)
        assert -2.0 * math.pi < fit.acrophase_rad <= 0.0
        assert 0.0 <= fit.acrophase_minutes < 1440.0
        expect = (-fit.acrophase_rad / OMEGA) % 1440.0
        assert fit.acrophase_minutes == pytest.approx(expect, abs=1e-12)
        assert fit.acrophase_minutes == pytest.approx(peak % 1440.0,
                                                      abs=1e-6)


def test_residual_orthogonality(rng):
    values = rng.uniform(0.0, 80.0, 3 * 1440)
    series = series_from_minutes(values)
    fit = fit_cosinor(series)
    t = series.local_minute_of_day.astype(float)
    resid = series.enmo_mg - evaluate_cosinor(fit, t)
    for basis in (np.ones_like(t), np.cos(OMEGA * t), np.sin(OMEGA * t)):
        assert abs(float(resid @ basis)) < 1e-6


def test_evaluate_cosinor_peak_trough_quadrature():
    series = series_from_minutes(
        daily_pattern(sinusoid_pattern(30.0, 20.0, 840.0), 2))
    fit = fit_cosinor(series)
    assert evaluate_cosinor(fit, 840.0) == pytest.approx(50.0, abs=1e-9)
    assert evaluate_cosinor(fit, 840.0 + 720.0) == pytest.approx(10.0,
                                                                 abs=1e-9)
    assert evaluate_cosinor(fit, 840.0 + 360.0) == pytest.approx(30.0,
                                                                 abs=1e-9)


def test_fit_needs_a_retained_day():
    values = daily_pattern(sinusoid_pattern(), 1)
    wear = np.zeros(1440, dtype=bool)
    wear[:300] = True  # 21% coverage, day excluded
    with pytest.raises(Exception) as exc:
        series_from_minutes(values, wear=wear)
    assert exc.value.__class__.__name__ == "NoCompleteDays"


# --- IS / IV --------------------------------------------------------------

def test_is_exactly_one_on_periodic_days():
    pattern = np.repeat(np.arange(24, dtype=np.float64), 60)
    series = series_from_minutes(daily_pattern(pattern, 7))
    assert interdaily_stability(series) == 1.0


def test_is_constant_raises_zero_variance():
    series = series_from_minutes(np.full(3 * 1440, 12.0))
    with pytest.raises(ZeroVariance):
        interdaily_stability(series)


def test_is_matches_oracle_on_noise(rng):
    values = rng.uniform(0.0, 50.0, 7 * 1440)
    series = series_from_minutes(values)
    got = interdaily_stability(series)
    want = is_oracle(hourly_means(values, 7))
    assert got == pytest.approx(want, rel=1e-9)
    # i.i.d. noise has little day-to-day hour structure
    assert got < 0.5


def test_is_needs_two_days():
    series = series_from_minutes(daily_pattern(sinusoid_pattern(), 1))
    with pytest.raises(InsufficientData):
        interdaily_stability(series)


def test_iv_exactly_four_on_alternating_hours():
    pattern = np.repeat(np.tile([0.0, 1.0], 12), 60)
    series = series_from_minutes(daily_pattern(pattern, 7))
    assert intradaily_variability(series) == 4.0


def test_iv_low_on_smooth_sinusoid(rng):
    values = daily_pattern(sinusoid_pattern(30.0, 20.0, 840.0), 4)
    series = series_from_minutes(values)
    got = intradaily_variability(series)
    want = iv_oracle(hourly_means(values, 4))
    assert got == pytest.approx(want, rel=1e-9)
    assert got < 0.3


def test_iv_matches_oracle_with_missing_bins(rng):
    values = rng.uniform(0.0, 60.0, 4 * 1440)
    wear = np.ones(values.shape[0], dtype=bool)
    # kill two full hours: pairs straddling them must be skipped
    wear[1440 + 5 * 60:1440 + 6 * 60] = False
    wear[2 * 1440 + 17 * 60:2 * 1440 + 18 * 60] = False
    series = series_from_minutes(values, wear=wear)
    mat = hourly_means(values, 4)
    mat[1][5] = None
    mat[2][17] = None
    assert intradaily_variability(series) == pytest.approx(
        iv_oracle(mat), rel=1e-9)
    assert interdaily_stability(series) == pytest.approx(
        is_oracle(mat), rel=1e-9)


# --- hourly profile -------------------------------------------------------

def test_hourly_profile_constant_and_mean():
    values = np.full(1440, 10.0)
    values[10 * 60:10 * 60 + 30] = 0.0
    values[10 * 60 + 30:11 * 60] = 20.0
    series = series_from_minutes(values)
    prof = hourly_profile(series)
    assert prof.shape == (24,)
    assert prof[10] == pytest.approx(10.0)
    assert np.allclose(np.delete(prof, 10), 10.0)


def test_hourly_profile_nonwear_hour_missing():
    values = np.full(1440, 10.0)
    wear = np.ones(1440, dtype=bool)
    wear[7 * 60:8 * 60] = False
    series = series_from_minutes(values, wear=wear)
    prof = hourly_profile(series)
    assert math.isnan(prof[7])
    assert prof[8] == pytest.approx(10.0)


# --- M10 / L5 -------------------------------------------------------------

def test_m10_l5_block_fixture():
    pattern = np.zeros(1440)
    pattern[480:1080] = 100.0
    series = series_from_minutes(daily_pattern(pattern, 2))
    m10, m10_on, l5, l5_on = m10_l5(series)
    assert m10 == 100.0
    assert m10_on == 480
    assert l5 == 0.0
    # every 5-h window inside 18:00-08:00 ties at zero; the tied stretch
    # starts at 18:00
    assert l5_on == 1080
    assert relative_amplitude(m10, l5) == 1.0


def test_m10_l5_constant_profile():
    series = series_from_minutes(np.full(2 * 1440, 10.0))
    m10, m10_on, l5, l5_on = m10_l5(series)
    assert m10 == 10.0 and l5 == 10.0
    assert m10_on == 0 and l5_on == 0
    assert relative_amplitude(m10, l5) == 0.0


def test_m10_l5_sinusoid_centred_windows():
    series = series_from_minutes(
        daily_pattern(sinusoid_pattern(30.0, 20.0, 840.0), 3))
    m10, m10_on, l5, l5_on = m10_l5(series)
    assert abs(m10_on - 540) <= 1
    # trough at 02:00, so the 5-h window is centred there
    assert abs((l5_on - 1410) % 1440) <= 1 or abs((1410 - l5_on) % 1440) <= 1


def test_m10_l5_equals_scan_oracle_exactly(rng):
    for _ in range(25):
        values = rng.uniform(0.0, 120.0, 1440)
        series = series_from_minutes(values)
        got = m10_l5(series)
        want = scan_oracle(values)
        assert got == want  # bit-identical, including onsets


def test_m10_l5_profile_incomplete():
    values = np.full(1440, 10.0)
    wear = np.ones(1440, dtype=bool)
    wear[:350] = False  # 24% of profile minutes missing
    series = series_from_minutes(values, wear=wear,
                                 config=_loose_coverage())
    with pytest.raises(ProfileIncomplete):
        m10_l5(series)


def _loose_coverage():
    from cosinorage.preprocess import PreprocessConfig
    return PreprocessConfig(min_day_coverage=0.5)


def test_m10_l5_per_day_mode_matches_on_identical_days():
    pattern = sinusoid_pattern(30.0, 20.0, 840.0)
    series = series_from_minutes(daily_pattern(pattern, 3))
    avg = m10_l5(series, mode="average")
    per_day = m10_l5(series, mode="per-day")
    assert per_day[0] == pytest.approx(avg[0], rel=1e-12)
    assert per_day[2] == pytest.approx(avg[2], rel=1e-12)
    assert per_day[1] == avg[1]
    assert per_day[3] == avg[3]


def test_relative_amplitude_contract():
    assert relative_amplitude(100.0, 0.0) == 1.0
    assert relative_amplitude(10.0, 10.0) == 0.0
    with pytest.raises(ZeroDenominator):
        relative_amplitude(0.0, 0.0)
    with pytest.raises(ValueError):
        relative_amplitude(5.0, 10.0)


# --- symmetry properties --------------------------------------------------

def test_time_shift_equivariance(rng):
    base = sinusoid_pattern(35.0, 18.0, 700.0)
    base = base + rng.normal(0.0, 3.0, 1440)
    base = np.maximum(base, 0.0)
    delta = 137
    shifted = np.roll(base, delta)
    s1 = series_from_minutes(daily_pattern(base, 4))
    s2 = series_from_minutes(daily_pattern(shifted, 4))
    f1, f2 = fit_cosinor(s1), fit_cosinor(s2)
    assert f2.mesor_mg == pytest.approx(f1.mesor_mg, abs=1e-9)
    assert f2.amplitude_mg == pytest.approx(f1.amplitude_mg, abs=1e-9)
    d = (f2.acrophase_minutes - f1.acrophase_minutes) % 1440.0
    assert d == pytest.approx(delta, abs=1e-6)
    assert interdaily_stability(s2) == pytest.approx(
        interdaily_stability(s1), abs=1e-9)
    m1 = m10_l5(s1)
    m2 = m10_l5(s2)
    assert m2[0] == pytest.approx(m1[0], abs=1e-9)
    assert (m2[1] - m1[1]) % 1440 == delta
    assert (m2[3] - m1[3]) % 1440 == delta


def test_positive_scaling(rng):
    values = rng.uniform(1.0, 90.0, 3 * 1440)
    c = 2.5
    s1 = series_from_minutes(values)
    s2 = series_from_minutes(values * c)
    f1, f2 = fit_cosinor(s1), fit_cosinor(s2)
    assert f2.mesor_mg == pytest.approx(c * f1.mesor_mg, rel=1e-9)
    assert f2.amplitude_mg == pytest.approx(c * f1.amplitude_mg, rel=1e-9)
    assert f2.acrophase_rad == pytest.approx(f1.acrophase_rad, abs=1e-9)
    assert interdaily_stability(s2) == pytest.approx(
        interdaily_stability(s1), rel=1e-9)
    assert intradaily_variability(s2) == pytest.approx(
        intradaily_variability(s1), rel=1e-9)
    m1, m2 = m10_l5(s1), m10_l5(s2)
    assert relative_amplitude(m2[0], m2[2]) == pytest.approx(
        relative_amplitude(m1[0], m1[2]), rel=1e-9)


def test_is_bounds_and_iv_nonnegative(rng):
    for _ in range(5):
        values = rng.uniform(0.0, 100.0, 3 * 1440)
        series = series_from_minutes(values)
        assert 0.0 <= interdaily_stability(series) <= 1.0 + 1e-9
        assert intradaily_variability(series) >= 0.0
