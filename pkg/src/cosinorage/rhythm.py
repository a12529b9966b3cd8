"""Parametric (cosinor) and nonparametric circadian metrics.

All operations run on wear minutes of retained days only and are defined on
local clock time, so results are invariant to the absolute recording start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientData, ProfileIncomplete, ZeroDenominator, ZeroVariance
from .preprocess import MinuteSeries

OMEGA = 2.0 * math.pi / 1440.0  # rad per minute, 24 h period

M10_WINDOW_MIN = 600
L5_WINDOW_MIN = 300


@dataclass
class CosinorFit:
    mesor_mg: float
    amplitude_mg: float
    acrophase_rad: float       # in (-2*pi, 0]
    acrophase_minutes: float   # local clock minute of the fitted peak
    goodness: float            # fraction of variance explained, [0, 1]
    n_minutes_used: int

    def to_dict(self) -> dict:
        return {
            "mesor_mg": self.mesor_mg,
            "amplitude_mg": self.amplitude_mg,
            "acrophase_rad": self.acrophase_rad,
            "acrophase_minutes": self.acrophase_minutes,
            "goodness": self.goodness,
            "n_minutes_used": self.n_minutes_used,
        }


@dataclass
class NonparamMetrics:
    is_: float
    iv: float
    m10_mg: float
    m10_onset_minute: int
    l5_mg: float
    l5_onset_minute: int
    ra: float


def _used_mask(series: MinuteSeries) -> np.ndarray:
    """Wear minutes of retained days."""
    mask = series.wear.copy()
    if series.retained_days is not None:
        for k in range(series.n_days):
            if not series.retained_days[k]:
                mask[series.day_slice(k)] = False
    return mask


def _n_retained(series: MinuteSeries) -> int:
    if series.retained_days is None:
        return series.n_days
    return int(series.retained_days.sum())


def fit_cosinor(series: MinuteSeries) -> CosinorFit:
    """Least-squares single-component cosinor on wear minutes.

    Model: y(t) = M + A*cos(OMEGA*t + phi) with t the local clock minute.
    Fitted via the linear form M + b*cos(OMEGA*t) + c*sin(OMEGA*t);
    A = hypot(b, c), phi = atan2(-c, b) mapped into (-2*pi, 0].
    """
    if _n_retained(series) < 1:
        raise InsufficientData("cosinor fit needs at least one retained day")
    mask = _used_mask(series)
    y = series.enmo_mg[mask]
    t = series.local_minute_of_day[mask].astype(np.float64)
    n = y.shape[0]
    if n < 3:
        raise InsufficientData(f"cosinor fit needs >= 3 wear minutes, got {n}")

    ybar = float(np.mean(y))
    sst = float(np.sum((y - ybar) ** 2))
    if sst == 0.0:
        return CosinorFit(mesor_mg=ybar, amplitude_mg=0.0, acrophase_rad=0.0,
                          acrophase_minutes=0.0, goodness=0.0,
                          n_minutes_used=int(n))

    design = np.column_stack([
        np.ones(n), np.cos(OMEGA * t), np.sin(OMEGA * t),
    ])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    mesor, b, c = (float(v) for v in coef)
    amplitude = math.hypot(b, c)
    phi = math.atan2(-c, b)
    if phi > 0.0:
        phi -= 2.0 * math.pi
    minutes = (-phi / OMEGA) % 1440.0
    residuals = y - design @ coef
    ssr = float(np.sum(residuals ** 2))
    goodness = min(max(1.0 - ssr / sst, 0.0), 1.0)
    return CosinorFit(mesor_mg=mesor, amplitude_mg=amplitude,
                      acrophase_rad=phi, acrophase_minutes=minutes,
                      goodness=goodness, n_minutes_used=int(n))


def evaluate_cosinor(fit: CosinorFit, minute):
    """Fitted curve value (mg) at a local clock minute (scalar or array)."""
    val = fit.mesor_mg + fit.amplitude_mg * np.cos(
        OMEGA * np.asarray(minute, dtype=np.float64) + fit.acrophase_rad)
    if val.ndim == 0:
        return float(val)
    return val


def _day_bin_matrix(series: MinuteSeries, bin_minutes: int) -> np.ndarray:
    """Per retained day x clock bin mean over wear minutes; NaN = missing.

    A day-bin cell is missing when fewer than half of its minutes are wear.
    """
    if 1440 % bin_minutes != 0:
        raise ValueError("bin size must divide 1440")
    n_bins = 1440 // bin_minutes
    days = series.retained_day_indices()
    out = np.full((len(days), n_bins), np.nan)
    bins_all = series.local_minute_of_day // bin_minutes
    for row, k in enumerate(days):
        sl = series.day_slice(k)
        b = bins_all[sl]
        wear = series.wear[sl]
        total = np.bincount(b, minlength=n_bins).astype(np.float64)
        nwear = np.bincount(b[wear], minlength=n_bins).astype(np.float64)
        sums = np.bincount(b[wear], weights=series.enmo_mg[sl][wear],
                           minlength=n_bins)
        with np.errstate(invalid="ignore"):
            means = sums / nwear
        ok = (total > 0) & (nwear >= 0.5 * total) & (nwear > 0)
        out[row, ok] = means[ok]
    return out


def hourly_profile(series: MinuteSeries, bin_minutes: int = 60) -> np.ndarray:
    """Average-day binned profile (mean across retained days; NaN = missing)."""
    if _n_retained(series) < 1:
        raise InsufficientData("profile needs at least one retained day")
    mat = _day_bin_matrix(series, bin_minutes)
    with np.errstate(invalid="ignore"):
        return np.nanmean(mat, axis=0)


def interdaily_stability(series: MinuteSeries, bin_minutes: int = 60) -> float:
    """IS: between-clock-hour variance over total variance of binned data.

    IS = (N * sum_h (xbar_h - xbar)^2) / (p * sum_i (x_i - xbar)^2), where
    x_i are the N non-missing day-hour values, xbar_h the per-clock-hour
    means over days (p hours with data) and xbar the grand mean.
    """
    if _n_retained(series) < 2:
        raise InsufficientData("IS needs at least two retained days")
    mat = _day_bin_matrix(series, bin_minutes)
    present = ~np.isnan(mat)
    n_total = int(present.sum())
    if n_total < 2:
        raise InsufficientData("IS needs at least two binned values")
    xbar = float(np.nansum(mat) / n_total)
    with np.errstate(invalid="ignore"):
        hour_means = np.nanmean(mat, axis=0)
    p = int((~np.isnan(hour_means)).sum())
    s_hours = float(np.nansum((hour_means - xbar) ** 2))
    s_total = float(np.nansum((mat - xbar) ** 2))
    if s_total == 0.0:
        raise ZeroVariance("IS undefined for constant data")
    return (n_total * s_hours) / (p * s_total)


def intradaily_variability(series: MinuteSeries, bin_minutes: int = 60) -> float:
    """IV: normalized first-difference variance of the binned hour sequence.

    IV = (N * sum of squared adjacent differences) / ((N-1) * total sum of
    squares), skipping pairs that straddle a missing bin or a gap between
    non-consecutive retained days.
    """
    if _n_retained(series) < 2:
        raise InsufficientData("IV needs at least two retained days")
    mat = _day_bin_matrix(series, bin_minutes)
    days = series.retained_day_indices()
    present = ~np.isnan(mat)
    n_total = int(present.sum())
    if n_total < 2:
        raise InsufficientData("IV needs at least two binned values")
    xbar = float(np.nansum(mat) / n_total)
    s_total = float(np.nansum((mat - xbar) ** 2))
    if s_total == 0.0:
        raise ZeroVariance("IV undefined for constant data")

    diff_sq = 0.0
    n_pairs = 0
    prev_val: float | None = None
    prev_day: int | None = None
    n_bins = mat.shape[1]
    for row, k in enumerate(days):
        if prev_day is not None and k != prev_day + 1:
            prev_val = None  # day gap: do not pair across it
        for b in range(n_bins):
            v = mat[row, b]
            if np.isnan(v):
                prev_val = None
                continue
            if prev_val is not None:
                diff_sq += (v - prev_val) ** 2
                n_pairs += 1
            prev_val = float(v)
        prev_day = k
    if n_pairs == 0:
        raise InsufficientData("IV needs at least one adjacent bin pair")
    return (n_total * diff_sq) / ((n_total - 1) * s_total)


def _average_day_profile(series: MinuteSeries) -> np.ndarray:
    """Mean ENMO per local clock minute over retained days (wear only)."""
    if series.retained_days is None:
        day_mask = np.ones(series.n_days, dtype=bool)
    else:
        day_mask = series.retained_days
    return _profile_for_days(series, day_mask)


def _tied_onset(window_means: np.ndarray, optimum: float) -> int:
    """Earliest start of the maximal circular run of tied-optimal windows.

    A single tied window gives its own start. When a stretch of consecutive
    starts ties (e.g. a flat night), the stretch's first minute is reported,
    wrapping across midnight; a full-circle tie reports 0.
    """
    tied = window_means == optimum
    if tied.all():
        return 0
    prev = np.roll(tied, 1)
    starts = np.flatnonzero(tied & ~prev)
    return int(starts.min())


def m10_l5(series: MinuteSeries, mode: str = "average"
           ) -> tuple[float, int, float, int]:
    """Most-active 10 h and least-active 5 h of the average day.

    Circular rolling windows over the 1440-minute average-day profile
    (``mode="average"``, default) or per retained day then averaged
    (``mode="per-day"``). Returns (m10_mg, m10_onset, l5_mg, l5_onset).
    """
    if mode not in ("average", "per-day"):
        raise ValueError(f"unknown m10/l5 mode: {mode!r}")
    if _n_retained(series) < 1:
        raise InsufficientData("M10/L5 need at least one retained day")

    if mode == "per-day":
        vals_m10, on_m10, vals_l5, on_l5 = [], [], [], []
        for k in series.retained_day_indices():
            one = np.zeros(series.n_days, dtype=bool)
            one[k] = True
            sub = _profile_for_days(series, one)
            try:
                m10v, m10o, l5v, l5o = _scan_profile(sub)
            except ProfileIncomplete:
                continue
            vals_m10.append(m10v)
            on_m10.append(m10o)
            vals_l5.append(l5v)
            on_l5.append(l5o)
        if not vals_m10:
            raise ProfileIncomplete("no day with a sufficiently complete profile")
        return (float(np.mean(vals_m10)), _circular_mean_minute(on_m10),
                float(np.mean(vals_l5)), _circular_mean_minute(on_l5))

    prof = _average_day_profile(series)
    return _scan_profile(prof)


def _profile_for_days(series: MinuteSeries, day_mask: np.ndarray) -> np.ndarray:
    mask = series.wear.copy()
    for k in range(series.n_days):
        if not day_mask[k]:
            mask[series.day_slice(k)] = False
    mod = series.local_minute_of_day
    counts = np.bincount(mod[mask], minlength=1440).astype(np.float64)
    sums = np.bincount(mod[mask], weights=series.enmo_mg[mask], minlength=1440)
    with np.errstate(invalid="ignore"):
        return np.where(counts > 0, sums / np.maximum(counts, 1.0), np.nan)


def _scan_profile(prof: np.ndarray) -> tuple[float, int, float, int]:
    missing = np.isnan(prof)
    if missing.mean() > 0.2:
        raise ProfileIncomplete(
            f"{missing.sum()} of 1440 profile minutes missing (> 20%)")
    ext = np.concatenate([prof, prof])
    with np.errstate(invalid="ignore"):
        means10 = np.array([np.nanmean(ext[s:s + M10_WINDOW_MIN])
                            for s in range(1440)])
        means5 = np.array([np.nanmean(ext[s:s + L5_WINDOW_MIN])
                           for s in range(1440)])
    m10 = float(np.max(means10))
    l5 = float(np.min(means5))
    return (m10, _tied_onset(means10, m10), l5, _tied_onset(-means5, -l5))


def _circular_mean_minute(onsets: list[int]) -> int:
    ang = np.asarray(onsets, dtype=np.float64) * OMEGA
    mean_ang = math.atan2(float(np.mean(np.sin(ang))),
                          float(np.mean(np.cos(ang))))
    return int(round((mean_ang / OMEGA) % 1440.0)) % 1440


def relative_amplitude(m10_mg: float, l5_mg: float) -> float:
    """RA = (M10 - L5) / (M10 + L5); requires m10 >= l5 >= 0."""
    if not (m10_mg >= l5_mg >= 0):
        raise ValueError("expected m10 >= l5 >= 0")
    denom = m10_mg + l5_mg
    if denom == 0:
        raise ZeroDenominator("M10 + L5 is zero; RA undefined")
    return (m10_mg - l5_mg) / denom
