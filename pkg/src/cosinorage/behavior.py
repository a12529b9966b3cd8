"""Activity intensity durations and sleep metrics from the minute series.

Sleep days run noon to noon so a typical main sleep is never split by the
day boundary. One main sleep window per night; naps are out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InsufficientData, NoSleepDetected
from .preprocess import MinuteSeries

INTENSITY_LEVELS = ("sedentary", "light", "moderate", "vigorous")


@dataclass
class Cutpoints:
    """Half-open ENMO intensity buckets; each boundary belongs to the upper
    bucket: sedentary [0, light), light [light, moderate), moderate
    [moderate, vigorous), vigorous [vigorous, inf)."""
    light_mg: float = 30.0
    moderate_mg: float = 100.0
    vigorous_mg: float = 400.0

    def validate(self) -> None:
        if not (0.0 < self.light_mg < self.moderate_mg < self.vigorous_mg):
            raise ConfigError(
                "cutpoints must satisfy 0 < light < moderate < vigorous",
                fields={"cutpoint_light_mg": self.light_mg,
                        "cutpoint_moderate_mg": self.moderate_mg,
                        "cutpoint_vigorous_mg": self.vigorous_mg})

    def edges(self) -> np.ndarray:
        return np.array([self.light_mg, self.moderate_mg, self.vigorous_mg])

    def to_dict(self) -> dict:
        return {
            "cutpoint_light_mg": self.light_mg,
            "cutpoint_moderate_mg": self.moderate_mg,
            "cutpoint_vigorous_mg": self.vigorous_mg,
        }


@dataclass
class SleepConfig:
    sleep_enmo_threshold_mg: float = 10.0
    smoothing_window_min: int = 5
    min_window_min: int = 180
    max_interruption_min: int = 60
    onset_run_min: int = 5

    def validate(self) -> None:
        bad = {}
        for name in ("sleep_enmo_threshold_mg", "smoothing_window_min",
                     "min_window_min", "max_interruption_min",
                     "onset_run_min"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v > 0):
                bad[name] = v
        if bad:
            raise ConfigError("sleep parameters must be positive", fields=bad)

    def to_dict(self) -> dict:
        return {
            "sleep_enmo_threshold_mg": self.sleep_enmo_threshold_mg,
            "smoothing_window_min": self.smoothing_window_min,
            "min_window_min": self.min_window_min,
            "max_interruption_min": self.max_interruption_min,
            "onset_run_min": self.onset_run_min,
        }


@dataclass
class ActivityMetrics:
    """Mean wear minutes per intensity bucket over retained days."""
    sedentary_min: float
    lpa_min: float
    mpa_min: float
    vpa_min: float
    per_day: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "sedentary_min": self.sedentary_min,
            "lpa_min": self.lpa_min,
            "mpa_min": self.mpa_min,
            "vpa_min": self.vpa_min,
        }


@dataclass
class SleepWindow:
    night_id: str          # local date of the noon that opens the period
    start_minute: int      # absolute index into the series, inclusive
    end_minute: int        # absolute index, exclusive
    labels: np.ndarray     # bool per window minute, True = sleep

    @property
    def length_min(self) -> int:
        return self.end_minute - self.start_minute


@dataclass
class SleepMetrics:
    """Per-night sleep summary, averaged over analyzed nights."""
    tst_min: float
    waso_min: float
    pta_percent: float
    nwb_count: float
    sol_min: float
    nights_analyzed: int
    per_night: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "tst_min": self.tst_min,
            "waso_min": self.waso_min,
            "pta_percent": self.pta_percent,
            "nwb_count": self.nwb_count,
            "sol_min": self.sol_min,
            "nights_analyzed": self.nights_analyzed,
        }


def classify_intensity(enmo_mg: float, cutpoints: Cutpoints | None = None) -> str:
    if cutpoints is None:
        cutpoints = Cutpoints()
    if not enmo_mg >= 0:
        raise ValueError(f"enmo must be >= 0, got {enmo_mg}")
    idx = int(np.searchsorted(cutpoints.edges(), enmo_mg, side="right"))
    return INTENSITY_LEVELS[idx]


def activity_durations(series: MinuteSeries,
                       cutpoints: Cutpoints | None = None) -> ActivityMetrics:
    """Wear minutes per intensity bucket, per retained day, then averaged.

    Non-wear minutes land in no bucket, so per-day bucket sums equal that
    day's wear minutes exactly.
    """
    if cutpoints is None:
        cutpoints = Cutpoints()
    cutpoints.validate()
    days = series.retained_day_indices()
    if len(days) == 0:
        raise InsufficientData("activity durations need >= 1 retained day")
    edges = cutpoints.edges()
    per_day = []
    totals = np.zeros(4)
    for k in days:
        sl = series.day_slice(k)
        vals = series.enmo_mg[sl][series.wear[sl]]
        buckets = np.searchsorted(edges, vals, side="right")
        counts = np.bincount(buckets, minlength=4)
        totals += counts
        per_day.append({
            "date": series.day_dates[k].isoformat(),
            "sedentary_min": int(counts[0]),
            "lpa_min": int(counts[1]),
            "mpa_min": int(counts[2]),
            "vpa_min": int(counts[3]),
            "wear_min": int(vals.shape[0]),
        })
    means = totals / len(days)
    return ActivityMetrics(sedentary_min=float(means[0]),
                           lpa_min=float(means[1]),
                           mpa_min=float(means[2]),
                           vpa_min=float(means[3]),
                           per_day=per_day)


def _rolling_median(values: np.ndarray, window: int) -> np.ndarray:
    """Centered rolling median, NaN-skipping, truncated at the edges."""
    n = values.shape[0]
    half = window // 2
    out = np.full(n, np.nan)
    for i in range(n):
        lo = max(0, i - half)
        hi = min(n, i + half + 1)
        chunk = values[lo:hi]
        good = chunk[~np.isnan(chunk)]
        if good.shape[0]:
            out[i] = np.median(good)
    return out


def _noon_starts(series: MinuteSeries) -> list[tuple[int, int]]:
    """(day index, absolute index) of each day's first local-noon minute."""
    noons = []
    for k in range(series.n_days):
        sl = series.day_slice(k)
        mod = series.local_minute_of_day[sl.start:sl.stop]
        at = np.flatnonzero(mod >= 720)
        if at.shape[0]:
            noons.append((k, sl.start + int(at[0])))
    return noons


def detect_sleep_windows(series: MinuteSeries,
                         config: SleepConfig | None = None,
                         min_coverage: float = 0.8) -> list[SleepWindow]:
    """Main sleep window per noon-to-noon period.

    Per period: smooth ENMO with a centered rolling median, mark candidate
    minutes (smoothed < threshold and wear), merge candidate runs separated
    by non-candidate stretches of at most max_interruption_min, keep the
    merged run with the most candidate minutes (tie: earliest), and discard
    it when its span is under min_window_min. Labels use the unsmoothed
    threshold. Periods with wear coverage below min_coverage are skipped.

    Raises NoSleepDetected when no period yields a window.
    """
    if config is None:
        config = SleepConfig()
    config.validate()
    if not series.wear_filled:
        raise ValueError("run nonwear detection before sleep detection")
    noons = _noon_starts(series)
    windows: list[SleepWindow] = []
    thr = config.sleep_enmo_threshold_mg
    for p in range(len(noons) - 1):
        (day_k, start), (_, end) = noons[p], noons[p + 1]
        wear = series.wear[start:end]
        if wear.mean() < min_coverage:
            continue
        smoothed = _rolling_median(series.enmo_mg[start:end],
                                   int(config.smoothing_window_min))
        with np.errstate(invalid="ignore"):
            candidate = (smoothed < thr) & wear
        span = _best_merged_run(candidate, int(config.max_interruption_min))
        if span is None:
            continue
        w_start, w_end = span
        if w_end - w_start < config.min_window_min:
            continue
        raw = series.enmo_mg[start + w_start:start + w_end]
        with np.errstate(invalid="ignore"):
            labels = np.where(np.isnan(raw), False, raw < thr) \
                & series.wear[start + w_start:start + w_end]
        night_id = series.day_dates[day_k].isoformat()
        windows.append(SleepWindow(night_id=night_id,
                                   start_minute=start + w_start,
                                   end_minute=start + w_end,
                                   labels=labels))
    if not windows:
        raise NoSleepDetected("no sleep window of sufficient length found")
    return windows


def _best_merged_run(candidate: np.ndarray,
                     max_interruption: int) -> tuple[int, int] | None:
    """(start, end) of the merged candidate run with most candidate minutes.

    Candidate runs separated by gaps of at most max_interruption minutes
    merge into one window; ties resolve to the earliest start.
    """
    padded = np.concatenate([[False], candidate, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    if edges.shape[0] == 0:
        return None
    starts, ends = edges[::2], edges[1::2]
    best: tuple[int, int] | None = None
    best_total = -1
    i = 0
    n_runs = starts.shape[0]
    while i < n_runs:
        j = i
        total = int(ends[i] - starts[i])
        while j + 1 < n_runs and starts[j + 1] - ends[j] <= max_interruption:
            j += 1
            total += int(ends[j] - starts[j])
        if total > best_total:
            best_total = total
            best = (int(starts[i]), int(ends[j]))
        i = j + 1
    return best


def sleep_metrics(windows: list[SleepWindow],
                  config: SleepConfig | None = None) -> SleepMetrics:
    """Per-night SOL/TST/WASO/NWB/PTA, averaged over nights.

    SOL = minutes from window start to the first run of onset_run_min
    consecutive sleep minutes (window length when no such run exists);
    TST = sleep minutes from onset on; WASO = wake minutes between onset
    and the last sleep minute; NWB = wake bouts in that span;
    PTA = 100 * TST / window length. Per night,
    TST + WASO + SOL + trailing wake = window length exactly.
    """
    if config is None:
        config = SleepConfig()
    if not windows:
        raise ValueError("sleep_metrics needs at least one window")
    run_min = int(config.onset_run_min)
    per_night = []
    for w in windows:
        labels = w.labels
        n = labels.shape[0]
        onset = _first_sleep_run(labels, run_min)
        if onset is None:
            night = {"sol_min": n, "tst_min": 0, "waso_min": 0,
                     "nwb_count": 0, "pta_percent": 0.0}
        else:
            sleep_idx = np.flatnonzero(labels[onset:]) + onset
            last = int(sleep_idx[-1])
            tst = int(sleep_idx.shape[0])
            span = labels[onset:last + 1]
            waso = int((~span).sum())
            wake_pad = np.concatenate([[False], ~span, [False]])
            nwb = int((np.diff(wake_pad.astype(np.int8)) == 1).sum())
            night = {"sol_min": onset, "tst_min": tst, "waso_min": waso,
                     "nwb_count": nwb,
                     "pta_percent": 100.0 * tst / n}
        night["night_id"] = w.night_id
        night["window_min"] = n
        night["window_start"] = w.start_minute
        night["window_end"] = w.end_minute
        per_night.append(night)

    def mean(key: str) -> float:
        return float(np.mean([night[key] for night in per_night]))

    return SleepMetrics(tst_min=mean("tst_min"), waso_min=mean("waso_min"),
                        pta_percent=mean("pta_percent"),
                        nwb_count=mean("nwb_count"), sol_min=mean("sol_min"),
                        nights_analyzed=len(per_night), per_night=per_night)


def _first_sleep_run(labels: np.ndarray, run_min: int) -> int | None:
    """Start index of the first run of >= run_min consecutive sleep minutes."""
    count = 0
    for i, v in enumerate(labels):
        count = count + 1 if v else 0
        if count >= run_min:
            return i - run_min + 1
    return None
