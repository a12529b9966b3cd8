"""RecordBatch -> canonical minute-level ENMO series.

The minute grid is anchored at the local midnight of the first day containing
data and runs to the end of the last such day. Minutes are consecutive UTC
minutes, so DST days keep their true minute count (1380/1500). Wear
detection fills the wear mask; day completeness gates metric computation.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta, tzinfo

import numpy as np

from .errors import ConfigError, EmptyBatch, NoCompleteDays, NonFinite, SpanTooLong
from .ingest import RecordBatch, resolve_zone

MAX_SPAN_DAYS = 370


@dataclass
class PreprocessConfig:
    nonwear_enmo_threshold_mg: float = 1.0
    nonwear_min_block_minutes: int = 90
    raw_nonwear_std_mg: float = 13.0
    raw_nonwear_window_minutes: int = 60
    raw_nonwear_axes_required: int = 2
    min_day_coverage: float = 0.8
    max_gap_interpolate_minutes: int = 5

    def validate(self) -> "PreprocessConfig":
        problems = {}
        for name in ("nonwear_enmo_threshold_mg", "nonwear_min_block_minutes",
                     "raw_nonwear_std_mg", "raw_nonwear_window_minutes",
                     "max_gap_interpolate_minutes"):
            if getattr(self, name) <= 0:
                problems[name] = "must be > 0"
        if not (0 < self.min_day_coverage <= 1):
            problems["min_day_coverage"] = "must be in (0, 1]"
        if self.raw_nonwear_axes_required not in (1, 2, 3):
            problems["raw_nonwear_axes_required"] = "must be 1, 2 or 3"
        if problems:
            raise ConfigError("invalid preprocess config", fields=problems)
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class MinuteSeries:
    """Minute-grid ENMO with wear mask and local-time anchoring.

    ``enmo_mg[i]`` belongs to the UTC minute starting at
    ``start_epoch_millis + i*60000``; NaN marks a gap. ``day_starts`` holds
    the minute offset of each local day boundary (n_days + 1 entries).
    """

    start_epoch_millis: int
    timezone: str | int
    enmo_mg: np.ndarray
    wear: np.ndarray
    observed: np.ndarray
    interpolated: np.ndarray
    day_starts: np.ndarray
    day_dates: list[date]
    local_minute_of_day: np.ndarray
    wear_filled: bool = False
    retained_days: np.ndarray | None = None
    day_coverage: np.ndarray | None = None

    @property
    def n_minutes(self) -> int:
        return int(self.enmo_mg.shape[0])

    @property
    def n_days(self) -> int:
        return len(self.day_dates)

    @property
    def tz(self) -> tzinfo:
        return resolve_zone(self.timezone)

    def day_slice(self, k: int) -> slice:
        return slice(int(self.day_starts[k]), int(self.day_starts[k + 1]))

    def minute_epoch_millis(self, i: int) -> int:
        return self.start_epoch_millis + int(i) * 60000

    def retained_day_indices(self) -> list[int]:
        if self.retained_days is None:
            return list(range(self.n_days))
        return [k for k in range(self.n_days) if self.retained_days[k]]


def compute_enmo(ax, ay, az):
    """Euclidean norm minus one, truncated at zero, in milli-g.

    Accepts scalars or arrays (in g); no-motion gravity (norm 1) maps to 0.
    """
    ax = np.asarray(ax, dtype=np.float64)
    ay = np.asarray(ay, dtype=np.float64)
    az = np.asarray(az, dtype=np.float64)
    if not (np.isfinite(ax).all() and np.isfinite(ay).all()
            and np.isfinite(az).all()):
        raise NonFinite("acceleration values must be finite")
    norm = np.sqrt(ax * ax + ay * ay + az * az)
    enmo = np.maximum(norm - 1.0, 0.0) * 1000.0
    if enmo.ndim == 0:
        return float(enmo)
    return enmo


def _midnight_epoch_ms(d: date, tz: tzinfo) -> int:
    ts = datetime.combine(d, time(0, 0), tzinfo=tz).timestamp()
    return int(round(ts / 60.0)) * 60000


def _local_minutes_of_day(start_ms: int, day_starts: np.ndarray,
                          tz: tzinfo) -> np.ndarray:
    """Local clock minute of day for every grid minute.

    Uses a constant UTC offset per day when the offset matches at both day
    edges; otherwise (DST transition day) converts minute by minute.
    """
    n = int(day_starts[-1])
    out = np.empty(n, dtype=np.int32)
    for k in range(len(day_starts) - 1):
        s, e = int(day_starts[k]), int(day_starts[k + 1])
        t0 = datetime.fromtimestamp((start_ms + s * 60000) / 1000.0, tz)
        t1 = datetime.fromtimestamp((start_ms + (e - 1) * 60000) / 1000.0, tz)
        if t0.utcoffset() == t1.utcoffset():
            off_min = int(t0.utcoffset().total_seconds()) // 60
            base = (start_ms // 60000 + np.arange(s, e, dtype=np.int64)
                    + off_min)
            out[s:e] = (base % 1440).astype(np.int32)
        else:
            for i in range(s, e):
                lt = datetime.fromtimestamp((start_ms + i * 60000) / 1000.0, tz)
                out[i] = lt.hour * 60 + lt.minute
    return out


def aggregate_minutes(batch: RecordBatch, config: PreprocessConfig | None = None,
                      zone: str | int | None = None) -> MinuteSeries:
    """Aggregate sample-level records to the canonical minute grid.

    Per-minute value = mean of sample ENMO within the local minute; minutes
    without samples are gaps, and gaps no longer than
    ``max_gap_interpolate_minutes`` with data on both sides are linearly
    interpolated (flagged, wear decided later).
    """
    config = (config or PreprocessConfig()).validate()
    if len(batch) == 0:
        raise EmptyBatch("no records to aggregate")
    tz_spec = zone if zone is not None else batch.timezone
    tz = resolve_zone(tz_spec)

    if batch.xyz_g is not None:
        enmo = compute_enmo(batch.xyz_g[:, 0], batch.xyz_g[:, 1],
                            batch.xyz_g[:, 2])
    else:
        enmo = np.asarray(batch.enmo_mg, dtype=np.float64)

    first_day = datetime.fromtimestamp(int(batch.epoch_millis[0]) / 1000.0, tz).date()
    last_day = datetime.fromtimestamp(int(batch.epoch_millis[-1]) / 1000.0, tz).date()
    span = (last_day - first_day).days + 1
    if span > MAX_SPAN_DAYS:
        raise SpanTooLong(f"recording spans {span} days (limit {MAX_SPAN_DAYS})")

    dates = [first_day + timedelta(days=i) for i in range(span)]
    midnights = np.array(
        [_midnight_epoch_ms(d, tz) for d in dates + [last_day + timedelta(days=1)]],
        dtype=np.int64,
    )
    start_ms = int(midnights[0])
    day_starts = ((midnights - start_ms) // 60000).astype(np.int64)
    n = int(day_starts[-1])

    idx = (batch.epoch_millis - start_ms) // 60000
    counts = np.bincount(idx, minlength=n).astype(np.float64)
    sums = np.bincount(idx, weights=enmo, minlength=n)
    values = np.divide(sums, counts, out=np.full(n, np.nan), where=counts > 0)
    observed = counts > 0

    interpolated = np.zeros(n, dtype=bool)
    gap = ~observed
    if gap.any():
        edges = np.flatnonzero(np.diff(np.concatenate(([False], gap, [False]))))
        for run_start, run_end in zip(edges[::2], edges[1::2]):
            length = run_end - run_start
            if (length <= config.max_gap_interpolate_minutes
                    and run_start > 0 and run_end < n):
                left, right = values[run_start - 1], values[run_end]
                xs = np.arange(1, length + 1, dtype=np.float64)
                values[run_start:run_end] = (
                    left + (right - left) * xs / (length + 1)
                )
                interpolated[run_start:run_end] = True

    wear = observed | interpolated
    local_mod = _local_minutes_of_day(start_ms, day_starts, tz)

    return MinuteSeries(
        start_epoch_millis=start_ms,
        timezone=tz_spec,
        enmo_mg=values,
        wear=wear,
        observed=observed,
        interpolated=interpolated,
        day_starts=day_starts,
        day_dates=dates,
        local_minute_of_day=local_mod,
        wear_filled=False,
    )


def _mark_runs(candidate: np.ndarray, min_len: int) -> np.ndarray:
    """True over every maximal run of candidate minutes of length >= min_len."""
    out = np.zeros(candidate.shape[0], dtype=bool)
    edges = np.flatnonzero(np.diff(np.concatenate(([False], candidate, [False]))))
    for s, e in zip(edges[::2], edges[1::2]):
        if e - s >= min_len:
            out[s:e] = True
    return out


def detect_nonwear(series: MinuteSeries, raw: RecordBatch | None = None,
                   config: PreprocessConfig | None = None) -> MinuteSeries:
    """Fill the wear mask.

    With raw triaxial data: sliding windows (15-minute step) are non-wear
    when the per-axis sample standard deviation is below the threshold for
    enough axes. ENMO-only: sustained low-ENMO runs are non-wear. Gap
    minutes are always non-wear. Depends only on the data, so reapplication
    is idempotent.
    """
    config = (config or PreprocessConfig()).validate()
    n = series.n_minutes
    has_value = series.observed | series.interpolated

    if raw is not None and raw.xyz_g is not None:
        window = int(config.raw_nonwear_window_minutes)
        step = 15
        nonwear = np.zeros(n, dtype=bool)
        if n >= window:
            idx = (raw.epoch_millis - series.start_epoch_millis) // 60000
            ok = (idx >= 0) & (idx < n)
            idx = idx[ok]
            xyz = raw.xyz_g[ok]
            cnt = np.bincount(idx, minlength=n)
            c_cum = np.concatenate(([0], np.cumsum(cnt)))
            starts = list(range(0, n - window + 1, step))
            if starts[-1] != n - window:
                starts.append(n - window)
            sums = []
            sqs = []
            for a in range(3):
                s = np.bincount(idx, weights=xyz[:, a], minlength=n)
                q = np.bincount(idx, weights=xyz[:, a] ** 2, minlength=n)
                sums.append(np.concatenate(([0.0], np.cumsum(s))))
                sqs.append(np.concatenate(([0.0], np.cumsum(q))))
            for s0 in starts:
                c = c_cum[s0 + window] - c_cum[s0]
                if c == 0:
                    continue
                low_axes = 0
                for a in range(3):
                    tot = sums[a][s0 + window] - sums[a][s0]
                    tot2 = sqs[a][s0 + window] - sqs[a][s0]
                    var = max(tot2 / c - (tot / c) ** 2, 0.0)
                    std_mg = np.sqrt(var) * 1000.0
                    if std_mg < config.raw_nonwear_std_mg:
                        low_axes += 1
                if low_axes >= config.raw_nonwear_axes_required:
                    nonwear[s0:s0 + window] = True
    else:
        low = np.zeros(n, dtype=bool)
        low[has_value] = (series.enmo_mg[has_value]
                          <= config.nonwear_enmo_threshold_mg)
        candidate = low | ~has_value
        nonwear = _mark_runs(candidate, int(config.nonwear_min_block_minutes))

    wear = has_value & ~nonwear
    return dataclasses.replace(series, wear=wear, wear_filled=True)


@dataclass
class ExcludedDay:
    day_index: int
    date: str
    coverage: float
    reason: str

    def to_dict(self) -> dict:
        return {"day_index": self.day_index, "date": self.date,
                "coverage": self.coverage, "reason": self.reason}


def select_complete_days(series: MinuteSeries,
                         config: PreprocessConfig | None = None
                         ) -> tuple[MinuteSeries, list[ExcludedDay]]:
    """Mark days whose wear coverage meets ``min_day_coverage``.

    Excluded days stay in the series (plotting) but are dropped from metric
    computation. Raises NoCompleteDays when nothing survives.
    """
    config = (config or PreprocessConfig()).validate()
    if not series.wear_filled:
        raise ValueError("wear mask not filled; run detect_nonwear first")
    n_days = series.n_days
    coverage = np.empty(n_days)
    for k in range(n_days):
        sl = series.day_slice(k)
        coverage[k] = float(np.mean(series.wear[sl]))
    retained = coverage >= config.min_day_coverage
    report = [
        ExcludedDay(k, series.day_dates[k].isoformat(), float(coverage[k]),
                    f"wear coverage {coverage[k]:.2f} below "
                    f"{config.min_day_coverage:.2f}")
        for k in range(n_days) if not retained[k]
    ]
    if not retained.any():
        raise NoCompleteDays(
            f"all {n_days} days below coverage threshold "
            f"{config.min_day_coverage:.2f}")
    out = dataclasses.replace(series, retained_days=retained,
                              day_coverage=coverage)
    return out, report


# --- intermediate artifact serialization ----------------------------------

def minute_csv(series: MinuteSeries) -> str:
    """Two-column minute CSV: local timestamp, enmo_mg (blank for gaps)."""
    tz = series.tz
    lines = ["timestamp,enmo_mg"]
    for i in range(series.n_minutes):
        ts = datetime.fromtimestamp(series.minute_epoch_millis(i) / 1000.0, tz)
        v = series.enmo_mg[i]
        lines.append(f"{ts.isoformat()},{'' if np.isnan(v) else repr(float(v))}")
    return "\n".join(lines) + "\n"


def wear_csv(series: MinuteSeries) -> str:
    """Wear-mask sidecar: local timestamp, wear flag (1/0)."""
    tz = series.tz
    lines = ["timestamp,wear"]
    for i in range(series.n_minutes):
        ts = datetime.fromtimestamp(series.minute_epoch_millis(i) / 1000.0, tz)
        lines.append(f"{ts.isoformat()},{1 if series.wear[i] else 0}")
    return "\n".join(lines) + "\n"
