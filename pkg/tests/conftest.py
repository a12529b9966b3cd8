"""Shared builders for synthetic recordings and minute series."""

from __future__ import annotations

import datetime
from dataclasses import replace

import numpy as np
import pytest

from cosinorage.ingest import RecordBatch, resolve_zone
from cosinorage.preprocess import (MinuteSeries, PreprocessConfig,
                                   aggregate_minutes, detect_nonwear,
                                   select_complete_days)


def minute_epochs(n_minutes: int, start: str = "2024-01-01",
                  tz: str = "UTC") -> np.ndarray:
    """Epoch millis of consecutive minutes from local midnight of start."""
    zone = resolve_zone(tz)
    d = datetime.date.fromisoformat(start)
    midnight = datetime.datetime.combine(d, datetime.time(0), tzinfo=zone)
    t0 = int(midnight.timestamp()) * 1000
    return t0 + 60000 * np.arange(n_minutes, dtype=np.int64)


def enmo_batch(values, start: str = "2024-01-01", tz: str = "UTC"
               ) -> RecordBatch:
    """Minute-level ENMO batch; NaN values become missing rows (gaps)."""
    values = np.asarray(values, dtype=np.float64)
    epochs = minute_epochs(values.shape[0], start=start, tz=tz)
    keep = np.isfinite(values)
    return RecordBatch(epoch_millis=epochs[keep], xyz_g=None,
                       enmo_mg=values[keep], timezone=tz,
                       n_rows_seen=int(keep.sum()))


def series_from_minutes(values, start: str = "2024-01-01", tz: str = "UTC",
                        wear=None, config: PreprocessConfig | None = None
                        ) -> MinuteSeries:
    """MinuteSeries with full control of the wear mask.

    By default every observed minute is wear (zeros included), which is
    what the metric fixtures assume; pass an explicit boolean mask to
    carve out non-wear stretches.
    """
    cfg = config or PreprocessConfig()
    series = aggregate_minutes(enmo_batch(values, start=start, tz=tz),
                               config=cfg)
    if wear is None:
        mask = series.observed | series.interpolated
    else:
        mask = np.asarray(wear, dtype=bool).copy()
    series = replace(series, wear=mask, wear_filled=True)
    series, _ = select_complete_days(series, cfg)
    return series


def pipeline_series(values, start: str = "2024-01-01", tz: str = "UTC",
                    config: PreprocessConfig | None = None) -> MinuteSeries:
    """MinuteSeries through the real wear-detection path."""
    cfg = config or PreprocessConfig()
    series = aggregate_minutes(enmo_batch(values, start=start, tz=tz),
                               config=cfg)
    series = detect_nonwear(series, config=cfg)
    series, _ = select_complete_days(series, cfg)
    return series


def daily_pattern(pattern, n_days: int) -> np.ndarray:
    """Tile a 1440-minute clock pattern over n_days."""
    pattern = np.asarray(pattern, dtype=np.float64)
    assert pattern.shape == (1440,)
    return np.tile(pattern, n_days)


def sinusoid_pattern(mesor: float = 30.0, amplitude: float = 20.0,
                     peak_minute: float = 840.0) -> np.ndarray:
    t = np.arange(1440, dtype=np.float64)
    return mesor + amplitude * np.cos(
        2.0 * np.pi * (t - peak_minute) / 1440.0)


def minute_csv_text(values, start: str = "2024-01-01", tz: str = "UTC",
                    header: str = "timestamp,enmo") -> str:
    """Minute-level two-column CSV (unix seconds, ENMO mg)."""
    values = np.asarray(values, dtype=np.float64)
    epochs = minute_epochs(values.shape[0], start=start, tz=tz)
    lines = [header]
    for ep, v in zip(epochs, values):
        if np.isfinite(v):
            lines.append(f"{ep // 1000},{v!r}")
    return "\n".join(lines) + "\n"


@pytest.fixture
def rng():
    return np.random.default_rng(20240521)
