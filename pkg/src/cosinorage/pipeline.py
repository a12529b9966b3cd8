"""End-to-end single-subject runs: ingest -> preprocess -> rhythm ->
behavior (-> clock), report assembly, and the canonical JSON serializer
shared by the CLI and the HTTP service."""

from __future__ import annotations

import datetime
import json
from dataclasses import dataclass, field

import numpy as np

from ._version import __version__
from .behavior import (Cutpoints, SleepConfig, activity_durations,
                       detect_sleep_windows, sleep_metrics)
from .clock import load_default_weights, load_weights, predict_cosinorage, select_variant
from .errors import (InsufficientData, NoSleepDetected, PipelineError,
                     ProfileIncomplete, ZeroDenominator, ZeroVariance)
from .featureset import FeatureSet
from .ingest import SchemaConfig, apply_device_preset, parse_csv
from .preprocess import (PreprocessConfig, aggregate_minutes, detect_nonwear,
                         select_complete_days)
from .rhythm import (NonparamMetrics, evaluate_cosinor, fit_cosinor,
                     interdaily_stability, intradaily_variability, m10_l5,
                     relative_amplitude)

REPORT_SCHEMA = "cosinorage-report-v1"

_SOFT_ERRORS = (ZeroVariance, InsufficientData, ProfileIncomplete,
                ZeroDenominator, NoSleepDetected)


class StageError(Exception):
    """A pipeline stage failed with a typed error."""

    def __init__(self, stage: str, error: PipelineError):
        super().__init__(f"{stage}: {error}")
        self.stage = stage
        self.error = error

    def to_dict(self) -> dict:
        out = {"stage": self.stage}
        out.update(self.error.to_dict())
        return out


def canonical_json(obj) -> str:
    """The one serializer: construction-ordered keys, 2-space indent,
    shortest round-trip float text, no NaN/Infinity. Identical dicts give
    identical bytes, which is what output parity tests compare."""
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _default_schema() -> SchemaConfig:
    return apply_device_preset("generic-raw")


@dataclass
class PipelineConfig:
    schema: SchemaConfig = field(default_factory=_default_schema)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    sleep: SleepConfig = field(default_factory=SleepConfig)
    cutpoints: Cutpoints = field(default_factory=Cutpoints)
    m10l5_mode: str = "average"
    bin_minutes: int = 60

    def validate(self) -> None:
        self.schema.validate()
        self.preprocess.validate()
        self.sleep.validate()
        self.cutpoints.validate()
        if self.m10l5_mode not in ("average", "per-day"):
            raise ValueError(f"m10l5_mode must be 'average' or 'per-day', "
                             f"got {self.m10l5_mode!r}")
        if not (isinstance(self.bin_minutes, int) and self.bin_minutes > 0
                and 1440 % self.bin_minutes == 0):
            raise ValueError("bin_minutes must be a positive divisor of 1440")

    def parameters_dict(self) -> dict:
        """Echo of every knob, embedded verbatim in each report."""
        return {
            "schema": self.schema.to_dict(),
            "preprocess": self.preprocess.to_dict(),
            "sleep": self.sleep.to_dict(),
            "cutpoints": self.cutpoints.to_dict(),
            "m10l5_mode": self.m10l5_mode,
            "bin_minutes": self.bin_minutes,
        }


@dataclass
class FeatureResult:
    batch: object
    series: object
    excluded_days: list
    fit: object
    nonparam: NonparamMetrics
    activity: object
    sleep: object            # SleepMetrics or None
    features: FeatureSet
    metric_errors: list


def _soft(metric_errors: list, metric: str, fn):
    try:
        return fn()
    except _SOFT_ERRORS as e:
        metric_errors.append({"metric": metric, "code": e.code,
                              "message": str(e)})
        return None


def run_features(source, config: PipelineConfig | None = None) -> FeatureResult:
    """Run ingest through behavior. Hard stage failures raise StageError;
    metrics that are undefined on this data (constant signal, no sleep
    window, sparse profile) are recorded in metric_errors and reported as
    null instead of failing the run."""
    cfg = config if config is not None else PipelineConfig()
    cfg.validate()

    try:
        batch = parse_csv(source, cfg.schema)
    except PipelineError as e:
        raise StageError("ingest", e) from e

    try:
        series = aggregate_minutes(batch, config=cfg.preprocess)
        raw = batch if batch.kind == "triaxial" else None
        series = detect_nonwear(series, raw=raw, config=cfg.preprocess)
        series, excluded = select_complete_days(series, cfg.preprocess)
    except PipelineError as e:
        raise StageError("preprocess", e) from e

    metric_errors: list = []
    try:
        fit = fit_cosinor(series)
    except PipelineError as e:
        raise StageError("rhythm", e) from e

    is_ = _soft(metric_errors, "is",
                lambda: interdaily_stability(series, cfg.bin_minutes))
    iv = _soft(metric_errors, "iv",
               lambda: intradaily_variability(series, cfg.bin_minutes))
    scan = _soft(metric_errors, "m10_l5",
                 lambda: m10_l5(series, mode=cfg.m10l5_mode))
    if scan is None:
        m10 = m10_on = l5 = l5_on = ra = None
    else:
        m10, m10_on, l5, l5_on = scan
        ra = _soft(metric_errors, "ra",
                   lambda: relative_amplitude(m10, l5))
    nonparam = NonparamMetrics(is_=is_, iv=iv, m10_mg=m10,
                               m10_onset_minute=m10_on, l5_mg=l5,
                               l5_onset_minute=l5_on, ra=ra)

    try:
        activity = activity_durations(series, cfg.cutpoints)
    except PipelineError as e:
        raise StageError("behavior", e) from e

    sleep = None
    windows = _soft(metric_errors, "sleep",
                    lambda: detect_sleep_windows(
                        series, cfg.sleep,
                        min_coverage=cfg.preprocess.min_day_coverage))
    if windows is not None:
        sleep = sleep_metrics(windows, cfg.sleep)

    features = FeatureSet.assemble(cosinor=fit, nonparam=nonparam,
                                   activity=activity, sleep=sleep)
    if sleep is None:
        features.values["nights_analyzed"] = 0

    return FeatureResult(batch=batch, series=series, excluded_days=excluded,
                         fit=fit, nonparam=nonparam, activity=activity,
                         sleep=sleep, features=features,
                         metric_errors=metric_errors)


def _minute_iso(series, idx: int) -> str:
    ms = series.start_epoch_millis + 60000 * int(idx)
    dt = datetime.datetime.fromtimestamp(ms / 1000.0, tz=series.tz)
    return dt.isoformat(timespec="minutes")


def features_report(result: FeatureResult, config: PipelineConfig) -> dict:
    """The stable report dict; key order here is the serialization order."""
    series = result.series
    batch = result.batch
    days = []
    for k in range(series.n_days):
        days.append({
            "date": series.day_dates[k].isoformat(),
            "n_minutes": int(series.day_starts[k + 1] - series.day_starts[k]),
            "wear_coverage": float(series.day_coverage[k]),
            "retained": bool(series.retained_days[k]),
        })
    sleep_nights = []
    if result.sleep is not None:
        for night in result.sleep.per_night:
            sleep_nights.append({
                "night_id": night["night_id"],
                "window_start": _minute_iso(series, night["window_start"]),
                "window_end": _minute_iso(series, night["window_end"]),
                "window_min": int(night["window_min"]),
                "sol_min": float(night["sol_min"]),
                "tst_min": float(night["tst_min"]),
                "waso_min": float(night["waso_min"]),
                "nwb_count": int(night["nwb_count"]),
                "pta_percent": float(night["pta_percent"]),
            })
    return {
        "report_schema": REPORT_SCHEMA,
        "tool": {"name": "cosinorage", "version": __version__},
        "input": {
            "kind": batch.kind,
            "timezone": str(series.timezone),
            "n_rows_seen": int(batch.n_rows_seen),
            "n_rows_used": int(len(batch)),
            "n_row_errors": int(len(batch.row_errors)),
            "n_days": int(series.n_days),
            "n_days_retained": int(np.sum(series.retained_days)),
            "first_date": series.day_dates[0].isoformat(),
            "last_date": series.day_dates[-1].isoformat(),
            "days": days,
            "excluded_days": [d.to_dict() for d in result.excluded_days],
        },
        "parameters": config.parameters_dict(),
        "features": result.features.to_dict(),
        "cosinor": {
            "goodness": float(result.fit.goodness),
            "n_minutes_used": int(result.fit.n_minutes_used),
        },
        "activity_days": result.activity.per_day,
        "sleep_nights": sleep_nights,
        "metric_errors": result.metric_errors,
        "warnings": [],
    }


def run_predict(source, config: PipelineConfig | None = None, *,
                age_years: float, sex: str | None = None,
                weights_source=None) -> tuple[dict, FeatureResult]:
    """Feature run plus biological-age prediction; returns (report, result)."""
    cfg = config if config is not None else PipelineConfig()
    if weights_source is None:
        bundle = load_default_weights()
    else:
        bundle = load_weights(weights_source)
    result = run_features(source, cfg)
    try:
        chosen = select_variant(bundle, sex)
        clock_res = predict_cosinorage(result.features, age_years, sex, bundle)
    except PipelineError as e:
        raise StageError("clock", e) from e
    report = features_report(result, cfg)
    report["clock"] = clock_res.to_dict()
    report["clock"]["weights_provenance"] = chosen.provenance
    if sex is not None and chosen.sex_variant != sex:
        report["warnings"].append(
            f"no {sex} weights variant in bundle; using unisex")
    if "demo" in chosen.provenance.lower():
        report["warnings"].append(chosen.provenance)
    return report, result


def plot_payload(result: FeatureResult) -> dict:
    """Minute-resolution series for the dashboard chart: ENMO line, wear
    mask, and the fitted cosinor curve sampled at every series minute."""
    series = result.series
    enmo = [None if np.isnan(v) else float(v) for v in series.enmo_mg]
    curve = evaluate_cosinor(result.fit,
                             series.local_minute_of_day.astype(np.float64))
    return {
        "start_epoch_millis": int(series.start_epoch_millis),
        "timezone": str(series.timezone),
        "n_minutes": int(series.n_minutes),
        "day_starts": [int(v) for v in series.day_starts],
        "day_dates": [d.isoformat() for d in series.day_dates],
        "local_minute_of_day": [int(v) for v in series.local_minute_of_day],
        "enmo_mg": enmo,
        "wear": [bool(v) for v in series.wear],
        "cosinor_mg": [float(v) for v in curve],
    }
