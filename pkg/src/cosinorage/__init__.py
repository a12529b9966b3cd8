"""Wearable accelerometer analytics: CSV ingestion, minute-level ENMO,
circadian and sleep metrics, and Gompertz proportional-hazards biological
age, with batch, CLI and HTTP front ends."""

from ._version import __version__
from .behavior import (ActivityMetrics, Cutpoints, SleepConfig, SleepMetrics,
                       SleepWindow, activity_durations, classify_intensity,
                       detect_sleep_windows, sleep_metrics)
from .clock import (ClockResult, ClockWeights, gompertz_risk,
                    linear_predictor, load_default_weights, load_weights,
                    predict_cosinorage, select_variant)
from .cohort import (CohortSummary, SubjectSpec, SubjectResult, cohort_csv,
                     cohort_report, correlation_matrix, load_manifest,
                     run_batch, summarize)
from .errors import PipelineError
from .featureset import FEATURE_KEYS, FeatureSet
from .ingest import (RecordBatch, SchemaConfig, SchemaGuess,
                     apply_device_preset, detect_schema, parse_csv,
                     resolve_local_time, resolve_zone, serialize_batch)
from .pipeline import (PipelineConfig, StageError, canonical_json,
                       features_report, plot_payload, run_features,
                       run_predict)
from .preprocess import (MinuteSeries, PreprocessConfig, aggregate_minutes,
                         compute_enmo, detect_nonwear, minute_csv,
                         select_complete_days, wear_csv)
from .rhythm import (CosinorFit, NonparamMetrics, evaluate_cosinor,
                     fit_cosinor, hourly_profile, interdaily_stability,
                     intradaily_variability, m10_l5, relative_amplitude)

__all__ = [
    "__version__",
    "ActivityMetrics", "Cutpoints", "SleepConfig", "SleepMetrics",
    "SleepWindow", "activity_durations", "classify_intensity",
    "detect_sleep_windows", "sleep_metrics",
    "ClockResult", "ClockWeights", "gompertz_risk", "linear_predictor",
    "load_default_weights", "load_weights", "predict_cosinorage",
    "select_variant",
    "CohortSummary", "SubjectSpec", "SubjectResult", "cohort_csv",
    "cohort_report", "correlation_matrix", "load_manifest", "run_batch",
    "summarize",
    "PipelineError",
    "FEATURE_KEYS", "FeatureSet",
    "RecordBatch", "SchemaConfig", "SchemaGuess", "apply_device_preset",
    "detect_schema", "parse_csv", "resolve_local_time", "resolve_zone",
    "serialize_batch",
    "PipelineConfig", "StageError", "canonical_json", "features_report",
    "plot_payload", "run_features", "run_predict",
    "MinuteSeries", "PreprocessConfig", "aggregate_minutes", "compute_enmo",
    "detect_nonwear", "minute_csv", "select_complete_days", "wear_csv",
    "CosinorFit", "NonparamMetrics", "evaluate_cosinor", "fit_cosinor",
    "hourly_profile", "interdaily_stability", "intradaily_variability",
    "m10_l5", "relative_amplitude",
]
