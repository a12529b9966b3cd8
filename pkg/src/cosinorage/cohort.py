"""Batch processing over many subjects with per-subject failure isolation,
plus distribution summaries and the feature correlation matrix."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._version import __version__
from .errors import (AllSubjectsFailed, DuplicateSubjectId, EmptyBatch,
                     InsufficientSubjects, PipelineError)
from .featureset import FEATURE_KEYS
from .pipeline import (PipelineConfig, StageError, features_report,
                       run_features, run_predict)

CSV_COLUMNS = ("subject_id",) + FEATURE_KEYS + ("biological_age_years",)


@dataclass
class SubjectSpec:
    subject_id: str
    source: object                   # path, bytes, or CSV text
    age_years: float | None = None
    sex: str | None = None
    config: PipelineConfig | None = None


@dataclass
class SubjectResult:
    subject_id: str
    report: dict | None              # None on failure
    stage: str | None = None         # failure stage
    error: dict | None = None        # failure payload

    @property
    def ok(self) -> bool:
        return self.report is not None

    def feature_value(self, key: str):
        if not self.ok:
            return None
        if key == "biological_age_years":
            clock = self.report.get("clock")
            return None if clock is None else clock["biological_age_years"]
        return self.report["features"].get(key)


@dataclass
class CohortSummary:
    n_subjects: int
    per_feature: dict
    correlation: dict | None
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n_subjects": self.n_subjects,
            "per_feature": self.per_feature,
            "correlation": self.correlation,
            "failures": self.failures,
        }


def _run_one(spec: SubjectSpec, config: PipelineConfig,
             weights_source) -> SubjectResult:
    cfg = spec.config if spec.config is not None else config
    try:
        if spec.age_years is not None:
            report, _ = run_predict(spec.source, cfg,
                                    age_years=spec.age_years, sex=spec.sex,
                                    weights_source=weights_source)
        else:
            result = run_features(spec.source, cfg)
            report = features_report(result, cfg)
        return SubjectResult(subject_id=spec.subject_id, report=report)
    except StageError as e:
        return SubjectResult(subject_id=spec.subject_id, report=None,
                             stage=e.stage, error=e.error.to_dict())
    except PipelineError as e:
        return SubjectResult(subject_id=spec.subject_id, report=None,
                             stage="config", error=e.to_dict())


def run_batch(specs: list, config: PipelineConfig | None = None,
              weights_source=None, jobs: int = 1
              ) -> tuple[list, CohortSummary]:
    """Run every subject independently; failures never abort the batch.

    Results are sorted by subject_id and the summary is aggregated
    single-threaded afterwards, so output is identical for any worker
    count and any input order.
    """
    if not specs:
        raise EmptyBatch("cohort needs at least one subject")
    ids = [s.subject_id for s in specs]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise DuplicateSubjectId(f"duplicate subject ids: {dupes}")
    cfg = config if config is not None else PipelineConfig()

    if jobs <= 1 or len(specs) == 1:
        results = [_run_one(s, cfg, weights_source) for s in specs]
    else:
        with ThreadPoolExecutor(max_workers=int(jobs)) as pool:
            results = list(pool.map(
                lambda s: _run_one(s, cfg, weights_source), specs))
    results.sort(key=lambda r: r.subject_id)

    succeeded = [r for r in results if r.ok]
    if not succeeded:
        raise AllSubjectsFailed(
            f"all {len(results)} subjects failed; first error: "
            f"{results[0].error}")
    failures = [{"subject_id": r.subject_id, "stage": r.stage,
                 "error": r.error} for r in results if not r.ok]
    try:
        correlation = correlation_matrix(succeeded)
    except InsufficientSubjects:
        correlation = None
    summary = CohortSummary(n_subjects=len(succeeded),
                            per_feature=summarize(succeeded),
                            correlation=correlation, failures=failures)
    return results, summary


def _finite_values(results: list, key: str) -> list:
    vals = []
    for r in results:
        v = r.feature_value(key)
        if v is not None and math.isfinite(v):
            vals.append(float(v))
    return vals


def summarize(results: list) -> dict:
    """Distribution stats per feature over subjects where it is defined.

    Quantiles interpolate linearly between order statistics; sd is the
    sample standard deviation (n-1 denominator), null for a single value.
    """
    ok = [r for r in results if r.ok]
    if not ok:
        raise InsufficientSubjects("summary needs >= 1 successful subject")
    per_feature = {}
    for key in CSV_COLUMNS[1:]:
        vals = _finite_values(ok, key)
        if not vals:
            continue
        arr = np.asarray(vals)
        n = arr.shape[0]
        per_feature[key] = {
            "n": int(n),
            "mean": float(np.mean(arr)),
            "sd": float(np.std(arr, ddof=1)) if n > 1 else None,
            "min": float(np.min(arr)),
            "q25": float(np.quantile(arr, 0.25)),
            "median": float(np.quantile(arr, 0.5)),
            "q75": float(np.quantile(arr, 0.75)),
            "max": float(np.max(arr)),
        }
    return per_feature


def correlation_matrix(results: list) -> dict:
    """Pearson correlations, pairwise-complete.

    Cells with fewer than two complete pairs or a zero-variance side are
    null (undefined, distinct from zero); per-cell pair counts ride along.
    """
    ok = [r for r in results if r.ok]
    keys = [k for k in FEATURE_KEYS if _finite_values(ok, k)]
    if len(ok) < 2 or len(keys) < 2:
        raise InsufficientSubjects(
            "correlation needs >= 2 subjects with >= 2 shared features")
    cols = {}
    for k in keys:
        cols[k] = np.array([
            float(v) if (v := r.feature_value(k)) is not None
            and math.isfinite(v) else np.nan
            for r in ok])
    r_mat = []
    n_mat = []
    for a in keys:
        r_row = []
        n_row = []
        for b in keys:
            both = ~np.isnan(cols[a]) & ~np.isnan(cols[b])
            n = int(both.sum())
            n_row.append(n)
            if n < 2:
                r_row.append(None)
                continue
            x = cols[a][both]
            y = cols[b][both]
            dx = x - np.mean(x)
            dy = y - np.mean(y)
            sxx = float(np.dot(dx, dx))
            syy = float(np.dot(dy, dy))
            if sxx == 0.0 or syy == 0.0:
                r_row.append(None)
                continue
            r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
            r_row.append(min(max(r, -1.0), 1.0))
        r_mat.append(r_row)
        n_mat.append(n_row)
    return {"keys": keys, "r": r_mat, "n": n_mat}


def cohort_csv(results: list) -> str:
    """Wide CSV: one row per subject, one column per feature plus
    biological_age_years; failed subjects and undefined metrics leave
    empty cells."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in results:
        row = [r.subject_id]
        for key in CSV_COLUMNS[1:]:
            v = r.feature_value(key)
            if v is None or (isinstance(v, float) and not math.isfinite(v)):
                row.append("")
            elif isinstance(v, int):
                row.append(str(v))
            else:
                row.append(repr(float(v)))
        writer.writerow(row)
    return buf.getvalue()


def cohort_report(results: list, summary: CohortSummary,
                  config: PipelineConfig) -> dict:
    """The cohort summary JSON document (canonical key order)."""
    subjects = []
    for r in results:
        entry = {"subject_id": r.subject_id, "ok": r.ok}
        if r.ok:
            entry["features"] = r.report["features"]
            entry["clock"] = r.report.get("clock")
            entry["n_days_retained"] = r.report["input"]["n_days_retained"]
            entry["metric_errors"] = r.report["metric_errors"]
        else:
            entry["stage"] = r.stage
            entry["error"] = r.error
        subjects.append(entry)
    return {
        "report_schema": "cosinorage-cohort-v1",
        "tool": {"name": "cosinorage", "version": __version__},
        "parameters": config.parameters_dict(),
        "summary": summary.to_dict(),
        "subjects": subjects,
    }


def load_manifest(path) -> list:
    """Read a cohort manifest CSV with columns subject_id, path, and
    optional age, sex. Relative paths resolve against the manifest dir."""
    p = Path(path)
    base = p.parent
    specs = []
    with open(p, newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyBatch(f"manifest {p} is empty")
        cols = [c.strip().lower() for c in reader.fieldnames]
        if "subject_id" not in cols or "path" not in cols:
            raise EmptyBatch(
                "manifest needs subject_id and path columns, got "
                f"{reader.fieldnames}")
        for row in reader:
            row = {(k or "").strip().lower(): (v or "").strip()
                   for k, v in row.items()}
            src = Path(row["path"])
            if not src.is_absolute():
                src = base / src
            age = row.get("age") or None
            sex = row.get("sex") or None
            specs.append(SubjectSpec(
                subject_id=row["subject_id"], source=src,
                age_years=float(age) if age is not None else None,
                sex=sex))
    if not specs:
        raise EmptyBatch(f"manifest {p} lists no subjects")
    return specs
