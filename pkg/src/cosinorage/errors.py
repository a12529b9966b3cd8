"""Typed error hierarchy shared by every pipeline stage.

Every error carries a stable machine-readable ``code`` (the class name) so the
CLI and HTTP service can surface failures without string matching.
"""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for all typed pipeline errors."""

    @property
    def code(self) -> str:
        return type(self).__name__

    def to_dict(self) -> dict:
        return {"error": self.code, "message": str(self)}


# --- ingest ---------------------------------------------------------------

class EmptyInput(PipelineError):
    pass


class UndecodableText(PipelineError):
    pass


class TooManyErrors(PipelineError):
    def __init__(self, message: str, n_errors: int = 0, n_rows: int = 0):
        super().__init__(message)
        self.n_errors = n_errors
        self.n_rows = n_rows


class MissingColumn(PipelineError):
    pass


class UnknownPreset(PipelineError):
    pass


class UnknownZone(PipelineError):
    pass


class ConfigError(PipelineError):
    """Invalid configuration; ``fields`` maps field name -> message."""

    def __init__(self, message: str, fields: dict | None = None):
        super().__init__(message)
        self.fields = dict(fields or {})

    def to_dict(self) -> dict:
        d = super().to_dict()
        if self.fields:
            d["fields"] = self.fields
        return d


# --- preprocess -----------------------------------------------------------

class NonFinite(PipelineError):
    pass


class EmptyBatch(PipelineError):
    pass


class SpanTooLong(PipelineError):
    pass


class NoCompleteDays(PipelineError):
    pass


# --- rhythm / behavior ----------------------------------------------------

class InsufficientData(PipelineError):
    pass


class ZeroVariance(PipelineError):
    pass


class ProfileIncomplete(PipelineError):
    pass


class ZeroDenominator(PipelineError):
    pass


class NoSleepDetected(PipelineError):
    pass


# --- clock ----------------------------------------------------------------

class SchemaViolation(PipelineError):
    """Weights document failed validation; ``fields`` lists every failure."""

    def __init__(self, message: str, fields: list[str] | None = None):
        super().__init__(message)
        self.fields = list(fields or [])

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["fields"] = self.fields
        return d


class UnknownFeatureKey(PipelineError):
    pass


class MissingFeature(PipelineError):
    def __init__(self, message: str, keys: list[str] | None = None):
        super().__init__(message)
        self.keys = list(keys or [])

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["keys"] = self.keys
        return d


class AgeOutOfRange(PipelineError):
    pass


class NoUnisexVariant(PipelineError):
    pass


# --- cohort ---------------------------------------------------------------

class InsufficientSubjects(PipelineError):
    pass


class AllSubjectsFailed(PipelineError):
    pass


class DuplicateSubjectId(PipelineError):
    pass
