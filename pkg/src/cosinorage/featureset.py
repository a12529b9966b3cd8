"""Flat per-subject feature vector: the stable key space shared by reports,
the cohort layer, and clock weights files."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import MissingFeature, UnknownFeatureKey

FEATURE_KEYS = (
    "mesor_mg",
    "amplitude_mg",
    "acrophase_rad",
    "acrophase_minutes",
    "is",
    "iv",
    "m10_mg",
    "l5_mg",
    "m10_onset",
    "l5_onset",
    "ra",
    "sedentary_min",
    "lpa_min",
    "mpa_min",
    "vpa_min",
    "tst_min",
    "waso_min",
    "pta_percent",
    "nwb_count",
    "sol_min",
    "nights_analyzed",
)

_INT_KEYS = frozenset({"m10_onset", "l5_onset", "nights_analyzed"})


@dataclass
class FeatureSet:
    """Feature values keyed by FEATURE_KEYS; None marks an unavailable metric
    (for example sleep keys when no sleep window was found)."""
    values: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        unknown = [k for k in self.values if k not in FEATURE_KEYS]
        if unknown:
            raise UnknownFeatureKey(f"unknown feature keys: {unknown}")

    def get(self, key: str):
        if key not in FEATURE_KEYS:
            raise UnknownFeatureKey(f"unknown feature key: {key!r}")
        return self.values.get(key)

    def require(self, keys) -> dict:
        """Values for keys, raising MissingFeature listing every absent or
        non-finite one."""
        bad = []
        out = {}
        for k in keys:
            v = self.get(k)
            if v is None or not math.isfinite(v):
                bad.append(k)
            else:
                out[k] = float(v)
        if bad:
            raise MissingFeature(
                f"features unavailable or non-finite: {bad}", keys=bad)
        return out

    def to_dict(self) -> dict:
        """All keys in pinned order; unavailable metrics serialize as None."""
        out = {}
        for k in FEATURE_KEYS:
            v = self.values.get(k)
            if v is None:
                out[k] = None
            elif k in _INT_KEYS:
                out[k] = int(v)
            else:
                out[k] = float(v)
        return out

    @classmethod
    def assemble(cls, cosinor=None, nonparam=None, activity=None,
                 sleep=None) -> "FeatureSet":
        """Build from stage results; any part may be None (metric not
        computable) and contributes None values."""
        vals: dict = {}
        if cosinor is not None:
            vals["mesor_mg"] = cosinor.mesor_mg
            vals["amplitude_mg"] = cosinor.amplitude_mg
            vals["acrophase_rad"] = cosinor.acrophase_rad
            vals["acrophase_minutes"] = cosinor.acrophase_minutes
        if nonparam is not None:
            for key, attr in (("is", "is_"), ("iv", "iv"),
                              ("m10_mg", "m10_mg"), ("l5_mg", "l5_mg"),
                              ("m10_onset", "m10_onset_minute"),
                              ("l5_onset", "l5_onset_minute"), ("ra", "ra")):
                vals[key] = getattr(nonparam, attr)
        if activity is not None:
            vals.update(activity.to_dict())
        if sleep is not None:
            vals.update(sleep.to_dict())
        return cls(values={k: v for k, v in vals.items() if v is not None})
