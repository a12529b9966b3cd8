"""Biological age from the feature vector via a Gompertz
proportional-hazards mortality clock.

The model is two-step: standardized features plus chronological age form a
linear predictor LP; the Gompertz baseline turns LP into a horizon
mortality risk; an affine anchor (the age-only reference predictor
LP_ref(a) = a0 + a1*a) inverts LP back into the age whose reference risk
matches, which is the biological age. Every constant lives in the weights
file; nothing is hard-coded.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import (AgeOutOfRange, NoUnisexVariant, SchemaViolation,
                     UnknownFeatureKey)
from .featureset import FEATURE_KEYS, FeatureSet

WEIGHTS_SCHEMA = "clock-weights-v1"
SEX_VARIANTS = ("unisex", "female", "male")

_SEMVER_RE = re.compile(r"^\d+\.\d+\.\d+$")


@dataclass(frozen=True)
class FeatureWeight:
    key: str
    mean: float
    sd: float
    coefficient: float


@dataclass(frozen=True)
class ClockWeights:
    name: str
    version: str
    sex_variant: str
    features: tuple
    age_coefficient: float
    intercept: float
    gompertz_gamma: float
    horizon_years: float
    anchor_a0: float
    anchor_a1: float
    provenance: str

    def feature_keys(self) -> list:
        return [f.key for f in self.features]


@dataclass
class ClockResult:
    biological_age_years: float
    chronological_age_years: float
    age_acceleration_years: float
    linear_predictor: float
    risk_horizon: float
    weights_name: str
    weights_version: str
    sex_variant_used: str

    def to_dict(self) -> dict:
        return {
            "biological_age_years": self.biological_age_years,
            "chronological_age_years": self.chronological_age_years,
            "age_acceleration_years": self.age_acceleration_years,
            "linear_predictor": self.linear_predictor,
            "risk_horizon": self.risk_horizon,
            "weights_name": self.weights_name,
            "weights_version": self.weights_version,
            "sex_variant_used": self.sex_variant_used,
        }


_VARIANT_FIELDS = {
    "name": str, "version": str, "sex_variant": str, "features": list,
    "age_coefficient": (int, float), "intercept": (int, float),
    "gompertz_gamma": (int, float), "horizon_years": (int, float),
    "anchor_a0": (int, float), "anchor_a1": (int, float), "provenance": str,
}
_FEATURE_FIELDS = {
    "key": str, "mean": (int, float), "sd": (int, float),
    "coefficient": (int, float),
}


def _parse_variant(doc: dict, where: str) -> ClockWeights:
    bad = []
    if not isinstance(doc, dict):
        raise SchemaViolation(f"{where}: variant must be an object",
                              fields=[where])
    unknown = sorted(set(doc) - set(_VARIANT_FIELDS))
    missing = sorted(set(_VARIANT_FIELDS) - set(doc))
    bad += [f"{where}.{k}: unknown field" for k in unknown]
    bad += [f"{where}.{k}: missing" for k in missing]
    for k, typ in _VARIANT_FIELDS.items():
        if k in doc and (not isinstance(doc[k], typ)
                         or isinstance(doc[k], bool)):
            bad.append(f"{where}.{k}: wrong type")
    if bad:
        raise SchemaViolation("invalid weights variant", fields=bad)

    if doc["sex_variant"] not in SEX_VARIANTS:
        bad.append(f"{where}.sex_variant: must be one of {SEX_VARIANTS}")
    if not _SEMVER_RE.match(doc["version"]):
        bad.append(f"{where}.version: not MAJOR.MINOR.PATCH")
    if not doc["gompertz_gamma"] > 0:
        bad.append(f"{where}.gompertz_gamma: must be > 0")
    if not doc["horizon_years"] > 0:
        bad.append(f"{where}.horizon_years: must be > 0")
    if doc["anchor_a1"] == 0:
        bad.append(f"{where}.anchor_a1: must be nonzero")

    feats = []
    seen = set()
    for i, f in enumerate(doc["features"]):
        loc = f"{where}.features[{i}]"
        if not isinstance(f, dict):
            bad.append(f"{loc}: must be an object")
            continue
        f_bad = sorted(set(f) - set(_FEATURE_FIELDS))
        f_bad = [f"{loc}.{k}: unknown field" for k in f_bad]
        f_bad += [f"{loc}.{k}: missing"
                  for k in sorted(set(_FEATURE_FIELDS) - set(f))]
        for k, typ in _FEATURE_FIELDS.items():
            if k in f and (not isinstance(f[k], typ)
                           or isinstance(f[k], bool)):
                f_bad.append(f"{loc}.{k}: wrong type")
        if f_bad:
            bad += f_bad
            continue
        if f["key"] not in FEATURE_KEYS:
            raise UnknownFeatureKey(
                f"{loc}: {f['key']!r} is not a feature key")
        if f["key"] in seen:
            bad.append(f"{loc}.key: duplicate {f['key']!r}")
        seen.add(f["key"])
        if not f["sd"] > 0:
            bad.append(f"{loc}.sd: must be > 0")
        feats.append(FeatureWeight(key=f["key"], mean=float(f["mean"]),
                                   sd=float(f["sd"]),
                                   coefficient=float(f["coefficient"])))
    if bad:
        raise SchemaViolation("invalid weights variant", fields=bad)
    return ClockWeights(
        name=doc["name"], version=doc["version"],
        sex_variant=doc["sex_variant"], features=tuple(feats),
        age_coefficient=float(doc["age_coefficient"]),
        intercept=float(doc["intercept"]),
        gompertz_gamma=float(doc["gompertz_gamma"]),
        horizon_years=float(doc["horizon_years"]),
        anchor_a0=float(doc["anchor_a0"]),
        anchor_a1=float(doc["anchor_a1"]),
        provenance=doc["provenance"])


def load_weights(source) -> list:
    """Parse a weights document (path, JSON text, or parsed dict) into a
    bundle of ClockWeights variants. Closed schema: unknown fields are
    rejected with every offending field listed."""
    if isinstance(source, (str, Path)) and "\n" not in str(source) \
            and Path(source).exists():
        text = Path(source).read_text(encoding="utf-8")
        doc = _load_json(text)
    elif isinstance(source, (str, bytes)):
        doc = _load_json(source)
    elif isinstance(source, dict):
        doc = source
    else:
        raise SchemaViolation("weights source must be a path, JSON text, "
                              "or object", fields=["document"])
    if not isinstance(doc, dict):
        raise SchemaViolation("weights document must be an object",
                              fields=["document"])
    unknown = sorted(set(doc) - {"schema", "weights"})
    bad = [f"{k}: unknown field" for k in unknown]
    if doc.get("schema") != WEIGHTS_SCHEMA:
        bad.append(f"schema: expected {WEIGHTS_SCHEMA!r}")
    if not isinstance(doc.get("weights"), list) or not doc.get("weights"):
        bad.append("weights: must be a non-empty list")
    if bad:
        raise SchemaViolation("invalid weights document", fields=bad)
    bundle = [_parse_variant(v, f"weights[{i}]")
              for i, v in enumerate(doc["weights"])]
    pairs = [(w.name, w.sex_variant) for w in bundle]
    if len(set(pairs)) != len(pairs):
        raise SchemaViolation("duplicate (name, sex_variant) in bundle",
                              fields=["weights"])
    return bundle


def _load_json(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaViolation(f"weights document is not valid JSON: {e}",
                              fields=["document"]) from e


def default_weights_path() -> Path:
    return Path(__file__).parent / "weights" / "demo_weights.json"


def load_default_weights() -> list:
    return load_weights(default_weights_path())


def select_variant(bundle: list, sex: str | None = None) -> ClockWeights:
    """Sex-specific variant when requested and present, else unisex."""
    if sex is not None and sex not in ("female", "male"):
        raise ValueError(f"sex must be 'female', 'male', or None, got {sex!r}")
    if sex is not None:
        for w in bundle:
            if w.sex_variant == sex:
                return w
    for w in bundle:
        if w.sex_variant == "unisex":
            return w
    raise NoUnisexVariant("weights bundle has no unisex variant")


def linear_predictor(features: FeatureSet, age_years: float,
                     w: ClockWeights) -> float:
    """LP = intercept + age_coefficient*age + sum of standardized feature
    terms coefficient*(value - mean)/sd."""
    if not (isinstance(age_years, (int, float)) and 0 <= age_years <= 120):
        raise AgeOutOfRange(f"age must be in [0, 120] years, got {age_years}")
    vals = features.require(w.feature_keys())
    lp = w.intercept + w.age_coefficient * age_years
    for f in w.features:
        lp += f.coefficient * (vals[f.key] - f.mean) / f.sd
    return lp


def gompertz_risk(lp: float, w: ClockWeights) -> float:
    """Risk of the event within horizon_years for a Gompertz baseline:
    1 - exp(-exp(lp) * (exp(gamma*T) - 1) / gamma)."""
    if not math.isfinite(lp):
        raise ValueError("linear predictor must be finite")
    cum = math.exp(lp) * math.expm1(
        w.gompertz_gamma * w.horizon_years) / w.gompertz_gamma
    return -math.expm1(-cum)


def predict_cosinorage(features: FeatureSet, age_years: float,
                       sex: str | None, bundle: list) -> ClockResult:
    """Biological age: invert LP through the reference relationship
    LP_ref(a) = anchor_a0 + anchor_a1*a, so BA = (LP - a0)/a1. Because risk
    is strictly increasing in LP, this equals inverting the risk equation
    over the age-only reference predictor."""
    w = select_variant(bundle, sex)
    lp = linear_predictor(features, age_years, w)
    ba = (lp - w.anchor_a0) / w.anchor_a1
    return ClockResult(
        biological_age_years=ba,
        chronological_age_years=float(age_years),
        age_acceleration_years=ba - float(age_years),
        linear_predictor=lp,
        risk_horizon=gompertz_risk(lp, w),
        weights_name=w.name,
        weights_version=w.version,
        sex_variant_used=w.sex_variant)
