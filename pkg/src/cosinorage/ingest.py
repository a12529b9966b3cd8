"""Delimited-text ingestion: schema detection, presets and CSV parsing.

Input files are UTF-8 delimited text (optional BOM) with a timestamp column
followed by either triaxial acceleration columns or a single ENMO column.
Parsing is total: any byte stream either yields a ``RecordBatch`` or raises a
typed error from :mod:`cosinorage.errors`.

Two parsing routes share one contract: a vectorized route (polars) for clean
numeric-timestamp files, and a row-by-row fallback that additionally handles
ISO/custom timestamps and structurally dirty input. Route choice is
deterministic for a given file, so repeated parses are bit-identical.
"""

from __future__ import annotations

import csv
import io
import math
import os
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone, tzinfo
from zoneinfo import ZoneInfo

import numpy as np
import polars as pl

from .errors import (
    ConfigError,
    EmptyInput,
    MissingColumn,
    TooManyErrors,
    UndecodableText,
    UnknownPreset,
    UnknownZone,
)

STANDARD_GRAVITY = 9.80665  # m/s^2 per g

TIMESTAMP_FORMATS = ("iso8601", "unix_seconds", "unix_millis")
TRIAXIAL_UNITS = ("g", "milli-g", "m/s2")
ENMO_UNITS = ("milli-g", "g")
DEVICE_PRESETS = ("generic-raw", "generic-enmo", "galaxy-minute")

_UTF8_BOM = b"\xef\xbb\xbf"

_TIMESTAMP_NAMES = {
    "timestamp", "time", "ts", "datetime", "date_time", "epoch", "unix",
    "unix_time", "time_stamp", "utc_time", "utc",
}
_X_NAMES = {"x", "ax", "acc_x", "accx", "x_axis", "accel_x"}
_Y_NAMES = {"y", "ay", "acc_y", "accy", "y_axis", "accel_y"}
_Z_NAMES = {"z", "az", "acc_z", "accz", "z_axis", "accel_z"}
_ENMO_NAMES = {"enmo", "enmo_mg", "magnitude", "mag"}

_ISO_RE = re.compile(r"^\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}")


@dataclass
class SchemaConfig:
    """Column/format description of one input file.

    Exactly one of the triaxial column triple or the ENMO column must be
    configured. ``timezone`` is an IANA zone name or a fixed offset in
    minutes; ``timestamp_format`` is one of ``iso8601``, ``unix_seconds``,
    ``unix_millis`` or a strptime pattern containing ``%``.
    """

    timestamp_column: str | int = "timestamp"
    timestamp_format: str = "iso8601"
    timezone: str | int = "UTC"
    x_column: str | int | None = None
    y_column: str | int | None = None
    z_column: str | int | None = None
    xyz_unit: str | None = None
    enmo_column: str | int | None = None
    enmo_unit: str | None = None
    delimiter: str = ","
    has_header: bool = True
    device_preset: str | None = None
    max_error_fraction: float = 0.05

    @property
    def is_triaxial(self) -> bool:
        return self.x_column is not None

    def validate(self) -> "SchemaConfig":
        problems: dict[str, str] = {}
        xyz = [self.x_column, self.y_column, self.z_column]
        has_xyz = any(c is not None for c in xyz)
        if has_xyz and not all(c is not None for c in xyz):
            problems["value_columns"] = "x, y and z columns must all be set"
        if has_xyz and self.enmo_column is not None:
            problems["value_columns"] = "configure either x/y/z or enmo, not both"
        if not has_xyz and self.enmo_column is None:
            problems["value_columns"] = "one of x/y/z or enmo columns required"
        if has_xyz:
            if self.xyz_unit not in TRIAXIAL_UNITS:
                problems["xyz_unit"] = f"unit must be one of {TRIAXIAL_UNITS}"
        elif self.enmo_column is not None:
            if self.enmo_unit not in ENMO_UNITS:
                problems["enmo_unit"] = f"unit must be one of {ENMO_UNITS}"
        if len(self.delimiter) != 1 or self.delimiter.isalnum() or self.delimiter in "\"'":
            problems["delimiter"] = "delimiter must be a single non-alphanumeric, non-quote character"
        if self.timestamp_format not in TIMESTAMP_FORMATS and "%" not in self.timestamp_format:
            problems["timestamp_format"] = (
                f"must be one of {TIMESTAMP_FORMATS} or a strptime pattern"
            )
        if not (0 < self.max_error_fraction <= 1):
            problems["max_error_fraction"] = "must be in (0, 1]"
        try:
            resolve_zone(self.timezone)
        except UnknownZone as exc:
            problems["timezone"] = str(exc)
        if not self.has_header:
            for name, col in (
                ("timestamp_column", self.timestamp_column),
                ("x_column", self.x_column),
                ("y_column", self.y_column),
                ("z_column", self.z_column),
                ("enmo_column", self.enmo_column),
            ):
                if col is not None and not isinstance(col, int):
                    problems[name] = "headerless files require integer column indices"
        if problems:
            raise ConfigError("invalid schema config", fields=problems)
        return self

    def to_dict(self) -> dict:
        if self.is_triaxial:
            value_columns = {
                "x": self.x_column, "y": self.y_column, "z": self.z_column,
                "unit": self.xyz_unit,
            }
        else:
            value_columns = {"enmo": self.enmo_column, "unit": self.enmo_unit}
        return {
            "device_preset": self.device_preset,
            "timestamp_column": self.timestamp_column,
            "timestamp_format": self.timestamp_format,
            "timezone": self.timezone,
            "value_columns": value_columns,
            "delimiter": self.delimiter,
            "has_header": self.has_header,
            "max_error_fraction": self.max_error_fraction,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SchemaConfig":
        if not isinstance(d, dict):
            raise ConfigError("schema config must be an object")
        known = {
            "device_preset", "timestamp_column", "timestamp_format", "timezone",
            "value_columns", "delimiter", "has_header", "max_error_fraction",
        }
        unknown = set(d) - known
        if unknown:
            raise ConfigError(
                "unknown schema config fields",
                fields={k: "unknown field" for k in sorted(unknown)},
            )
        base: SchemaConfig
        preset = d.get("device_preset")
        if preset:
            base = apply_device_preset(preset)
        else:
            base = cls(x_column=None)
        cfg = SchemaConfig(
            timestamp_column=d.get("timestamp_column", base.timestamp_column),
            timestamp_format=d.get("timestamp_format", base.timestamp_format),
            timezone=d.get("timezone", base.timezone),
            delimiter=d.get("delimiter", base.delimiter),
            has_header=d.get("has_header", base.has_header),
            device_preset=preset,
            max_error_fraction=d.get("max_error_fraction", base.max_error_fraction),
            x_column=base.x_column, y_column=base.y_column, z_column=base.z_column,
            xyz_unit=base.xyz_unit,
            enmo_column=base.enmo_column, enmo_unit=base.enmo_unit,
        )
        vc = d.get("value_columns")
        if vc is not None:
            if not isinstance(vc, dict):
                raise ConfigError("invalid schema config",
                                  fields={"value_columns": "must be an object"})
            if "enmo" in vc:
                cfg.enmo_column = vc["enmo"]
                cfg.enmo_unit = vc.get("unit", "milli-g")
                cfg.x_column = cfg.y_column = cfg.z_column = None
                cfg.xyz_unit = None
            elif {"x", "y", "z"} <= set(vc):
                cfg.x_column, cfg.y_column, cfg.z_column = vc["x"], vc["y"], vc["z"]
                cfg.xyz_unit = vc.get("unit", "g")
                cfg.enmo_column = None
                cfg.enmo_unit = None
            else:
                raise ConfigError(
                    "invalid schema config",
                    fields={"value_columns": "needs either x/y/z or enmo keys"},
                )
        return cfg.validate()


@dataclass
class RowError:
    line_number: int
    reason: str

    def to_dict(self) -> dict:
        return {"line_number": self.line_number, "reason": self.reason}


@dataclass
class RecordBatch:
    """Validated, strictly time-ordered records from one file.

    ``epoch_millis`` is UTC; triaxial payloads are in g, ENMO payloads in
    milli-g. Rows rejected during parsing are listed in ``row_errors``.
    """

    epoch_millis: np.ndarray
    xyz_g: np.ndarray | None
    enmo_mg: np.ndarray | None
    timezone: str | int
    row_errors: list[RowError] = field(default_factory=list)
    n_rows_seen: int = 0

    @property
    def kind(self) -> str:
        return "triaxial" if self.xyz_g is not None else "enmo"

    def __len__(self) -> int:
        return int(self.epoch_millis.shape[0])


@dataclass
class ColumnRole:
    column: str | int
    role: str
    confidence: float

    def to_dict(self) -> dict:
        return {"column": self.column, "role": self.role,
                "confidence": self.confidence}


@dataclass
class SchemaGuess:
    detected_delimiter: str
    detected_header: bool
    column_roles: list[ColumnRole]
    sample_rows: list[list[str]]
    estimated_sample_rate_hz: float | str | None

    def to_dict(self) -> dict:
        return {
            "detected_delimiter": self.detected_delimiter,
            "detected_header": self.detected_header,
            "column_roles": [r.to_dict() for r in self.column_roles],
            "sample_rows": self.sample_rows,
            "estimated_sample_rate_hz": self.estimated_sample_rate_hz,
        }


def apply_device_preset(preset: str) -> SchemaConfig:
    """Return a complete SchemaConfig for a known device preset.

    The returned config still needs its timezone confirmed; everything else
    is ready to parse. Column contracts are documented in the README.
    """
    if preset == "generic-raw":
        return SchemaConfig(
            timestamp_column="timestamp", timestamp_format="iso8601",
            x_column="x", y_column="y", z_column="z", xyz_unit="g",
            device_preset=preset,
        )
    if preset == "generic-enmo":
        return SchemaConfig(
            timestamp_column="timestamp", timestamp_format="iso8601",
            enmo_column="enmo", enmo_unit="milli-g",
            device_preset=preset,
        )
    if preset == "galaxy-minute":
        # Galaxy-style minute rows: epoch milliseconds + minute-level ENMO (mg).
        return SchemaConfig(
            timestamp_column="time", timestamp_format="unix_millis",
            enmo_column="enmo", enmo_unit="milli-g",
            device_preset=preset,
        )
    raise UnknownPreset(f"unknown device preset: {preset!r}")


_FIXED_OFFSET_RE = re.compile(r"^([+-])(\d{1,2}):?(\d{2})$")
_MINUTES_RE = re.compile(r"^[+-]\d{1,4}$")


def resolve_zone(spec: str | int) -> tzinfo:
    """Resolve an IANA zone name or fixed offset (minutes or +HH:MM)."""
    if isinstance(spec, bool):
        raise UnknownZone(f"not a timezone: {spec!r}")
    if isinstance(spec, int):
        if abs(spec) > 18 * 60:
            raise UnknownZone(f"offset out of range: {spec} minutes")
        return timezone(timedelta(minutes=spec))
    if not isinstance(spec, str) or not spec:
        raise UnknownZone(f"not a timezone: {spec!r}")
    if spec.upper() in ("UTC", "Z"):
        return timezone.utc
    m = _FIXED_OFFSET_RE.match(spec)
    if m:
        sign = 1 if m.group(1) == "+" else -1
        minutes = int(m.group(2)) * 60 + int(m.group(3))
        if minutes > 18 * 60:
            raise UnknownZone(f"offset out of range: {spec}")
        return timezone(sign * timedelta(minutes=minutes))
    if _MINUTES_RE.match(spec):
        return resolve_zone(int(spec))
    try:
        return ZoneInfo(spec)
    except Exception as exc:
        raise UnknownZone(f"unknown timezone: {spec!r}") from exc


def resolve_local_time(epoch_millis: int, zone: str | int | tzinfo) -> int:
    """Local clock minute of day in [0, 1440) for a UTC instant."""
    tz = zone if isinstance(zone, tzinfo) else resolve_zone(zone)
    local = datetime.fromtimestamp(epoch_millis // 1000, tz)
    return local.hour * 60 + local.minute


# --- schema detection -----------------------------------------------------

def _decode(raw: bytes) -> str:
    if raw.startswith(_UTF8_BOM):
        raw = raw[len(_UTF8_BOM):]
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise UndecodableText(f"input is not valid UTF-8: {exc}") from exc


def _is_float(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def _detect_delimiter(lines: list[str]) -> str:
    best, best_score = ",", -1.0
    for cand in (",", ";", "\t", "|"):
        counts = [ln.count(cand) for ln in lines]
        if not counts or counts[0] == 0:
            continue
        consistent = sum(1 for c in counts if c == counts[0]) / len(counts)
        score = consistent * 10 + counts[0]
        if consistent >= 0.8 and score > best_score:
            best, best_score = cand, score
    return best


def _role_from_name(name: str) -> tuple[str, float] | None:
    n = name.strip().lower()
    if n in _TIMESTAMP_NAMES:
        return "timestamp", 0.95
    if n in _X_NAMES:
        return "x", 0.9
    if n in _Y_NAMES:
        return "y", 0.9
    if n in _Z_NAMES:
        return "z", 0.9
    if n in _ENMO_NAMES:
        return "enmo", 0.95
    return None


def _timestamp_values_seconds(values: list[str]) -> list[float] | None:
    """Best-effort conversion of sampled timestamp cells to seconds."""
    out: list[float] = []
    for v in values:
        v = v.strip()
        if _ISO_RE.match(v):
            try:
                out.append(_parse_iso(v, timezone.utc) / 1000.0)
                continue
            except ValueError:
                return None
        if not _is_float(v):
            return None
        x = float(v)
        out.append(x / 1000.0 if abs(x) >= 1e11 else x)
    return out


def detect_schema(raw_text: bytes, max_bytes: int = 65536) -> SchemaGuess:
    """Guess delimiter, header presence, column roles and sample rate.

    Never consumes more than ``max_bytes`` of the stream and returns a guess
    even for unrecognized layouts (roles with confidence 0).
    """
    if max_bytes < 1024:
        raise ValueError("max_bytes must be >= 1024")
    if not raw_text:
        raise EmptyInput("empty input")
    head = raw_text[:max_bytes]
    if len(raw_text) > max_bytes:
        cut = head.rfind(b"\n")
        if cut > 0:
            head = head[: cut + 1]
    text = _decode(head)
    if not text.strip():
        raise EmptyInput("input contains no data")

    lines = [ln for ln in text.splitlines() if ln.strip()]
    probe = lines[:50]
    delim = _detect_delimiter(probe)

    reader = csv.reader(io.StringIO("\n".join(probe)), delimiter=delim)
    rows = [row for row in reader if row]
    if not rows:
        raise EmptyInput("input contains no data")

    first = rows[0]
    named_roles = [_role_from_name(c) for c in first]
    first_non_numeric = any(not _is_float(c) and not _ISO_RE.match(c.strip())
                            for c in first)
    has_header = any(named_roles) or (
        first_non_numeric
        and len(rows) > 1
        and all(_is_float(c) or _ISO_RE.match(c.strip()) or not c.strip()
                for c in rows[1])
    )
    if len(rows) == 1:
        has_header = any(named_roles) or first_non_numeric

    data_rows = rows[1:] if has_header else rows
    n_cols = len(first)
    columns: list[str | int] = (
        [c.strip() for c in first] if has_header else list(range(n_cols))
    )

    roles: list[ColumnRole] = []
    claimed: set[str] = set()
    for i, col in enumerate(columns):
        guess: tuple[str, float] | None = None
        if has_header:
            guess = _role_from_name(str(col))
        if guess is None and data_rows:
            cells = [r[i].strip() for r in data_rows[:20] if i < len(r)]
            if cells and all(_ISO_RE.match(c) for c in cells):
                guess = ("timestamp", 0.9)
            elif cells and all(_is_float(c) for c in cells):
                vals = [float(c) for c in cells]
                diffs = [b - a for a, b in zip(vals, vals[1:])]
                if diffs and all(d > 0 for d in diffs):
                    guess = ("timestamp", 0.7)
        if guess is not None and guess[0] in claimed:
            guess = (guess[0], guess[1] * 0.5)
        if guess is not None:
            claimed.add(guess[0])
            roles.append(ColumnRole(col, guess[0], guess[1]))
        else:
            roles.append(ColumnRole(col, "unknown", 0.0))

    # Statistical fallback for unclaimed numeric payload columns.
    unknown_idx = [i for i, r in enumerate(roles) if r.role == "unknown"]
    if data_rows:
        numeric_unknown = []
        for i in unknown_idx:
            cells = [r[i].strip() for r in data_rows[:20] if i < len(r)]
            if cells and all(_is_float(c) for c in cells):
                numeric_unknown.append(i)
        if len(numeric_unknown) == 3 and "x" not in claimed:
            for i, axis in zip(numeric_unknown, ("x", "y", "z")):
                roles[i] = ColumnRole(columns[i], axis, 0.5)
                claimed.add(axis)
        elif len(numeric_unknown) == 1 and "enmo" not in claimed:
            i = numeric_unknown[0]
            cells = [float(r[i]) for r in data_rows[:20] if i < len(r)]
            if all(v >= 0 for v in cells):
                roles[i] = ColumnRole(columns[i], "enmo", 0.4)
                claimed.add("enmo")

    # Sample rate from the best timestamp column.
    rate: float | str | None = None
    ts_candidates = [r for r in roles if r.role == "timestamp"]
    if ts_candidates and data_rows:
        ts_role = max(ts_candidates, key=lambda r: r.confidence)
        i = roles.index(ts_role)
        cells = [r[i] for r in data_rows[:30] if i < len(r)]
        secs = _timestamp_values_seconds(cells)
        if secs and len(secs) > 1:
            diffs = sorted(b - a for a, b in zip(secs, secs[1:]))
            dt = diffs[len(diffs) // 2]
            if dt > 0:
                rate = "minute-level" if 50.0 <= dt <= 70.0 else 1.0 / dt

    return SchemaGuess(
        detected_delimiter=delim,
        detected_header=bool(has_header),
        column_roles=roles,
        sample_rows=[list(r) for r in data_rows[:10]],
        estimated_sample_rate_hz=rate,
    )


# --- parsing --------------------------------------------------------------

def _parse_iso(token: str, default_tz: tzinfo) -> int:
    """ISO-8601 string to UTC epoch milliseconds; naive times use default_tz."""
    t = token.strip()
    if t.endswith(("Z", "z")):
        t = t[:-1] + "+00:00"
    dt = datetime.fromisoformat(t)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=default_tz)
    return round(dt.timestamp() * 1000)


def _greedy_monotone_keep(ts: np.ndarray) -> np.ndarray:
    """Keep-first mask for strict increase.

    Greedy acceptance (keep a row iff its timestamp exceeds the last kept
    one) equals "exceeds the running maximum of all prior rows", because a
    rejected row never raises that maximum above a kept value.
    """
    if ts.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    runmax = np.maximum.accumulate(ts)
    keep = np.empty(ts.shape[0], dtype=bool)
    keep[0] = True
    keep[1:] = ts[1:] > runmax[:-1]
    return keep


def _resolve_columns(config: SchemaConfig) -> list[tuple[str, str | int]]:
    cols: list[tuple[str, str | int]] = [("timestamp", config.timestamp_column)]
    if config.is_triaxial:
        cols += [("x", config.x_column), ("y", config.y_column),
                 ("z", config.z_column)]
    else:
        cols.append(("enmo", config.enmo_column))
    return cols


def _finalize(
    config: SchemaConfig,
    epoch: np.ndarray,
    values: np.ndarray,
    row_errors: list[RowError],
    n_rows: int,
) -> RecordBatch:
    if n_rows and len(row_errors) / n_rows > config.max_error_fraction:
        raise TooManyErrors(
            f"{len(row_errors)} of {n_rows} rows rejected "
            f"(> {config.max_error_fraction:.0%} budget)",
            n_errors=len(row_errors), n_rows=n_rows,
        )
    if config.is_triaxial:
        if config.xyz_unit == "milli-g":
            values = values / 1000.0
        elif config.xyz_unit == "m/s2":
            values = values / STANDARD_GRAVITY
        return RecordBatch(epoch_millis=epoch, xyz_g=values, enmo_mg=None,
                           timezone=config.timezone, row_errors=row_errors,
                           n_rows_seen=n_rows)
    enmo = values[:, 0] if values.ndim == 2 else values
    if config.enmo_unit == "g":
        enmo = enmo * 1000.0
    return RecordBatch(epoch_millis=epoch, xyz_g=None, enmo_mg=enmo,
                       timezone=config.timezone, row_errors=row_errors,
                       n_rows_seen=n_rows)


def _parse_fast(source, config: SchemaConfig) -> RecordBatch:
    """Vectorized route for unix-numeric timestamps. Raises pl exceptions on
    structurally dirty input; the caller falls back to the row-by-row route."""
    wanted = _resolve_columns(config)
    if config.has_header:
        names = {logical: str(col) for logical, col in wanted}
    else:
        names = {logical: f"column_{int(col) + 1}" for logical, col in wanted}
    overrides = {name: pl.Float64 for name in names.values()}
    df = pl.read_csv(
        source,
        separator=config.delimiter,
        has_header=config.has_header,
        schema_overrides=overrides,
        ignore_errors=True,
        rechunk=True,
    )
    for logical, name in names.items():
        if name not in df.columns:
            raise MissingColumn(f"column {name!r} ({logical}) not found")

    n_rows = df.height
    header_offset = 2 if config.has_header else 1
    line_of = lambda idx: int(idx) + header_offset  # noqa: E731

    ts = df.get_column(names["timestamp"]).to_numpy().astype(np.float64, copy=False)
    value_names = [n for k, n in names.items() if k != "timestamp"]
    vals = np.column_stack([
        df.get_column(n).to_numpy().astype(np.float64, copy=False)
        for n in value_names
    ])
    del df

    bad_ts = ~np.isfinite(ts)
    bad_val = ~np.isfinite(vals).all(axis=1)
    if not config.is_triaxial:
        bad_val |= np.where(np.isfinite(vals[:, 0]), vals[:, 0], 0.0) < 0

    good = ~(bad_ts | bad_val)
    keep = np.zeros(n_rows, dtype=bool)
    if good.any():
        gidx = np.nonzero(good)[0]
        keep[gidx] = _greedy_monotone_keep(ts[gidx])
    non_mono = good & ~keep

    row_errors: list[RowError] = []
    n_bad = int((bad_ts | bad_val).sum() + non_mono.sum())
    if n_rows and n_bad / n_rows > config.max_error_fraction:
        raise TooManyErrors(
            f"{n_bad} of {n_rows} rows rejected "
            f"(> {config.max_error_fraction:.0%} budget)",
            n_errors=n_bad, n_rows=n_rows,
        )
    for idx in np.nonzero(bad_ts)[0]:
        row_errors.append(RowError(line_of(idx), "unparseable timestamp"))
    for idx in np.nonzero(bad_val & ~bad_ts)[0]:
        row_errors.append(RowError(line_of(idx), "invalid payload value"))
    for idx in np.nonzero(non_mono)[0]:
        row_errors.append(RowError(
            line_of(idx), "non-increasing timestamp (duplicate or out of order)"))
    row_errors.sort(key=lambda e: e.line_number)

    ts_kept = ts[keep]
    vals_kept = vals[keep]
    if config.timestamp_format == "unix_seconds":
        epoch = np.rint(ts_kept * 1000.0).astype(np.int64)
    else:
        epoch = np.rint(ts_kept).astype(np.int64)
    return _finalize(config, epoch, vals_kept, row_errors, n_rows)


def _parse_robust(text: str, config: SchemaConfig) -> RecordBatch:
    """Row-by-row route: handles ISO/custom timestamps and dirty files."""
    wanted = _resolve_columns(config)
    default_tz = resolve_zone(config.timezone)
    fmt = config.timestamp_format

    reader = csv.reader(io.StringIO(text), delimiter=config.delimiter)
    rows = iter(reader)
    col_idx: dict[str, int] = {}
    header_offset = 1
    if config.has_header:
        try:
            header = next(rows)
        except StopIteration:
            raise EmptyInput("input contains no data") from None
        header_offset = 2
        stripped = [h.strip() for h in header]
        for logical, col in wanted:
            if isinstance(col, int):
                if col >= len(header):
                    raise MissingColumn(f"column index {col} ({logical}) out of range")
                col_idx[logical] = col
            else:
                if col not in stripped:
                    raise MissingColumn(f"column {col!r} ({logical}) not found")
                col_idx[logical] = stripped.index(col)
    else:
        for logical, col in wanted:
            col_idx[logical] = int(col)

    n_value = len(wanted) - 1
    need = max(col_idx.values()) + 1
    epochs: list[int] = []
    values: list[tuple] = []
    row_errors: list[RowError] = []
    last_epoch: int | None = None
    n_rows = 0
    checked_width = config.has_header

    for i, row in enumerate(rows):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        n_rows += 1
        line = i + header_offset
        if len(row) < need:
            if not checked_width:
                raise MissingColumn(
                    f"row has {len(row)} columns, need at least {need}")
            row_errors.append(RowError(line, f"expected at least {need} columns"))
            continue
        checked_width = True
        try:
            cell = row[col_idx["timestamp"]].strip()
            if fmt == "unix_seconds":
                epoch = round(float(cell) * 1000)
            elif fmt == "unix_millis":
                epoch = round(float(cell))
            elif fmt == "iso8601":
                epoch = _parse_iso(cell, default_tz)
            else:
                dt = datetime.strptime(cell, fmt)
                if dt.tzinfo is None:
                    dt = dt.replace(tzinfo=default_tz)
                epoch = round(dt.timestamp() * 1000)
        except (ValueError, OverflowError, OSError):
            row_errors.append(RowError(line, "unparseable timestamp"))
            continue
        try:
            if n_value == 3:
                payload = (float(row[col_idx["x"]]), float(row[col_idx["y"]]),
                           float(row[col_idx["z"]]))
            else:
                payload = (float(row[col_idx["enmo"]]),)
        except ValueError:
            row_errors.append(RowError(line, "invalid payload value"))
            continue
        if not all(math.isfinite(v) for v in payload) or (
                n_value == 1 and payload[0] < 0):
            row_errors.append(RowError(line, "invalid payload value"))
            continue
        if last_epoch is not None and epoch <= last_epoch:
            row_errors.append(RowError(
                line, "non-increasing timestamp (duplicate or out of order)"))
            continue
        last_epoch = epoch
        epochs.append(epoch)
        values.append(payload)

    if n_rows == 0 and not config.has_header:
        raise EmptyInput("input contains no data")
    epoch_arr = np.asarray(epochs, dtype=np.int64)
    val_arr = (np.asarray(values, dtype=np.float64)
               if values else np.zeros((0, n_value)))
    return _finalize(config, epoch_arr, val_arr, row_errors, n_rows)


def parse_csv(source: bytes | str | os.PathLike, config: SchemaConfig) -> RecordBatch:
    """Parse a delimited export into a validated RecordBatch.

    ``source`` may be raw bytes, decoded text, or a file path. Rows that fail
    type, finiteness or monotonicity checks land in ``row_errors``; the whole
    file is rejected (TooManyErrors) past ``config.max_error_fraction``.
    """
    config.validate()

    is_path = isinstance(source, os.PathLike) or (
        isinstance(source, str) and "\n" not in source and "," not in source
        and os.path.exists(source)
    )

    if config.timestamp_format in ("unix_seconds", "unix_millis"):
        try:
            if is_path:
                return _parse_fast(str(source), config)
            raw = source.encode() if isinstance(source, str) else source
            if not raw.strip():
                raise EmptyInput("empty input")
            if raw.startswith(_UTF8_BOM):
                raw = raw[len(_UTF8_BOM):]
            return _parse_fast(io.BytesIO(raw), config)
        except (MissingColumn, TooManyErrors, EmptyInput):
            raise
        except Exception:
            pass  # structurally dirty; retry row-by-row

    if is_path:
        with open(source, "rb") as fh:
            data = fh.read()
        text = _decode(data)
    elif isinstance(source, bytes):
        text = _decode(source)
    else:
        text = str(source)
    if not text.strip():
        raise EmptyInput("empty input")
    return _parse_robust(text, config)


# --- serialization (round-trip + fixtures) --------------------------------

def serialize_batch(batch: RecordBatch, config: SchemaConfig) -> str:
    """Render a RecordBatch back to delimited text under ``config``.

    Inverse of :func:`parse_csv` for valid batches: parsing the output with
    the same config reproduces the records exactly.
    """
    config.validate()
    d = config.delimiter
    tz = resolve_zone(config.timezone)
    lines: list[str] = []
    wanted = _resolve_columns(config)
    if config.has_header:
        lines.append(d.join(str(c) for _, c in wanted))
    triax = batch.xyz_g is not None
    for i in range(len(batch)):
        ep = int(batch.epoch_millis[i])
        if config.timestamp_format == "unix_seconds":
            ts = repr(ep / 1000.0)
        elif config.timestamp_format == "unix_millis":
            ts = str(ep)
        else:
            dt = datetime.fromtimestamp(ep / 1000.0, tz)
            ts = dt.isoformat(timespec="milliseconds")
        if triax:
            x, y, z = batch.xyz_g[i]
            if config.xyz_unit == "milli-g":
                x, y, z = x * 1000.0, y * 1000.0, z * 1000.0
            elif config.xyz_unit == "m/s2":
                x, y, z = (x * STANDARD_GRAVITY, y * STANDARD_GRAVITY,
                           z * STANDARD_GRAVITY)
            lines.append(d.join((ts, repr(float(x)), repr(float(y)),
                                 repr(float(z)))))
        else:
            v = float(batch.enmo_mg[i])
            if config.enmo_unit == "g":
                v = v / 1000.0
            lines.append(d.join((ts, repr(v))))
    return "\n".join(lines) + "\n"
