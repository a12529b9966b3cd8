"""Command-line entry point: preview, features, predict, cohort, serve.

Results go to stdout (or --out), logs and machine-readable error JSON to
stderr. Exit codes: 0 success, 1 processing failure, 2 usage or parse
error. Output bytes are stable across runs for identical inputs.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from ._version import __version__
from .behavior import Cutpoints, SleepConfig
from .clock import load_default_weights, load_weights
from .cohort import cohort_csv, cohort_report, load_manifest, run_batch
from .errors import ConfigError, PipelineError
from .ingest import (DEVICE_PRESETS, TIMESTAMP_FORMATS, SchemaConfig,
                     apply_device_preset, detect_schema)
from .pipeline import (PipelineConfig, StageError, canonical_json,
                       features_report, run_features, run_predict)
from .preprocess import PreprocessConfig, minute_csv, wear_csv


def _column(value: str):
    """Column flags accept names or zero-based indices."""
    v = value.strip()
    if v.lstrip("-").isdigit():
        return int(v)
    return v


def _schema_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("input schema")
    g.add_argument("--device-preset", choices=DEVICE_PRESETS,
                   help="start from a known device layout")
    g.add_argument("--timestamp-column", type=_column, metavar="COL")
    g.add_argument("--timestamp-format", metavar="FMT",
                   help=f"one of {', '.join(TIMESTAMP_FORMATS)} or a "
                        "strptime pattern")
    g.add_argument("--timezone", metavar="ZONE",
                   help="IANA name, +HH:MM offset, or minutes east of UTC")
    g.add_argument("--x-column", type=_column, metavar="COL")
    g.add_argument("--y-column", type=_column, metavar="COL")
    g.add_argument("--z-column", type=_column, metavar="COL")
    g.add_argument("--xyz-unit", choices=("g", "milli-g", "m/s2"))
    g.add_argument("--enmo-column", type=_column, metavar="COL")
    g.add_argument("--enmo-unit", choices=("milli-g", "g"))
    g.add_argument("--delimiter", metavar="CHAR")
    g.add_argument("--no-header", action="store_true", default=None,
                   help="file has no header row (columns are indices)")
    g.add_argument("--max-error-fraction", type=float, metavar="F")


def _pipeline_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("analysis parameters")
    g.add_argument("--nonwear-threshold", type=float, metavar="MG")
    g.add_argument("--nonwear-block", type=int, metavar="MIN")
    g.add_argument("--raw-nonwear-std", type=float, metavar="MG")
    g.add_argument("--raw-nonwear-window", type=int, metavar="MIN")
    g.add_argument("--raw-nonwear-axes", type=int, metavar="N")
    g.add_argument("--min-day-coverage", type=float, metavar="F")
    g.add_argument("--max-gap-interpolate", type=int, metavar="MIN")
    g.add_argument("--sleep-threshold", type=float, metavar="MG")
    g.add_argument("--sleep-smoothing", type=int, metavar="MIN")
    g.add_argument("--sleep-min-window", type=int, metavar="MIN")
    g.add_argument("--sleep-max-interruption", type=int, metavar="MIN")
    g.add_argument("--sleep-onset-run", type=int, metavar="MIN")
    g.add_argument("--cutpoint-light", type=float, metavar="MG")
    g.add_argument("--cutpoint-moderate", type=float, metavar="MG")
    g.add_argument("--cutpoint-vigorous", type=float, metavar="MG")
    g.add_argument("--m10l5-mode", choices=("average", "per-day"))
    g.add_argument("--bin-minutes", type=int, metavar="MIN")


def _schema_config(args) -> SchemaConfig:
    if args.device_preset:
        cfg = apply_device_preset(args.device_preset)
    else:
        cfg = apply_device_preset("generic-raw")
    overrides = {
        "timestamp_column": args.timestamp_column,
        "timestamp_format": args.timestamp_format,
        "timezone": args.timezone,
        "delimiter": args.delimiter,
        "max_error_fraction": args.max_error_fraction,
    }
    for name, value in overrides.items():
        if value is not None:
            setattr(cfg, name, value)
    if args.no_header:
        cfg.has_header = False
    if args.enmo_column is not None:
        cfg.enmo_column = args.enmo_column
        cfg.enmo_unit = args.enmo_unit or cfg.enmo_unit or "milli-g"
        cfg.x_column = cfg.y_column = cfg.z_column = None
        cfg.xyz_unit = None
    elif any(c is not None for c in (args.x_column, args.y_column,
                                     args.z_column)):
        cfg.x_column = args.x_column
        cfg.y_column = args.y_column
        cfg.z_column = args.z_column
        cfg.xyz_unit = args.xyz_unit or cfg.xyz_unit or "g"
        cfg.enmo_column = None
        cfg.enmo_unit = None
    else:
        if args.xyz_unit is not None:
            cfg.xyz_unit = args.xyz_unit
        if args.enmo_unit is not None and cfg.enmo_column is not None:
            cfg.enmo_unit = args.enmo_unit
    return cfg


def _pipeline_config(args) -> PipelineConfig:
    pre = PreprocessConfig()
    for attr, flag in (("nonwear_enmo_threshold_mg", "nonwear_threshold"),
                       ("nonwear_min_block_minutes", "nonwear_block"),
                       ("raw_nonwear_std_mg", "raw_nonwear_std"),
                       ("raw_nonwear_window_minutes", "raw_nonwear_window"),
                       ("raw_nonwear_axes_required", "raw_nonwear_axes"),
                       ("min_day_coverage", "min_day_coverage"),
                       ("max_gap_interpolate_minutes", "max_gap_interpolate")):
        v = getattr(args, flag)
        if v is not None:
            setattr(pre, attr, v)
    sleep = SleepConfig()
    for attr, flag in (("sleep_enmo_threshold_mg", "sleep_threshold"),
                       ("smoothing_window_min", "sleep_smoothing"),
                       ("min_window_min", "sleep_min_window"),
                       ("max_interruption_min", "sleep_max_interruption"),
                       ("onset_run_min", "sleep_onset_run")):
        v = getattr(args, flag)
        if v is not None:
            setattr(sleep, attr, v)
    cut = Cutpoints()
    if args.cutpoint_light is not None:
        cut.light_mg = args.cutpoint_light
    if args.cutpoint_moderate is not None:
        cut.moderate_mg = args.cutpoint_moderate
    if args.cutpoint_vigorous is not None:
        cut.vigorous_mg = args.cutpoint_vigorous
    cfg = PipelineConfig(schema=_schema_config(args), preprocess=pre,
                         sleep=sleep, cutpoints=cut)
    if args.m10l5_mode is not None:
        cfg.m10l5_mode = args.m10l5_mode
    if args.bin_minutes is not None:
        cfg.bin_minutes = args.bin_minutes
    return cfg


def _weights_source(args):
    if getattr(args, "weights", None):
        return args.weights
    return os.environ.get("COSINOR_WEIGHTS") or None


def _announce_weights(source) -> None:
    bundle = load_weights(source) if source else load_default_weights()
    seen = set()
    for w in bundle:
        if w.provenance not in seen:
            sys.stderr.write(f"weights {w.name} {w.version}: "
                             f"{w.provenance}\n")
            seen.add(w.provenance)


def _emit(args, text: str) -> None:
    out = getattr(args, "out", None)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _cmd_preview(args) -> int:
    try:
        raw = Path(args.file).read_bytes()
        guess = detect_schema(raw)
    except OSError as e:
        sys.stderr.write(canonical_json(
            {"error": "IOError", "message": str(e)}))
        return 2
    except PipelineError as e:
        sys.stderr.write(canonical_json(e.to_dict()))
        return 2
    _emit(args, canonical_json(guess.to_dict()))
    return 0


def _cmd_features(args) -> int:
    cfg = _pipeline_config(args)
    result = run_features(args.file, cfg)
    report = features_report(result, cfg)
    if args.emit_minutes:
        dest = Path(args.emit_minutes)
        dest.write_text(minute_csv(result.series), encoding="utf-8")
        sidecar = dest.with_name(dest.stem + ".wear" + dest.suffix)
        sidecar.write_text(wear_csv(result.series), encoding="utf-8")
        sys.stderr.write(f"minute series written to {dest}, "
                         f"wear mask to {sidecar}\n")
    _emit(args, canonical_json(report))
    return 0


def _cmd_predict(args) -> int:
    cfg = _pipeline_config(args)
    source = _weights_source(args)
    _announce_weights(source)
    report, _ = run_predict(args.file, cfg, age_years=args.age, sex=args.sex,
                            weights_source=source)
    _emit(args, canonical_json(report))
    return 0


def _cmd_cohort(args) -> int:
    cfg = _pipeline_config(args)
    source = _weights_source(args)
    _announce_weights(source)
    specs = load_manifest(args.manifest)
    results, summary = run_batch(specs, cfg, weights_source=source,
                                 jobs=args.jobs)
    report = cohort_report(results, summary, cfg)
    if args.csv:
        Path(args.csv).write_text(cohort_csv(results), encoding="utf-8")
        sys.stderr.write(f"wide feature CSV written to {args.csv}\n")
    _emit(args, canonical_json(report))
    return 0


def _cmd_serve(args) -> int:
    from .service import run_server
    run_server(port=args.port, host=args.host,
               max_upload_mb=args.max_upload_mb, data_dir=args.data_dir,
               weights=_weights_source(args), serve_ui=args.serve_ui,
               cors_origin=args.cors_origin, jobs=args.jobs)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cosinorage",
        description="Wearable accelerometer analytics: minute-level ENMO, "
                    "circadian and sleep metrics, and biological age.")
    parser.add_argument("--version", action="version",
                        version=f"cosinorage {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("preview",
                       help="detect file structure and show sample rows")
    p.add_argument("file")
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=_cmd_preview)

    p = sub.add_parser("features",
                       help="extract the feature set from one recording")
    p.add_argument("file")
    _schema_flags(p)
    _pipeline_flags(p)
    p.add_argument("--emit-minutes", metavar="PATH",
                   help="also write the minute-level ENMO CSV and wear "
                        "sidecar")
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("predict",
                       help="extract features and estimate biological age")
    p.add_argument("file")
    _schema_flags(p)
    _pipeline_flags(p)
    p.add_argument("--age", type=float, required=True, metavar="YEARS",
                   help="chronological age in years")
    p.add_argument("--sex", choices=("female", "male"))
    p.add_argument("--weights", metavar="PATH",
                   help="clock weights JSON (default: $COSINOR_WEIGHTS or "
                        "the bundled demo weights)")
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("cohort",
                       help="batch-process a manifest of recordings")
    p.add_argument("manifest",
                   help="CSV with columns subject_id, path and optional "
                        "age, sex")
    _schema_flags(p)
    _pipeline_flags(p)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   metavar="N", help="worker pool size")
    p.add_argument("--weights", metavar="PATH")
    p.add_argument("--csv", metavar="PATH",
                   help="also write the wide per-subject feature CSV")
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=_cmd_cohort)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--max-upload-mb", type=int, default=200)
    p.add_argument("--data-dir", metavar="DIR",
                   help="persist sessions under this directory")
    p.add_argument("--weights", metavar="PATH")
    p.add_argument("--serve-ui", metavar="DIR",
                   help="serve static UI assets from DIR at /")
    p.add_argument("--cors-origin", default="*",
                   help="allowed CORS origin for the UI")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StageError as e:
        sys.stderr.write(canonical_json(e.to_dict()))
        return 1
    except ConfigError as e:
        sys.stderr.write(canonical_json(e.to_dict()))
        return 2
    except PipelineError as e:
        sys.stderr.write(canonical_json(e.to_dict()))
        return 1
    except OSError as e:
        sys.stderr.write(canonical_json(
            {"error": "IOError", "message": str(e)}))
        return 1


if __name__ == "__main__":
    sys.exit(main())
