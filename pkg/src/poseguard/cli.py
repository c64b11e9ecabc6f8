"""Command-line entry point.

Thin wrappers over the library: every subcommand parses flags, calls the
corresponding module and writes its standard output files. Errors leave a
single machine-readable JSON object on stderr and exit with 1 (domain), 2
(usage) or 3 (I/O). Log level comes from the POSEGUARD_LOG env var.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import socket
import sys
from pathlib import Path

from . import __version__
from .detector import DetectorParams, detect, write_detection_sidecar, write_events_csv
from .evaluation import (
    MatchPolicy,
    export_heatmap_csv,
    sweep,
    write_sweep_meta,
)
from .session import (
    DataFormatError,
    InsufficientDataError,
    ValidationConfig,
    load_session_bundle,
    validate_session,
)
from .stats import StudyConfig, study, write_study_report, write_summary_csv
from .synth import config_from_dict, write_synth_tree

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2
EXIT_IO = 3


class UsageError(Exception):
    pass


def _error_json(code: str, message: str) -> None:
    print(json.dumps({"error": {"code": code, "message": message}}), file=sys.stderr)


class _Parser(argparse.ArgumentParser):
    """Argparse that reports usage problems as JSON on stderr (exit 2)."""

    def error(self, message: str):
        _error_json("usage", f"{self.prog}: {message}")
        raise SystemExit(EXIT_USAGE)


def _float_list(raw: str) -> list[float]:
    return [float(p) for p in raw.split(",") if p.strip()]


def _int_list(raw: str) -> list[int]:
    return [int(p) for p in raw.split(",") if p.strip()]


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise UsageError(message)


def _load_bundles(manifests: list[str], jobs: int):
    """Load session bundles, preserving manifest order; jobs > 1 parses files
    in parallel."""
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(load_session_bundle, manifests))
    return [load_session_bundle(m) for m in manifests]


def _detector_params(args) -> DetectorParams:
    _require(args.n > 0, f"--n must be positive, got {args.n}")
    _require(args.w >= 1, f"--w must be a positive integer, got {args.w}")
    _require(args.stride >= 1, f"--stride must be a positive integer, got {args.stride}")
    _require(0 < args.min_coverage <= 1, f"--min-coverage must be in (0, 1], got {args.min_coverage}")
    return DetectorParams(
        n=args.n, w=args.w, window_unit=args.window_unit,
        stride=args.stride, min_window_coverage=args.min_coverage,
    )


def cmd_detect(args) -> int:
    params = _detector_params(args)
    bundle = load_session_bundle(args.manifest)
    result = detect(bundle.angles, params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_events_csv(result, out / "events.csv")
    write_detection_sidecar(result, out / "events.json")
    summary = {
        "session_id": bundle.session_id,
        "event_count": len(result.events),
        "events_per_hour": len(result.events) * 3600.0 / bundle.duration,
        "flagged_fraction": sum(e.duration for e in result.events) / bundle.duration,
        "out": str(out),
    }
    print(json.dumps(summary))
    return EXIT_OK


def cmd_sweep(args) -> int:
    _require(bool(args.manifests), "at least one session manifest is required")
    _require(bool(args.n_grid), "--n-grid must not be empty")
    _require(all(n > 0 for n in args.n_grid), "--n-grid values must be positive")
    _require(bool(args.w_grid), "--w-grid must not be empty")
    _require(all(w >= 1 for w in args.w_grid), "--w-grid values must be positive integers")
    _require(args.stride >= 1, f"--stride must be a positive integer, got {args.stride}")
    _require(args.min_overlap >= 0, "--min-overlap must be >= 0")
    _require(args.jobs >= 1, "--jobs must be >= 1")
    sessions = _load_bundles(args.manifests, args.jobs)
    grid = sweep(
        sessions,
        n_grid=args.n_grid,
        w_grid=args.w_grid,
        policy=MatchPolicy(min_overlap=args.min_overlap),
        target_label=args.label,
        window_unit=args.window_unit,
        stride=args.stride,
        jobs=args.jobs,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    export_heatmap_csv(grid, out / "sweep.csv")
    write_sweep_meta(grid, out / "sweep_meta.json")
    print(json.dumps({
        "cells": len(grid.cells),
        "sessions": len(sessions),
        "skipped": len(grid.skipped_sessions),
        "out": str(out),
    }))
    return EXIT_OK


def cmd_stats(args) -> int:
    _require(bool(args.manifests), "at least one session manifest is required")
    _require(args.window > 0, f"--window must be positive, got {args.window}")
    _require(args.jobs >= 1, "--jobs must be >= 1")
    sessions = _load_bundles(args.manifests, args.jobs)
    config = StudyConfig(
        target_label=args.label,
        window_len=args.window,
        aggregate=args.aggregate,
        use_welch=args.welch,
    )
    report = study(sessions, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_study_report(report, out / "study_report.json")
    write_summary_csv(report.summary, out / "summary_table.csv")
    print(json.dumps({
        "sessions": len(sessions),
        "tests": len(report.tests),
        "skipped_cells": len(report.skipped),
        "out": str(out),
    }))
    return EXIT_OK


def cmd_synth(args) -> int:
    raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    try:
        config = config_from_dict(raw)
    except (TypeError, KeyError) as exc:
        raise DataFormatError(f"bad synth config: {exc}", args.config) from None
    manifests = write_synth_tree(config, args.out_dir, raw_config=raw)
    print(json.dumps({"sessions": [str(m) for m in manifests], "out_dir": str(args.out_dir)}))
    return EXIT_OK


def cmd_validate(args) -> int:
    _require(args.nominal_period > 0, "--nominal-period must be positive")
    _require(args.threshold > 0, "--threshold must be positive")
    bundle = load_session_bundle(args.manifest)
    report = validate_session(
        bundle,
        ValidationConfig(nominal_period_s=args.nominal_period, exclusion_threshold_s=args.threshold),
    )
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    _require(args.jobs >= 1, "--jobs must be >= 1")
    _require(0 <= args.port <= 65535, f"--port must be in [0, 65535], got {args.port}")
    ui_dir = args.ui_dir
    if ui_dir is None and Path("frontend/dist/index.html").exists():
        ui_dir = "frontend/dist"
    app = create_app(
        corpus_dir=args.corpus_dir,
        jobs=args.jobs,
        decisions_log=args.decisions_log,
        ui_dir=ui_dir,
    )
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind((args.host, args.port))
    port = sock.getsockname()[1]
    print(f"listening on http://{args.host}:{port}", flush=True)
    server = uvicorn.Server(uvicorn.Config(app, log_level="warning"))
    server.run(sockets=[sock])
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(
        prog="poseguard",
        description="Head-pose deviation event detection, evaluation and review tooling.",
    )
    parser.add_argument("--version", action="version", version=f"poseguard {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("detect", help="detect deviation events in one session", formatter_class=fmt)
    p.add_argument("manifest", help="path to session.json")
    p.add_argument("--n", type=float, default=2.0, help="threshold multiplier on the global SD")
    p.add_argument("--w", type=int, default=5, help="window length")
    p.add_argument("--window-unit", choices=("frames", "seconds"), default="frames",
                   help="unit of --w")
    p.add_argument("--stride", type=int, default=1, help="window stride in frames")
    p.add_argument("--min-coverage", type=float, default=0.5,
                   help="minimum valid-frame fraction for a window to flag")
    p.add_argument("--out", default="detect_out", help="output directory")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("sweep", help="evaluate a parameter grid over sessions", formatter_class=fmt)
    p.add_argument("manifests", nargs="*", help="session.json paths")
    p.add_argument("--n-grid", type=_float_list, default=[1.5, 2.0, 2.5, 3.0, 3.5],
                   help="comma-separated n values")
    p.add_argument("--w-grid", type=_int_list, default=[1, 2, 3, 4, 5],
                   help="comma-separated w values")
    p.add_argument("--window-unit", choices=("frames", "seconds"), default="frames",
                   help="unit of the w grid")
    p.add_argument("--stride", type=int, default=1, help="window stride in frames")
    p.add_argument("--label", default="phone", help="ground-truth label to score against")
    p.add_argument("--min-overlap", type=float, default=0.0,
                   help="seconds of overlap a match must exceed")
    p.add_argument("--jobs", type=int, default=1, help="parallel sessions")
    p.add_argument("--out", default="sweep_out", help="output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("stats", help="before/during/after biometric statistics", formatter_class=fmt)
    p.add_argument("manifests", nargs="*", help="session.json paths")
    p.add_argument("--label", default="phone", help="target event label")
    p.add_argument("--window", type=float, default=15.0, help="before/after window in seconds")
    p.add_argument("--aggregate", choices=("per_event", "per_learner"), default="per_event",
                   help="pair observations per event or per learner")
    p.add_argument("--welch", action="store_true", help="use the independent-samples Welch variant")
    p.add_argument("--jobs", type=int, default=1, help="parallel session loading")
    p.add_argument("--out", default="stats_out", help="output directory")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("synth", help="generate synthetic sessions", formatter_class=fmt)
    p.add_argument("config", help="synth config JSON (single session or corpus)")
    p.add_argument("--out-dir", default="synth_out", help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("validate", help="data-quality report for one session", formatter_class=fmt)
    p.add_argument("manifest", help="path to session.json")
    p.add_argument("--nominal-period", type=float, default=1.0,
                   help="nominal biometric sampling period in seconds")
    p.add_argument("--threshold", type=float, default=300.0,
                   help="total gap seconds above which a session is excluded")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("serve", help="run the review HTTP service", formatter_class=fmt)
    p.add_argument("--corpus-dir", required=True, help="directory of session subdirectories")
    p.add_argument("--host", default="127.0.0.1", help="bind address")
    p.add_argument("--port", type=int, default=8000, help="bind port (0 picks a free port)")
    p.add_argument("--jobs", type=int, default=2, help="sweep worker threads")
    p.add_argument("--decisions-log", default=None,
                   help="decisions JSONL path (default: <corpus-dir>/decisions.jsonl)")
    p.add_argument("--ui-dir", default=None, help="static review UI bundle to serve at /")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("POSEGUARD_LOG", "WARNING").upper())
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        _error_json("usage", str(exc))
        return EXIT_USAGE
    except FileNotFoundError as exc:
        _error_json("io", f"file not found: {exc.filename or exc}")
        return EXIT_IO
    except OSError as exc:
        _error_json("io", str(exc))
        return EXIT_IO
    except json.JSONDecodeError as exc:
        _error_json("format", str(exc))
        return EXIT_DOMAIN
    except (DataFormatError, InsufficientDataError) as exc:
        _error_json("data", str(exc))
        return EXIT_DOMAIN
    except ValueError as exc:
        _error_json("domain", str(exc))
        return EXIT_DOMAIN
    except KeyboardInterrupt:
        return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
