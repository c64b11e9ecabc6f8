"""FastAPI application for the review loop.

The service wraps the core package: it serves angle traces and on-demand
detections over a corpus directory, runs parameter sweeps as polled jobs,
and persists reviewer verdicts to an append-only JSON-lines log. Corpus
files are never modified; everything except the decisions log lives in
caches that a restart simply drops.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles

from .. import __version__
from ..detector import (
    DetectorParams,
    detect,
    detection_result_to_dict,
    global_stats,
    window_means,
)
from ..evaluation import MatchPolicy, sweep, sweep_grid_to_dict
from ..session import (
    InsufficientDataError,
    SessionBundle,
    load_session_bundle,
    validate_session,
)
from .schemas import (
    AngleStatsOut,
    AngleTrace,
    LocalAverage,
    DecisionIn,
    DecisionList,
    DecisionRecord,
    LabelOut,
    SessionEntry,
    SessionList,
    SweepJobOut,
    ValidationSummary,
)


class ApiError(HTTPException):
    def __init__(self, status_code: int, code: str, message: str):
        super().__init__(status_code=status_code, detail=message)
        self.code = code


class _SweepJob:
    def __init__(self, job_id: str):
        self.job_id = job_id
        self.status = "pending"
        self.grid: dict | None = None
        self.error: str | None = None


class ReviewState:
    """Corpus index, caches and the decisions log behind the endpoints."""

    DETECTION_CACHE_MAX = 256

    def __init__(self, corpus_dir: Path, decisions_log: Path, jobs: int = 2):
        self.corpus_dir = corpus_dir
        self.decisions_log = decisions_log
        self._bundles: dict[str, SessionBundle] = {}
        self._bundle_lock = threading.Lock()
        self._detections: dict[tuple, dict] = {}
        self._detection_lock = threading.Lock()
        self._decisions_lock = threading.Lock()
        self._jobs: dict[str, _SweepJob] = {}
        self._jobs_lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=max(1, jobs))

    # -- corpus access ------------------------------------------------------

    def manifest_paths(self) -> list[Path]:
        paths = sorted(self.corpus_dir.glob("*/session.json"))
        top = self.corpus_dir / "session.json"
        if top.exists():
            paths.insert(0, top)
        return paths

    def scan(self) -> list[SessionEntry]:
        entries = []
        for path in self.manifest_paths():
            fallback_id = path.parent.name if path.parent != self.corpus_dir else path.stem
            try:
                bundle = self.bundle_for_path(path)
            except Exception as exc:
                entries.append(SessionEntry(session_id=fallback_id, readable=False, error=str(exc)))
                continue
            report = validate_session(bundle)
            entries.append(
                SessionEntry(
                    session_id=bundle.session_id,
                    readable=True,
                    fps=bundle.angles.fps,
                    duration_s=bundle.duration,
                    gender=bundle.learner_meta.gender,
                    n_labels=len(bundle.labels),
                    validation=ValidationSummary(
                        excluded=report.excluded,
                        invalid_frame_fraction=report.invalid_frame_fraction,
                        label_coverage=report.label_coverage,
                        signal_gap_s=report.signal_gap_s,
                    ),
                )
            )
        return entries

    def bundle_for_path(self, path: Path) -> SessionBundle:
        key = str(path)
        with self._bundle_lock:
            if key in self._bundles:
                return self._bundles[key]
        bundle = load_session_bundle(path)
        with self._bundle_lock:
            self._bundles[key] = bundle
        return bundle

    def bundle(self, session_id: str) -> SessionBundle:
        for path in self.manifest_paths():
            try:
                bundle = self.bundle_for_path(path)
            except Exception:
                continue
            if bundle.session_id == session_id:
                return bundle
        raise ApiError(404, "not_found", f"unknown session {session_id!r}")

    def readable_bundles(self) -> list[SessionBundle]:
        bundles = []
        for path in self.manifest_paths():
            try:
                bundles.append(self.bundle_for_path(path))
            except Exception:
                continue
        return bundles

    # -- detection cache ----------------------------------------------------

    def detection(self, session_id: str, params: DetectorParams) -> tuple[dict, bool]:
        key = (session_id, params.n, params.w, params.window_unit, params.stride, params.min_window_coverage)
        with self._detection_lock:
            if key in self._detections:
                return self._detections[key], True
        bundle = self.bundle(session_id)
        result = detect(bundle.angles, params)
        payload = {"session_id": session_id, "duration_s": bundle.duration}
        payload.update(detection_result_to_dict(result))
        with self._detection_lock:
            while len(self._detections) >= self.DETECTION_CACHE_MAX:
                self._detections.pop(next(iter(self._detections)))
            self._detections[key] = payload
        return payload, False

    # -- decisions ----------------------------------------------------------

    def append_decision(self, record: dict) -> None:
        line = json.dumps(record, separators=(",", ":")) + "\n"
        with self._decisions_lock:
            with open(self.decisions_log, "a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()
                os.fsync(fh.fileno())

    def read_decisions(self) -> list[dict]:
        if not self.decisions_log.exists():
            return []
        records = []
        with self._decisions_lock:
            text = self.decisions_log.read_text(encoding="utf-8")
        for line in text.splitlines():
            if line.strip():
                records.append(json.loads(line))
        return records

    def latest_decisions(self) -> list[dict]:
        """Resolve the log with last-write-wins per (session, event span)."""
        latest: dict[tuple, dict] = {}
        for rec in self.read_decisions():
            latest[(rec["session_id"], rec["start_s"], rec["end_s"])] = rec
        return sorted(latest.values(), key=lambda r: (r["session_id"], r["start_s"], r["end_s"]))

    # -- sweep jobs ---------------------------------------------------------

    def sweep_job(self, request_params: dict) -> _SweepJob:
        key = json.dumps(request_params, sort_keys=True)
        job_id = hashlib.sha1(key.encode()).hexdigest()[:16]
        with self._jobs_lock:
            existing = self._jobs.get(job_id)
            if existing is not None:
                return existing
            job = _SweepJob(job_id)
            self._jobs[job_id] = job

        def run() -> None:
            job.status = "running"
            try:
                bundles = self.readable_bundles()
                grid = sweep(
                    bundles,
                    n_grid=request_params["n_grid"],
                    w_grid=request_params["w_grid"],
                    policy=MatchPolicy(
                        min_overlap=request_params["min_overlap"],
                        one_to_many=request_params["one_to_many"],
                    ),
                    target_label=request_params["label"],
                    window_unit=request_params["window_unit"],
                    stride=request_params["stride"],
                )
                job.grid = sweep_grid_to_dict(grid)
                job.status = "done"
            except Exception as exc:
                job.error = str(exc)
                job.status = "failed"

        self._pool.submit(run)
        return job

    def job(self, job_id: str) -> _SweepJob:
        with self._jobs_lock:
            job = self._jobs.get(job_id)
        if job is None:
            raise ApiError(404, "not_found", f"unknown sweep job {job_id!r}")
        return job


def _parse_grid(raw: str, cast, name: str) -> list:
    try:
        values = [cast(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ApiError(400, "invalid_parameter", f"{name} must be a comma-separated list")
    if not values:
        raise ApiError(400, "invalid_parameter", f"{name} must not be empty")
    return values


def create_app(
    corpus_dir: str | Path,
    jobs: int = 2,
    decisions_log: str | Path | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    corpus_dir = Path(corpus_dir)
    if not corpus_dir.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {corpus_dir}")
    log_path = Path(decisions_log) if decisions_log else corpus_dir / "decisions.jsonl"
    state = ReviewState(corpus_dir, log_path, jobs=jobs)
    app = FastAPI(title="poseguard review service", version=__version__)
    app.state.review = state

    @app.exception_handler(ApiError)
    async def _api_error(_: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status_code,
            content={"error": {"code": exc.code, "message": exc.detail}},
        )

    @app.exception_handler(HTTPException)
    async def _http_error(_: Request, exc: HTTPException):
        code = "not_found" if exc.status_code == 404 else "error"
        return JSONResponse(
            status_code=exc.status_code,
            content={"error": {"code": code, "message": str(exc.detail)}},
        )

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"error": {"code": "invalid_parameter", "message": str(exc.errors())}},
        )

    @app.get("/api/sessions", response_model=SessionList)
    def list_sessions():
        return SessionList(sessions=state.scan())

    @app.get("/api/sessions/{session_id}/angles", response_model=AngleTrace)
    def angle_trace(
        session_id: str,
        downsample: int = Query(default=1, ge=1),
        w: int | None = Query(default=None),
        window_unit: str = Query(default="frames"),
        stride: int = Query(default=1),
    ):
        bundle = state.bundle(session_id)
        series = bundle.angles
        idx = np.flatnonzero(series.valid)[::downsample]

        local_average = None
        if w is not None:
            try:
                params = DetectorParams(n=1.0, w=w, window_unit=window_unit, stride=stride)
                windowed = window_means(series, params)
            except (ValueError, InsufficientDataError) as exc:
                raise ApiError(400, "invalid_parameter", str(exc))
            pick = np.arange(0, len(windowed), downsample)
            centers = (windowed.start_frames[pick] + (windowed.width - 1) / 2.0) / series.fps
            cols = []
            for a in range(3):
                vals = windowed.means[pick, a]
                cols.append([None if math.isnan(v) else float(v) for v in vals])
            local_average = LocalAverage(
                w=w,
                window_unit=window_unit,
                stride=windowed.stride,
                timestamps=[float(t) for t in centers],
                yaw=cols[0],
                pitch=cols[1],
                roll=cols[2],
            )
        try:
            stats = global_stats(series)
            stats_out = {
                a: AngleStatsOut(
                    mu=stats.get(a).mu, sigma=stats.get(a).sigma, valid_count=stats.get(a).valid_count
                )
                for a in ("yaw", "pitch", "roll")
            }
        except InsufficientDataError:
            stats_out = None
        return AngleTrace(
            session_id=session_id,
            fps=series.fps,
            duration_s=bundle.duration,
            downsample=downsample,
            frames=[int(f) for f in series.frames[idx]],
            timestamps=[float(t) for t in series.timestamps[idx]],
            yaw=[float(v) for v in series.angles[0, idx]],
            pitch=[float(v) for v in series.angles[1, idx]],
            roll=[float(v) for v in series.angles[2, idx]],
            stats=stats_out,
            labels=[
                LabelOut(label=iv.label, start_s=iv.start, end_s=iv.end) for iv in bundle.labels
            ],
            local_average=local_average,
        )

    @app.get("/api/sessions/{session_id}/events")
    def detection_events(
        response: Response,
        session_id: str,
        n: float = Query(...),
        w: int = Query(...),
        window_unit: str = Query(default="frames"),
        stride: int = Query(default=1),
        min_coverage: float = Query(default=0.5),
    ):
        try:
            params = DetectorParams(
                n=n, w=w, window_unit=window_unit, stride=stride, min_window_coverage=min_coverage
            )
        except ValueError as exc:
            raise ApiError(400, "invalid_parameter", str(exc))
        try:
            payload, cached = state.detection(session_id, params)
        except (InsufficientDataError, ValueError) as exc:
            raise ApiError(422, "detection_failed", str(exc))
        response.headers["X-Cache"] = "hit" if cached else "miss"
        return payload

    @app.post("/api/sessions/{session_id}/decisions", response_model=DecisionRecord, status_code=201)
    def post_decision(session_id: str, decision: DecisionIn):
        state.bundle(session_id)  # 404 on unknown session
        record = {
            "session_id": session_id,
            "start_s": decision.start_s,
            "end_s": decision.end_s,
            "verdict": decision.verdict,
            "reviewer": decision.reviewer,
            "decided_at": datetime.now(timezone.utc).isoformat(timespec="microseconds"),
            "params": decision.params,
        }
        state.append_decision(record)
        return DecisionRecord(**record)

    @app.get("/api/sessions/{session_id}/decisions", response_model=DecisionList)
    def get_decisions(session_id: str):
        state.bundle(session_id)
        records = [r for r in state.read_decisions() if r["session_id"] == session_id]
        return DecisionList(decisions=[DecisionRecord(**r) for r in records])

    @app.get("/api/export/decisions.csv")
    def export_decisions():
        out = io.StringIO()
        out.write("session_id,start_s,end_s,verdict,reviewer,decided_at\n")
        for rec in state.latest_decisions():
            out.write(
                f'{rec["session_id"]},{rec["start_s"]},{rec["end_s"]},'
                f'{rec["verdict"]},{rec["reviewer"]},{rec["decided_at"]}\n'
            )
        return PlainTextResponse(out.getvalue(), media_type="text/csv")

    @app.get("/api/export/accepted.csv")
    def export_accepted(session_id: str | None = None, label: str = "accepted"):
        """Accepted events in the activity-labels CSV format."""
        out = io.StringIO()
        out.write("label,start_s,end_s\n")
        for rec in state.latest_decisions():
            if rec["verdict"] != "accepted":
                continue
            if session_id is not None and rec["session_id"] != session_id:
                continue
            out.write(f'{label},{rec["start_s"]},{rec["end_s"]}\n')
        return PlainTextResponse(out.getvalue(), media_type="text/csv")

    @app.get("/api/sweep", response_model=SweepJobOut, status_code=202)
    def request_sweep(
        n_grid: str = Query(default="1.5,2.0,2.5,3.0,3.5"),
        w_grid: str = Query(default="1,2,3,4,5"),
        window_unit: str = Query(default="frames"),
        stride: int = Query(default=1, ge=1),
        label: str = Query(default="phone"),
        min_overlap: float = Query(default=0.0, ge=0),
        one_to_many: bool = Query(default=True),
    ):
        if window_unit not in ("frames", "seconds"):
            raise ApiError(400, "invalid_parameter", f"unknown window_unit {window_unit!r}")
        params = {
            "n_grid": _parse_grid(n_grid, float, "n_grid"),
            "w_grid": _parse_grid(w_grid, int, "w_grid"),
            "window_unit": window_unit,
            "stride": stride,
            "label": label,
            "min_overlap": min_overlap,
            "one_to_many": one_to_many,
        }
        job = state.sweep_job(params)
        return SweepJobOut(
            job_id=job.job_id, status=job.status, poll=f"/api/sweep/jobs/{job.job_id}",
            error=job.error, grid=job.grid if job.status == "done" else None,
        )

    @app.get("/api/sweep/jobs/{job_id}", response_model=SweepJobOut)
    def poll_sweep(job_id: str):
        job = state.job(job_id)
        return SweepJobOut(
            job_id=job.job_id, status=job.status, poll=f"/api/sweep/jobs/{job.job_id}",
            error=job.error, grid=job.grid if job.status == "done" else None,
        )

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    else:
        @app.get("/")
        def root():
            return {"service": "poseguard review service", "version": __version__}

    return app
