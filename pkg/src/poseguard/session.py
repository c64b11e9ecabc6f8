"""Session domain types and the on-disk CSV/JSON formats.

A session bundles three streams recorded during one monitored learning
session: per-frame head angles (yaw/pitch/roll), activity labels, and
timestamped biometric samples. Everything downstream (detection,
evaluation, statistics, the review service) consumes these types.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

log = logging.getLogger(__name__)

ANGLES = ("yaw", "pitch", "roll")
SIGNALS = ("attention", "meditation", "heart_rate")
GENDERS = ("female", "male", "unspecified")
SOURCES = ("ground_truth", "predicted", "reviewed")
REVIEW_STATES = ("unreviewed", "accepted", "rejected")

ANGLES_HEADER = ["frame", "timestamp_s", "yaw_deg", "pitch_deg", "roll_deg"]
LABELS_HEADER = ["label", "start_s", "end_s"]
BIOMETRICS_HEADER = ["timestamp_s", "signal", "value"]

# All CSV floats are written with 9 significant digits; one serialize pass
# makes the representation a fixed point for later round-trips.
FLOAT_FMT = ".9g"


def fmt_float(x: float) -> str:
    return format(float(x), FLOAT_FMT)


class DataFormatError(ValueError):
    """A file or record violates the documented on-disk format."""

    def __init__(self, message: str, path: str | Path | None = None, line: int | None = None):
        loc = ""
        if path is not None:
            loc += f"{path}"
        if line is not None:
            loc += f":{line}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = str(path) if path is not None else None
        self.line = line


class InsufficientDataError(ValueError):
    """Not enough usable data to run the requested computation."""


@dataclass(frozen=True)
class AngleSample:
    """One video frame's head angles; ``valid=False`` when no face was found."""

    frame_index: int
    timestamp: float
    yaw: float
    pitch: float
    roll: float
    valid: bool = True


@dataclass(frozen=True)
class AngleSeries:
    """Per-frame angle streams stored as columns for fast windowing.

    Frames must be strictly increasing (gaps allowed) and timestamps
    strictly increasing. Invalid frames stay in-band so window coverage
    rules can see them.
    """

    session_id: str
    fps: float
    frames: np.ndarray       # int64, strictly increasing
    timestamps: np.ndarray   # float64, strictly increasing
    angles: np.ndarray       # float64, shape (3, n) in ANGLES order, NaN where missing
    valid: np.ndarray        # bool, shape (n,)

    def __post_init__(self) -> None:
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        n = len(self.frames)
        if self.timestamps.shape != (n,) or self.valid.shape != (n,) or self.angles.shape != (3, n):
            raise ValueError("angle series columns have mismatched lengths")
        if n:
            if np.any(self.frames < 0):
                raise ValueError("negative frame index")
            if n > 1:
                if np.any(np.diff(self.frames) <= 0):
                    raise ValueError("frame indices must be strictly increasing")
                if np.any(np.diff(self.timestamps) <= 0):
                    raise ValueError("timestamps must be strictly increasing")
        for arr in (self.frames, self.timestamps, self.angles, self.valid):
            arr.flags.writeable = False  # shared read-only across workers

    @classmethod
    def from_samples(cls, session_id: str, fps: float, samples: Sequence[AngleSample]) -> "AngleSeries":
        frames = np.array([s.frame_index for s in samples], dtype=np.int64)
        ts = np.array([s.timestamp for s in samples], dtype=np.float64)
        ang = np.array(
            [[s.yaw for s in samples], [s.pitch for s in samples], [s.roll for s in samples]],
            dtype=np.float64,
        ).reshape(3, len(samples))
        valid = np.array([s.valid for s in samples], dtype=bool)
        return cls(session_id, float(fps), frames, ts, ang, valid)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def samples(self) -> Iterator[AngleSample]:
        for i in range(len(self.frames)):
            yield AngleSample(
                int(self.frames[i]),
                float(self.timestamps[i]),
                float(self.angles[0, i]),
                float(self.angles[1, i]),
                float(self.angles[2, i]),
                bool(self.valid[i]),
            )

    @property
    def valid_count(self) -> int:
        return int(np.count_nonzero(self.valid))

    @property
    def invalid_count(self) -> int:
        return len(self.frames) - self.valid_count

    @property
    def invalid_fraction(self) -> float:
        return self.invalid_count / len(self.frames) if len(self.frames) else 0.0


@dataclass(frozen=True)
class EventInterval:
    """A labeled or predicted time span within one session."""

    start: float
    end: float
    label: str
    source: str = "ground_truth"
    attribution: frozenset[str] | None = None
    review_state: str = "unreviewed"

    def __post_init__(self) -> None:
        if not (0 <= self.start < self.end):
            raise ValueError(f"interval must satisfy 0 <= start < end, got [{self.start}, {self.end}]")
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        if self.review_state not in REVIEW_STATES:
            raise ValueError(f"unknown review_state {self.review_state!r}")

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class BiometricSample:
    timestamp: float
    signal: str
    value: float

    def __post_init__(self) -> None:
        if self.signal not in SIGNALS:
            raise ValueError(f"unknown signal {self.signal!r}")
        _check_signal_range(self.signal, self.value)


def _check_signal_range(signal: str, value: float) -> None:
    if signal in ("attention", "meditation"):
        if not (0.0 <= value <= 100.0):
            raise ValueError(f"{signal} value {value} outside [0, 100]")
    elif signal == "heart_rate":
        if not (0.0 < value < 300.0):
            raise ValueError(f"heart_rate value {value} outside (0, 300)")


@dataclass(frozen=True)
class LearnerMeta:
    gender: str = "unspecified"
    tags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.gender not in GENDERS:
            raise ValueError(f"unknown gender {self.gender!r}")


@dataclass(frozen=True)
class SessionBundle:
    """All streams of one session plus its ground-truth activity labels."""

    session_id: str
    learner_meta: LearnerMeta
    angles: AngleSeries
    biometrics: tuple[BiometricSample, ...]
    labels: tuple[EventInterval, ...]
    duration: float

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        for iv in self.labels:
            if iv.end > self.duration + 1e-9:
                raise ValueError(f"label [{iv.start}, {iv.end}] exceeds session duration {self.duration}")
        max_ts = 0.0
        if len(self.angles):
            max_ts = float(self.angles.timestamps[-1])
        if self.biometrics:
            max_ts = max(max_ts, max(s.timestamp for s in self.biometrics))
        if max_ts > self.duration + 1e-9:
            raise ValueError(f"duration {self.duration} is below last sample timestamp {max_ts}")

    def labels_for(self, label: str) -> tuple[EventInterval, ...]:
        return tuple(iv for iv in self.labels if iv.label == label)

    def biometrics_for(self, signal: str) -> tuple[BiometricSample, ...]:
        return tuple(s for s in self.biometrics if s.signal == signal)


def group_biometrics(samples: Sequence[BiometricSample]) -> dict[str, list[BiometricSample]]:
    """Group samples per signal, each group sorted by timestamp."""
    groups: dict[str, list[BiometricSample]] = {}
    for s in samples:
        groups.setdefault(s.signal, []).append(s)
    for g in groups.values():
        g.sort(key=lambda s: s.timestamp)
    return groups


# ---------------------------------------------------------------------------
# CSV parsing / serialization
# ---------------------------------------------------------------------------


def _read_rows(path: str | Path, expected_header: list[str]):
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError("empty file, expected header " + ",".join(expected_header), path, 1)
        if [h.strip() for h in header] != expected_header:
            raise DataFormatError(
                f"bad header {','.join(header)!r}, expected {','.join(expected_header)!r}", path, 1
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            yield lineno, row


def parse_angle_series(path: str | Path, fps: float) -> AngleSeries:
    """Parse an ``angles.csv`` file; empty angle cells mark invalid frames."""
    if fps <= 0:
        raise ValueError(f"fps must be positive, got {fps}")
    path = Path(path)
    frames: list[int] = []
    timestamps: list[float] = []
    cols: list[list[float]] = [[], [], []]
    valid: list[bool] = []
    prev_frame = -1
    prev_ts = -math.inf
    for lineno, row in _read_rows(path, ANGLES_HEADER):
        if len(row) != 5:
            raise DataFormatError(f"expected 5 cells, got {len(row)}", path, lineno)
        try:
            frame = int(row[0])
            ts = float(row[1])
        except ValueError as exc:
            raise DataFormatError(f"malformed row: {exc}", path, lineno) from None
        if frame < 0:
            raise DataFormatError(f"negative frame index {frame}", path, lineno)
        if frame <= prev_frame:
            raise DataFormatError(
                f"frame index {frame} not increasing (previous {prev_frame})", path, lineno
            )
        if ts <= prev_ts:
            raise DataFormatError(f"timestamp {ts} not increasing (previous {prev_ts})", path, lineno)
        row_valid = True
        values = []
        for cell in row[2:5]:
            cell = cell.strip()
            if cell == "":
                values.append(math.nan)
                row_valid = False
            else:
                try:
                    values.append(float(cell))
                except ValueError as exc:
                    raise DataFormatError(f"malformed angle cell: {exc}", path, lineno) from None
        frames.append(frame)
        timestamps.append(ts)
        for c, v in zip(cols, values):
            c.append(v)
        valid.append(row_valid)
        prev_frame, prev_ts = frame, ts

    series = AngleSeries(
        session_id=path.stem,
        fps=float(fps),
        frames=np.array(frames, dtype=np.int64),
        timestamps=np.array(timestamps, dtype=np.float64),
        angles=np.array(cols, dtype=np.float64).reshape(3, len(frames)),
        valid=np.array(valid, dtype=bool),
    )
    if series.valid_count < 2:
        raise InsufficientDataError(f"{path}: fewer than 2 valid frames ({series.valid_count})")
    log.info(
        "parsed %s: %d frames, %d invalid (%.1f%%)",
        path, len(series), series.invalid_count, 100 * series.invalid_fraction,
    )
    return series


def write_angle_series(series: AngleSeries, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ANGLES_HEADER)
        for i in range(len(series)):
            cells = [str(int(series.frames[i])), fmt_float(series.timestamps[i])]
            for a in range(3):
                v = series.angles[a, i]
                cells.append("" if math.isnan(v) else fmt_float(v))
            w.writerow(cells)


def parse_activity_labels(path: str | Path) -> list[EventInterval]:
    """Parse a ``labels.csv`` file into sorted ground-truth intervals."""
    path = Path(path)
    out: list[EventInterval] = []
    for lineno, row in _read_rows(path, LABELS_HEADER):
        if len(row) != 3:
            raise DataFormatError(f"expected 3 cells, got {len(row)}", path, lineno)
        label = row[0].strip()
        if not label:
            raise DataFormatError("empty label", path, lineno)
        try:
            start = float(row[1])
            end = float(row[2])
        except ValueError as exc:
            raise DataFormatError(f"malformed row: {exc}", path, lineno) from None
        if start < 0:
            raise DataFormatError(f"negative start {start}", path, lineno)
        if start >= end:
            raise DataFormatError(f"start {start} must be before end {end}", path, lineno)
        out.append(EventInterval(start, end, label, source="ground_truth"))
    out.sort(key=lambda iv: (iv.start, iv.end))
    by_label: dict[str, EventInterval] = {}
    for iv in out:
        prev = by_label.get(iv.label)
        if prev is not None and iv.start < prev.end:
            raise DataFormatError(
                f"label {iv.label!r} intervals [{prev.start}, {prev.end}] and "
                f"[{iv.start}, {iv.end}] overlap",
                path,
            )
        by_label[iv.label] = iv
    return out


def write_activity_labels(intervals: Sequence[EventInterval], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LABELS_HEADER)
        for iv in intervals:
            w.writerow([iv.label, fmt_float(iv.start), fmt_float(iv.end)])


def parse_biometric_series(path: str | Path) -> list[BiometricSample]:
    """Parse ``biometrics.csv``; result is ordered by signal then timestamp."""
    path = Path(path)
    out: list[BiometricSample] = []
    for lineno, row in _read_rows(path, BIOMETRICS_HEADER):
        if len(row) != 3:
            raise DataFormatError(f"expected 3 cells, got {len(row)}", path, lineno)
        signal = row[1].strip()
        if signal not in SIGNALS:
            raise DataFormatError(f"unknown signal {signal!r}", path, lineno)
        try:
            ts = float(row[0])
            value = float(row[2])
        except ValueError as exc:
            raise DataFormatError(f"malformed row: {exc}", path, lineno) from None
        if ts < 0:
            raise DataFormatError(f"negative timestamp {ts}", path, lineno)
        try:
            _check_signal_range(signal, value)
        except ValueError as exc:
            raise DataFormatError(str(exc), path, lineno) from None
        out.append(BiometricSample(ts, signal, value))
    out.sort(key=lambda s: (SIGNALS.index(s.signal), s.timestamp))
    return out


def write_biometric_series(samples: Sequence[BiometricSample], path: str | Path) -> None:
    ordered = sorted(samples, key=lambda s: (SIGNALS.index(s.signal), s.timestamp))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BIOMETRICS_HEADER)
        for s in ordered:
            w.writerow([fmt_float(s.timestamp), s.signal, fmt_float(s.value)])


# ---------------------------------------------------------------------------
# Session manifest
# ---------------------------------------------------------------------------

MANIFEST_KEYS = ("session_id", "fps", "duration_s", "gender", "angles", "labels", "biometrics")


def load_session_bundle(manifest_path: str | Path) -> SessionBundle:
    """Load a full session from its ``session.json`` manifest."""
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"invalid JSON: {exc}", manifest_path) from None
    missing = [k for k in MANIFEST_KEYS if k not in manifest]
    if missing:
        raise DataFormatError(f"manifest missing keys: {', '.join(missing)}", manifest_path)
    base = manifest_path.parent
    angles = parse_angle_series(base / manifest["angles"], float(manifest["fps"]))
    angles = AngleSeries(
        session_id=str(manifest["session_id"]),
        fps=angles.fps,
        frames=angles.frames,
        timestamps=angles.timestamps,
        angles=angles.angles,
        valid=angles.valid,
    )
    labels = parse_activity_labels(base / manifest["labels"])
    biometrics = parse_biometric_series(base / manifest["biometrics"])
    meta = LearnerMeta(gender=manifest.get("gender", "unspecified"), tags=tuple(manifest.get("tags", ())))
    try:
        return SessionBundle(
            session_id=str(manifest["session_id"]),
            learner_meta=meta,
            angles=angles,
            biometrics=tuple(biometrics),
            labels=tuple(labels),
            duration=float(manifest["duration_s"]),
        )
    except ValueError as exc:
        raise DataFormatError(str(exc), manifest_path) from None


def write_session_bundle(bundle: SessionBundle, out_dir: str | Path) -> Path:
    """Write the three stream files plus manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_angle_series(bundle.angles, out_dir / "angles.csv")
    write_activity_labels(bundle.labels, out_dir / "labels.csv")
    write_biometric_series(bundle.biometrics, out_dir / "biometrics.csv")
    manifest = {
        "session_id": bundle.session_id,
        "fps": bundle.angles.fps,
        "duration_s": bundle.duration,
        "gender": bundle.learner_meta.gender,
        "tags": list(bundle.learner_meta.tags),
        "angles": "angles.csv",
        "labels": "labels.csv",
        "biometrics": "biometrics.csv",
    }
    manifest_path = out_dir / "session.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest_path


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationConfig:
    """Gap rule: an inter-sample interval above 2x the nominal period counts
    as lost data; a session is excluded once any signal loses more than
    ``exclusion_threshold_s`` in total."""

    nominal_period_s: float = 1.0
    exclusion_threshold_s: float = 300.0


@dataclass(frozen=True)
class ValidationReport:
    session_id: str
    signal_gap_s: dict[str, float]
    signal_counts: dict[str, int]
    label_coverage: float
    invalid_frame_fraction: float
    excluded: bool
    nominal_period_s: float
    exclusion_threshold_s: float

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "signal_gap_s": dict(self.signal_gap_s),
            "signal_counts": dict(self.signal_counts),
            "label_coverage": self.label_coverage,
            "invalid_frame_fraction": self.invalid_frame_fraction,
            "excluded": self.excluded,
            "nominal_period_s": self.nominal_period_s,
            "exclusion_threshold_s": self.exclusion_threshold_s,
        }


def validate_session(bundle: SessionBundle, config: ValidationConfig = ValidationConfig()) -> ValidationReport:
    """Data-quality report: per-signal gap totals, label coverage, invalid frames.

    Only gaps between consecutive samples of a signal are counted; signals
    with fewer than two samples report zero gap (their counts tell the story).
    """
    groups = group_biometrics(bundle.biometrics)
    gap_limit = 2.0 * config.nominal_period_s
    gaps: dict[str, float] = {}
    counts: dict[str, int] = {}
    for signal in SIGNALS:
        samples = groups.get(signal, [])
        counts[signal] = len(samples)
        total = 0.0
        for a, b in zip(samples, samples[1:]):
            dt = b.timestamp - a.timestamp
            if dt > gap_limit:
                total += dt
        gaps[signal] = total
    excluded = any(g > config.exclusion_threshold_s for g in gaps.values())

    covered = 0.0
    prev_end = 0.0
    for iv in sorted(bundle.labels, key=lambda iv: iv.start):
        start = max(iv.start, prev_end)
        if iv.end > start:
            covered += iv.end - start
            prev_end = iv.end
    coverage = covered / bundle.duration if bundle.duration > 0 else 0.0

    return ValidationReport(
        session_id=bundle.session_id,
        signal_gap_s=gaps,
        signal_counts=counts,
        label_coverage=coverage,
        invalid_frame_fraction=bundle.angles.invalid_fraction,
        excluded=excluded,
        nominal_period_s=config.nominal_period_s,
        exclusion_threshold_s=config.exclusion_threshold_s,
    )
