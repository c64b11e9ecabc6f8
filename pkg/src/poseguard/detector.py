"""Sliding-window head-pose deviation detector.

Pipeline: per-angle global mean/std over the whole session, sliding-window
means on a fixed stride grid, flagging of windows whose mean deviates from
the global mean by more than ``n`` standard deviations on any angle, and
merging of flagged windows that share frames into disjoint predicted events.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .session import (
    ANGLES,
    AngleSeries,
    EventInterval,
    InsufficientDataError,
    fmt_float,
)

WINDOW_UNITS = ("frames", "seconds")


@dataclass(frozen=True)
class DetectorParams:
    """Detection knobs: threshold multiplier ``n`` and window length ``w``.

    ``w`` is in frames by default; with ``window_unit="seconds"`` the
    effective window is ``round(w * fps)`` frames (at least 1). Windows are
    placed every ``stride`` frames starting at frame 0; a stride larger than
    the window would leave unscanned gaps and is rejected. Windows whose
    fraction of valid frames falls below ``min_window_coverage`` are never
    flagged.
    """

    n: float
    w: int
    window_unit: str = "frames"
    stride: int = 1
    min_window_coverage: float = 0.5

    def __post_init__(self) -> None:
        if not (self.n > 0) or not math.isfinite(self.n):
            raise ValueError(f"n must be a positive real, got {self.n}")
        if not isinstance(self.w, int) or self.w < 1:
            raise ValueError(f"w must be a positive integer, got {self.w!r}")
        if self.window_unit not in WINDOW_UNITS:
            raise ValueError(f"window_unit must be one of {WINDOW_UNITS}, got {self.window_unit!r}")
        if not isinstance(self.stride, int) or self.stride < 1:
            raise ValueError(f"stride must be a positive integer of frames, got {self.stride!r}")
        if not (0 < self.min_window_coverage <= 1):
            raise ValueError(f"min_window_coverage must be in (0, 1], got {self.min_window_coverage}")
        if self.window_unit == "frames" and self.stride > self.w:
            raise ValueError(f"stride {self.stride} exceeds window of {self.w} frames")

    def effective_window(self, fps: float) -> int:
        if self.window_unit == "seconds":
            return max(1, round(self.w * fps))
        return self.w

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "w": self.w,
            "window_unit": self.window_unit,
            "stride": self.stride,
            "min_window_coverage": self.min_window_coverage,
        }


@dataclass(frozen=True)
class AngleStats:
    mu: float
    sigma: float
    valid_count: int


@dataclass(frozen=True)
class PerAngleStats:
    yaw: AngleStats
    pitch: AngleStats
    roll: AngleStats

    def get(self, angle: str) -> AngleStats:
        return getattr(self, angle)

    def to_dict(self) -> dict:
        return {
            a: {"mu": self.get(a).mu, "sigma": self.get(a).sigma, "valid_count": self.get(a).valid_count}
            for a in ANGLES
        }


@dataclass(frozen=True)
class Window:
    start_frame: int
    end_frame: int
    means: dict[str, float]
    coverage: float
    eligible: bool


@dataclass(frozen=True)
class WindowedSeries:
    """Column layout of all sliding windows of one series.

    ``means[k, a]`` is the mean of angle ``a`` over the valid frames of
    window ``k`` (NaN when the window holds no valid frame). Every window
    spans exactly ``width`` frames: ``end = start + width - 1``.
    """

    start_frames: np.ndarray     # int64, ascending, spaced by stride
    means: np.ndarray            # float64, shape (k, 3) in ANGLES order
    coverage: np.ndarray         # float64 in [0, 1]
    eligible: np.ndarray         # bool
    width: int
    stride: int
    fps: float

    @property
    def end_frames(self) -> np.ndarray:
        return self.start_frames + self.width - 1

    def __len__(self) -> int:
        return len(self.start_frames)

    @property
    def windows(self) -> Iterator[Window]:
        for k in range(len(self.start_frames)):
            yield Window(
                start_frame=int(self.start_frames[k]),
                end_frame=int(self.start_frames[k]) + self.width - 1,
                means={a: float(self.means[k, i]) for i, a in enumerate(ANGLES)},
                coverage=float(self.coverage[k]),
                eligible=bool(self.eligible[k]),
            )


@dataclass(frozen=True)
class FlaggedWindows:
    """Windows whose mean deviated beyond the threshold, with the angles
    responsible recorded per window."""

    start_frames: np.ndarray     # int64, ascending
    end_frames: np.ndarray       # int64
    attribution: np.ndarray      # bool, shape (k, 3) in ANGLES order
    fps: float

    def __len__(self) -> int:
        return len(self.start_frames)


@dataclass(frozen=True)
class DetectionResult:
    params: DetectorParams
    stats: PerAngleStats
    events: tuple[EventInterval, ...]
    flagged_window_count: int


def _dense_columns(series: AngleSeries) -> tuple[np.ndarray, np.ndarray]:
    """Spread samples onto the contiguous frame axis [0, last_frame].

    Frame indices absent from the series behave like invalid frames.
    """
    if len(series) == 0:
        raise InsufficientDataError("empty angle series")
    length = int(series.frames[-1]) + 1
    values = np.full((3, length), np.nan)
    valid = np.zeros(length, dtype=bool)
    values[:, series.frames] = series.angles
    valid[series.frames] = series.valid
    values[:, ~valid] = np.nan
    return values, valid


def global_stats(series: AngleSeries) -> PerAngleStats:
    """Per-angle mean and sample standard deviation over all valid frames."""
    mask = series.valid
    count = int(np.count_nonzero(mask))
    if count < 2:
        raise InsufficientDataError(f"need at least 2 valid samples, got {count}")
    per: list[AngleStats] = []
    for i in range(3):
        x = series.angles[i, mask]
        per.append(AngleStats(mu=float(np.mean(x)), sigma=float(np.std(x, ddof=1)), valid_count=count))
    return PerAngleStats(*per)


def window_means(series: AngleSeries, params: DetectorParams) -> WindowedSeries:
    """Mean of each angle over every window on the stride grid.

    Window means are taken over valid frames only; a window's coverage is
    its valid-frame share of the full window width. Trailing frames that do
    not fill a complete window are dropped.
    """
    values, valid = _dense_columns(series)
    length = valid.shape[0]
    width = params.effective_window(series.fps)
    if width > length:
        raise InsufficientDataError(
            f"effective window of {width} frames exceeds series length {length}"
        )
    if params.stride > width:
        raise ValueError(f"stride {params.stride} exceeds effective window {width}")
    starts = np.arange(0, length - width + 1, params.stride, dtype=np.int64)

    zeroed = np.where(valid, values, 0.0)
    csum = np.concatenate([np.zeros((3, 1)), np.cumsum(zeroed, axis=1)], axis=1)
    ccount = np.concatenate([[0], np.cumsum(valid)])
    sums = csum[:, starts + width] - csum[:, starts]          # (3, k)
    counts = ccount[starts + width] - ccount[starts]          # (k,)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / counts, np.nan).T  # (k, 3)
    coverage = counts / width
    eligible = coverage >= params.min_window_coverage
    return WindowedSeries(
        start_frames=starts,
        means=means,
        coverage=coverage,
        eligible=eligible,
        width=width,
        stride=params.stride,
        fps=series.fps,
    )


def flag_windows(windowed: WindowedSeries, stats: PerAngleStats, n: float) -> FlaggedWindows:
    """Flag eligible windows where any angle mean deviates beyond n sigma.

    The comparison is strict: with sigma = 0 any nonzero deviation flags,
    and a zero deviation never does.
    """
    mu = np.array([stats.get(a).mu for a in ANGLES])
    threshold = n * np.array([stats.get(a).sigma for a in ANGLES])
    with np.errstate(invalid="ignore"):
        exceed = np.abs(windowed.means - mu) > threshold       # NaN compares False
    flagged = exceed.any(axis=1) & windowed.eligible
    idx = np.flatnonzero(flagged)
    return FlaggedWindows(
        start_frames=windowed.start_frames[idx],
        end_frames=windowed.start_frames[idx] + windowed.width - 1,
        attribution=exceed[idx],
        fps=windowed.fps,
    )


def merge_events(flagged: FlaggedWindows, fps: float) -> tuple[EventInterval, ...]:
    """Coalesce flagged windows that share at least one frame, transitively
    and across angles; each event covers [first_frame/fps, (last_frame+1)/fps)."""
    if len(flagged) == 0:
        return ()
    s = flagged.start_frames
    e = np.maximum.accumulate(flagged.end_frames)
    new_event = np.concatenate([[True], s[1:] > e[:-1]])
    bounds = np.flatnonzero(new_event)
    ev_start = s[bounds]
    ev_end = e[np.concatenate([bounds[1:] - 1, [len(s) - 1]])]
    attr = np.logical_or.reduceat(flagged.attribution, bounds, axis=0)
    events = []
    for k in range(len(bounds)):
        names = frozenset(a for i, a in enumerate(ANGLES) if attr[k, i])
        events.append(
            EventInterval(
                start=float(ev_start[k] / fps),
                end=float((ev_end[k] + 1) / fps),
                label="predicted",
                source="predicted",
                attribution=names,
            )
        )
    return tuple(events)


def detect(series: AngleSeries, params: DetectorParams) -> DetectionResult:
    """Full pipeline: global stats, window means, threshold flags, merge."""
    stats = global_stats(series)
    windowed = window_means(series, params)
    flagged = flag_windows(windowed, stats, params.n)
    events = merge_events(flagged, series.fps)
    return DetectionResult(
        params=params,
        stats=stats,
        events=events,
        flagged_window_count=len(flagged),
    )


# ---------------------------------------------------------------------------
# Output formats
# ---------------------------------------------------------------------------

EVENTS_HEADER = "start_s,end_s,attribution"


def attribution_str(attribution: frozenset[str] | None) -> str:
    if not attribution:
        return ""
    return "|".join(a for a in ANGLES if a in attribution)


def write_events_csv(result: DetectionResult, path: str | Path) -> None:
    lines = [EVENTS_HEADER]
    for ev in result.events:
        lines.append(f"{fmt_float(ev.start)},{fmt_float(ev.end)},{attribution_str(ev.attribution)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_events_csv(path: str | Path) -> list[EventInterval]:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0] != EVENTS_HEADER:
        raise ValueError(f"{path}: expected header {EVENTS_HEADER!r}")
    events = []
    for line in text[1:]:
        if not line.strip():
            continue
        start_s, end_s, attr = line.split(",")
        names = frozenset(attr.split("|")) if attr else frozenset()
        events.append(
            EventInterval(float(start_s), float(end_s), "predicted", source="predicted", attribution=names)
        )
    return events


def detection_result_to_dict(result: DetectionResult) -> dict:
    """JSON-ready view shared by the CLI sidecar and the review service."""
    return {
        "params": result.params.to_dict(),
        "stats": result.stats.to_dict(),
        "flagged_window_count": result.flagged_window_count,
        "event_count": len(result.events),
        "events": [
            {
                "start_s": ev.start,
                "end_s": ev.end,
                "attribution": [a for a in ANGLES if ev.attribution and a in ev.attribution],
            }
            for ev in result.events
        ],
    }


def write_detection_sidecar(result: DetectionResult, path: str | Path) -> None:
    Path(path).write_text(json.dumps(detection_result_to_dict(result), indent=2) + "\n", encoding="utf-8")
