"""Scoring of predicted events against ground truth and (n, w) grid sweeps.

Sensitivity here is the fraction of ground-truth target events whose
temporal intersection with the union of predicted events exceeds the match
policy's minimum overlap. Events-per-hour and flagged-fraction quantify the
review burden a parameter choice would impose.
"""

from __future__ import annotations

import csv
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import __version__
from .detector import DetectionResult, DetectorParams, detect
from .session import EventInterval, InsufficientDataError, SessionBundle, fmt_float


@dataclass(frozen=True)
class MatchPolicy:
    """min_overlap=0 means any positive overlap counts. With one_to_many a
    single predicted event may account for several truth events; otherwise
    each predicted event is consumed by at most one truth (greedy by
    largest overlap)."""

    min_overlap: float = 0.0
    one_to_many: bool = True

    def __post_init__(self) -> None:
        if self.min_overlap < 0:
            raise ValueError(f"min_overlap must be >= 0, got {self.min_overlap}")

    def to_dict(self) -> dict:
        return {"min_overlap": self.min_overlap, "one_to_many": self.one_to_many}


@dataclass(frozen=True)
class TruthMatch:
    truth_index: int
    matched: bool
    predicted_indices: tuple[int, ...]


@dataclass(frozen=True)
class MatchReport:
    per_truth: tuple[TruthMatch, ...]
    true_positive_truths: int
    missed_truths: int
    sensitivity: float | None  # None when there are no target truths


def _check_sorted(events: Sequence[EventInterval], name: str) -> None:
    for a, b in zip(events, events[1:]):
        if b.start < a.start:
            raise ValueError(f"{name} events are not sorted by start")


def _merged_spans(events: Sequence[EventInterval]) -> list[tuple[float, float]]:
    spans: list[tuple[float, float]] = []
    for ev in events:
        if spans and ev.start <= spans[-1][1]:
            spans[-1] = (spans[-1][0], max(spans[-1][1], ev.end))
        else:
            spans.append((ev.start, ev.end))
    return spans


def _overlap(a_start: float, a_end: float, b_start: float, b_end: float) -> float:
    return max(0.0, min(a_end, b_end) - max(a_start, b_start))


def match_events(
    predicted: Sequence[EventInterval],
    truth: Sequence[EventInterval],
    policy: MatchPolicy = MatchPolicy(),
) -> MatchReport:
    """Match each truth event against the predictions under the policy."""
    _check_sorted(predicted, "predicted")
    _check_sorted(truth, "truth")
    if truth:
        shortest = min(t.duration for t in truth)
        if policy.min_overlap >= shortest:
            warnings.warn(
                f"min_overlap {policy.min_overlap} is not below the shortest truth "
                f"duration {shortest}; matches may be impossible",
                stacklevel=2,
            )

    per_truth: list[TruthMatch] = []
    if policy.one_to_many:
        union = _merged_spans(predicted)
        for ti, t in enumerate(truth):
            inter = sum(_overlap(t.start, t.end, s, e) for s, e in union)
            touching = tuple(
                pi for pi, p in enumerate(predicted) if _overlap(t.start, t.end, p.start, p.end) > 0
            )
            per_truth.append(TruthMatch(ti, inter > policy.min_overlap, touching))
    else:
        used: set[int] = set()
        for ti, t in enumerate(truth):
            best, best_overlap = None, policy.min_overlap
            for pi, p in enumerate(predicted):
                if pi in used:
                    continue
                o = _overlap(t.start, t.end, p.start, p.end)
                if o > best_overlap:
                    best, best_overlap = pi, o
            if best is not None:
                used.add(best)
                per_truth.append(TruthMatch(ti, True, (best,)))
            else:
                per_truth.append(TruthMatch(ti, False, ()))

    matched = sum(1 for m in per_truth if m.matched)
    total = len(truth)
    return MatchReport(
        per_truth=tuple(per_truth),
        true_positive_truths=matched,
        missed_truths=total - matched,
        sensitivity=(matched / total) if total else None,
    )


def events_per_hour(result: DetectionResult, duration: float) -> float:
    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    return len(result.events) * 3600.0 / duration


def flagged_fraction(result: DetectionResult, duration: float) -> float:
    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    return sum(ev.duration for ev in result.events) / duration


# ---------------------------------------------------------------------------
# Parameter sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepCell:
    n: float
    w: int
    mean_sensitivity: float | None
    mean_events_per_hour: float
    mean_flagged_fraction: float
    sessions_used: int
    sessions_with_truth: int


@dataclass(frozen=True)
class SweepGrid:
    n_values: tuple[float, ...]
    w_values: tuple[int, ...]
    window_unit: str
    stride: int
    target_label: str
    policy: MatchPolicy
    cells: tuple[SweepCell, ...]  # ordered by (n, w)
    skipped_sessions: tuple[tuple[str, str], ...] = ()

    def cell(self, n: float, w: int) -> SweepCell:
        for c in self.cells:
            if c.n == n and c.w == w:
                return c
        raise KeyError(f"no cell for n={n}, w={w}")


def _session_metrics(
    bundle: SessionBundle,
    n_values: Sequence[float],
    w_values: Sequence[int],
    window_unit: str,
    stride: int,
    min_window_coverage: float,
    policy: MatchPolicy,
    target_label: str,
) -> list[tuple[float | None, float, float]]:
    """Per-cell (sensitivity, events/hour, flagged fraction) for one session,
    in (n, w) lexicographic order."""
    truth = sorted(bundle.labels_for(target_label), key=lambda iv: iv.start)
    out = []
    for n in n_values:
        for w in w_values:
            params = DetectorParams(
                n=n, w=w, window_unit=window_unit, stride=stride, min_window_coverage=min_window_coverage
            )
            result = detect(bundle.angles, params)
            report = match_events(result.events, truth, policy)
            out.append(
                (
                    report.sensitivity,
                    events_per_hour(result, bundle.duration),
                    flagged_fraction(result, bundle.duration),
                )
            )
    return out


def sweep(
    sessions: Sequence[SessionBundle],
    n_grid: Sequence[float],
    w_grid: Sequence[int],
    policy: MatchPolicy = MatchPolicy(),
    target_label: str = "phone",
    window_unit: str = "frames",
    stride: int = 1,
    min_window_coverage: float = 0.5,
    jobs: int = 1,
) -> SweepGrid:
    """Detect at every (n, w) over every session and macro-average the
    per-session metrics. Sessions whose angle data cannot support detection
    are skipped and recorded; sessions without target truths contribute to
    the burden metrics but not to sensitivity."""
    if not sessions:
        raise InsufficientDataError("no sessions given")
    if not n_grid or not w_grid:
        raise InsufficientDataError("empty parameter grid")
    n_values = tuple(sorted(set(float(n) for n in n_grid)))
    w_values = tuple(sorted(set(int(w) for w in w_grid)))

    def run(bundle: SessionBundle):
        try:
            return _session_metrics(
                bundle, n_values, w_values, window_unit, stride, min_window_coverage, policy, target_label
            )
        except InsufficientDataError as exc:
            return str(exc)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, sessions))
    else:
        results = [run(b) for b in sessions]

    skipped = tuple(
        (bundle.session_id, res) for bundle, res in zip(sessions, results) if isinstance(res, str)
    )
    usable = [res for res in results if not isinstance(res, str)]
    if not usable:
        raise InsufficientDataError("no session had enough angle data for detection")

    cells = []
    idx = 0
    for n in n_values:
        for w in w_values:
            sens = [m[idx][0] for m in usable if m[idx][0] is not None]
            eph = [m[idx][1] for m in usable]
            frac = [m[idx][2] for m in usable]
            cells.append(
                SweepCell(
                    n=n,
                    w=w,
                    mean_sensitivity=(sum(sens) / len(sens)) if sens else None,
                    mean_events_per_hour=sum(eph) / len(eph),
                    mean_flagged_fraction=sum(frac) / len(frac),
                    sessions_used=len(usable),
                    sessions_with_truth=len(sens),
                )
            )
            idx += 1
    return SweepGrid(
        n_values=n_values,
        w_values=w_values,
        window_unit=window_unit,
        stride=stride,
        target_label=target_label,
        policy=policy,
        cells=tuple(cells),
        skipped_sessions=skipped,
    )


SWEEP_HEADER = ["n", "w", "sensitivity", "events_per_hour", "flagged_fraction"]


def export_heatmap_csv(grid: SweepGrid, path: str | Path) -> None:
    """Long-form CSV of the grid, rows sorted by (n, w)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for cell in grid.cells:
            w.writerow(
                [
                    fmt_float(cell.n),
                    str(cell.w),
                    "" if cell.mean_sensitivity is None else fmt_float(cell.mean_sensitivity),
                    fmt_float(cell.mean_events_per_hour),
                    fmt_float(cell.mean_flagged_fraction),
                ]
            )


def read_heatmap_csv(path: str | Path) -> SweepGrid:
    """Rebuild a value-only grid from an exported CSV (metadata defaults)."""
    cells = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != SWEEP_HEADER:
            raise ValueError(f"{path}: bad sweep header {header!r}")
        for row in reader:
            if not row:
                continue
            cells.append(
                SweepCell(
                    n=float(row[0]),
                    w=int(row[1]),
                    mean_sensitivity=None if row[2] == "" else float(row[2]),
                    mean_events_per_hour=float(row[3]),
                    mean_flagged_fraction=float(row[4]),
                    sessions_used=0,
                    sessions_with_truth=0,
                )
            )
    n_values = tuple(sorted(set(c.n for c in cells)))
    w_values = tuple(sorted(set(c.w for c in cells)))
    return SweepGrid(
        n_values=n_values,
        w_values=w_values,
        window_unit="frames",
        stride=1,
        target_label="phone",
        policy=MatchPolicy(),
        cells=tuple(cells),
    )


def sweep_grid_to_dict(grid: SweepGrid) -> dict:
    return {
        "n_values": list(grid.n_values),
        "w_values": list(grid.w_values),
        "window_unit": grid.window_unit,
        "stride": grid.stride,
        "target_label": grid.target_label,
        "policy": grid.policy.to_dict(),
        "cells": [
            {
                "n": c.n,
                "w": c.w,
                "sensitivity": c.mean_sensitivity,
                "events_per_hour": c.mean_events_per_hour,
                "flagged_fraction": c.mean_flagged_fraction,
                "sessions_used": c.sessions_used,
                "sessions_with_truth": c.sessions_with_truth,
            }
            for c in grid.cells
        ],
        "skipped_sessions": [{"session_id": sid, "reason": reason} for sid, reason in grid.skipped_sessions],
        "tool_version": __version__,
    }


def write_sweep_meta(grid: SweepGrid, path: str | Path) -> None:
    meta = sweep_grid_to_dict(grid)
    del meta["cells"]
    Path(path).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
