"""Biometric statistics around target events.

For each target event, per-signal means are taken over a fixed window
before the event, over the event itself, and over a window after it; the
three periods are compared with paired t-tests and pooled-SD effect sizes,
per cohort (all / female / male). The t distribution's CDF is evaluated
through the regularized incomplete beta function so reported p-values are
reproducible without external dependencies.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .session import (
    SIGNALS,
    EventInterval,
    InsufficientDataError,
    SessionBundle,
    fmt_float,
    group_biometrics,
)

PERIODS = ("before", "during", "after")
COMPARISONS = (("before", "during"), ("during", "after"), ("before", "after"))
COHORTS = ("all", "female", "male")


# ---------------------------------------------------------------------------
# t distribution via the regularized incomplete beta function
# ---------------------------------------------------------------------------

_TINY = 1e-300
_CF_EPS = 1e-16


def _beta_cf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, 400):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def t_cdf(t: float, df: float) -> float:
    """CDF of the t distribution; df may be fractional (Welch corrections)."""
    if df < 1:
        raise ValueError(f"df must be >= 1, got {df}")
    if t == 0.0:
        return 0.5
    if math.isinf(t):
        return 0.0 if t < 0 else 1.0
    x = df / (df + t * t)
    tail = betainc_reg(df / 2.0, 0.5, x)  # = 2 P(T > |t|)
    return 1.0 - 0.5 * tail if t > 0 else 0.5 * tail


def two_tailed_p(t: float, df: float) -> float:
    """2 * (1 - F(|t|)), evaluated directly from the beta tail for accuracy."""
    if df < 1:
        raise ValueError(f"df must be >= 1, got {df}")
    if t == 0.0:
        return 1.0
    if math.isinf(t):
        return 0.0
    return betainc_reg(df / 2.0, 0.5, df / (df + t * t))


# ---------------------------------------------------------------------------
# Tests and effect sizes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TestResult:
    """Paired (or Welch) comparison. ``d`` is the pooled-SD effect size of
    the two condition distributions (sign follows b - a); it is NaN when the
    pooled SD is zero. ``df`` is integral for the paired form."""

    t: float
    df: float
    p: float
    d: float
    n_pairs: int
    comparison: tuple[str, str, str, str] | None = None  # (signal, period_a, period_b, cohort)


def _clean_pairs(a: Sequence[float | None], b: Sequence[float | None]) -> tuple[list[float], list[float]]:
    if len(a) != len(b):
        raise ValueError(f"paired inputs must have equal length, got {len(a)} and {len(b)}")
    xs, ys = [], []
    for x, y in zip(a, b):
        if x is None or y is None:
            continue
        if isinstance(x, float) and math.isnan(x):
            continue
        if isinstance(y, float) and math.isnan(y):
            continue
        xs.append(float(x))
        ys.append(float(y))
    return xs, ys


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs)


def _sample_sd(xs: Sequence[float]) -> float:
    m = _mean(xs)
    return math.sqrt(math.fsum((x - m) ** 2 for x in xs) / (len(xs) - 1))


def cohens_d_from_stats(mean_a: float, sd_a: float, mean_b: float, sd_b: float) -> float:
    """Pooled-SD effect size (mean_b - mean_a) / rms(sd_a, sd_b)."""
    pooled = math.sqrt((sd_a * sd_a + sd_b * sd_b) / 2.0)
    if pooled == 0.0:
        raise ValueError("pooled standard deviation is zero")
    return (mean_b - mean_a) / pooled


def cohens_d_pooled(a: Sequence[float], b: Sequence[float]) -> float:
    """Pooled-SD effect size of two observed condition distributions."""
    if len(a) < 2 or len(b) < 2:
        raise InsufficientDataError("need at least 2 observations per condition")
    return cohens_d_from_stats(_mean(a), _sample_sd(a), _mean(b), _sample_sd(b))


def paired_t_test(
    a: Sequence[float | None],
    b: Sequence[float | None],
    comparison: tuple[str, str, str, str] | None = None,
) -> TestResult:
    """Two-tailed paired t-test on a - b; pairs with a missing side are
    dropped first. Zero-variance differences pin t to 0 (p=1) when the mean
    difference is zero and to +/-inf (p=0) otherwise."""
    xs, ys = _clean_pairs(a, b)
    n = len(xs)
    if n < 2:
        raise InsufficientDataError(f"need at least 2 complete pairs, got {n}")
    diffs = [x - y for x, y in zip(xs, ys)]
    md = _mean(diffs)
    sd = _sample_sd(diffs)
    df = n - 1
    if sd == 0.0:
        t = 0.0 if md == 0.0 else math.copysign(math.inf, md)
        p = 1.0 if md == 0.0 else 0.0
    else:
        t = md / (sd / math.sqrt(n))
        p = two_tailed_p(t, df)
    try:
        d = cohens_d_pooled(xs, ys)
    except ValueError:
        d = math.nan
    return TestResult(t=t, df=float(df), p=p, d=d, n_pairs=n, comparison=comparison)


def welch_t_test(
    a: Sequence[float | None],
    b: Sequence[float | None],
    comparison: tuple[str, str, str, str] | None = None,
) -> TestResult:
    """Independent-samples Welch variant (sensitivity analysis only)."""
    xs = [float(x) for x in a if x is not None and not math.isnan(float(x))]
    ys = [float(y) for y in b if y is not None and not math.isnan(float(y))]
    if len(xs) < 2 or len(ys) < 2:
        raise InsufficientDataError("need at least 2 observations per group")
    ma, mb = _mean(xs), _mean(ys)
    va, vb = _sample_sd(xs) ** 2, _sample_sd(ys) ** 2
    na, nb = len(xs), len(ys)
    se2 = va / na + vb / nb
    if se2 == 0.0:
        t = 0.0 if ma == mb else math.copysign(math.inf, ma - mb)
        p = 1.0 if ma == mb else 0.0
        df = float(na + nb - 2)
    else:
        t = (ma - mb) / math.sqrt(se2)
        df = se2 * se2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
        df = max(df, 1.0)
        p = two_tailed_p(t, df)
    try:
        d = cohens_d_pooled(xs, ys)
    except ValueError:
        d = math.nan
    return TestResult(t=t, df=df, p=p, d=d, n_pairs=min(na, nb), comparison=comparison)


# ---------------------------------------------------------------------------
# Event window extraction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EventTriplet:
    """Per-signal means before / during / after one target event. The before
    window is [start - L, start), during is [start, end], after is
    (end, end + L]; windows are truncated at the session boundaries and a
    mean is None when its window holds no samples."""

    session_id: str
    event: EventInterval
    window_len: float
    before: dict[str, float | None]
    during: dict[str, float | None]
    after: dict[str, float | None]

    def period(self, name: str) -> dict[str, float | None]:
        return getattr(self, name)


def extract_triplets(
    bundle: SessionBundle, target_label: str = "phone", window_len: float = 15.0
) -> list[EventTriplet]:
    """One triplet per target event, in event order."""
    groups = group_biometrics(bundle.biometrics)
    triplets = []
    for ev in sorted(bundle.labels_for(target_label), key=lambda iv: iv.start):
        windows = {
            "before": (max(0.0, ev.start - window_len), ev.start, "left_closed"),
            "during": (ev.start, ev.end, "closed"),
            "after": (ev.end, min(bundle.duration, ev.end + window_len), "right_closed"),
        }
        means: dict[str, dict[str, float | None]] = {p: {} for p in PERIODS}
        for signal in SIGNALS:
            samples = groups.get(signal, [])
            for period, (lo, hi, kind) in windows.items():
                if kind == "left_closed":
                    vals = [s.value for s in samples if lo <= s.timestamp < hi]
                elif kind == "closed":
                    vals = [s.value for s in samples if lo <= s.timestamp <= hi]
                else:
                    vals = [s.value for s in samples if lo < s.timestamp <= hi]
                means[period][signal] = _mean(vals) if vals else None
        triplets.append(
            EventTriplet(
                session_id=bundle.session_id,
                event=ev,
                window_len=window_len,
                before=means["before"],
                during=means["during"],
                after=means["after"],
            )
        )
    return triplets


# ---------------------------------------------------------------------------
# Summary table and full study
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SummaryCell:
    mean: float
    sd: float  # 0.0 when n == 1 (single observation)
    n: int


@dataclass(frozen=True)
class SummaryTable:
    """Mean/SD of the per-event period means, per (signal, cohort, period)."""

    cells: dict[tuple[str, str, str], SummaryCell]

    def get(self, signal: str, cohort: str, period: str) -> SummaryCell | None:
        return self.cells.get((signal, cohort, period))

    def to_rows(self) -> list[dict]:
        rows = []
        for signal in SIGNALS:
            for cohort in COHORTS:
                if not any((signal, cohort, p) in self.cells for p in PERIODS):
                    continue
                row: dict = {"signal": signal, "cohort": cohort}
                for period in PERIODS:
                    cell = self.cells.get((signal, cohort, period))
                    row[period] = (
                        None if cell is None else {"mean": cell.mean, "sd": cell.sd, "n": cell.n}
                    )
                rows.append(row)
        return rows


def _in_cohort(gender: str, cohort: str) -> bool:
    return cohort == "all" or gender == cohort


def _cell_stats(values: list[float]) -> SummaryCell | None:
    if not values:
        return None
    sd = _sample_sd(values) if len(values) > 1 else 0.0
    return SummaryCell(mean=_mean(values), sd=sd, n=len(values))


def summarize(
    sessions: Sequence[SessionBundle],
    target_label: str = "phone",
    window_len: float = 15.0,
    cohorts: Sequence[str] = COHORTS,
) -> SummaryTable:
    """Table of per-period means/SDs; each event contributes one observation,
    so the "all" row is the pooled recomputation, not a cohort average."""
    per_session = [(b.learner_meta.gender, extract_triplets(b, target_label, window_len)) for b in sessions]
    cells: dict[tuple[str, str, str], SummaryCell] = {}
    for signal in SIGNALS:
        for cohort in cohorts:
            for period in PERIODS:
                values = [
                    trip.period(period)[signal]
                    for gender, trips in per_session
                    if _in_cohort(gender, cohort)
                    for trip in trips
                    if trip.period(period)[signal] is not None
                ]
                cell = _cell_stats(values)
                if cell is not None:
                    cells[(signal, cohort, period)] = cell
    return SummaryTable(cells=cells)


@dataclass(frozen=True)
class DurationStats:
    mean: float
    sd: float
    n: int


@dataclass(frozen=True)
class StudyConfig:
    target_label: str = "phone"
    window_len: float = 15.0
    cohorts: tuple[str, ...] = COHORTS
    aggregate: str = "per_event"  # or "per_learner"
    use_welch: bool = False

    def __post_init__(self) -> None:
        if self.aggregate not in ("per_event", "per_learner"):
            raise ValueError(f"unknown aggregate {self.aggregate!r}")


@dataclass(frozen=True)
class StudyReport:
    tests: dict[tuple[str, str, str, str], TestResult]
    skipped: dict[tuple[str, str, str, str], str]
    summary: SummaryTable
    response_times: dict[str, DurationStats]
    config: StudyConfig
    n_sessions: int


def _period_observations(
    per_session: list[tuple[str, list[EventTriplet]]],
    signal: str,
    cohort: str,
    aggregate: str,
) -> dict[str, list[float | None]]:
    """Aligned observation lists per period; index i of every list refers to
    the same event (or the same learner under per_learner aggregation)."""
    out: dict[str, list[float | None]] = {p: [] for p in PERIODS}
    for gender, trips in per_session:
        if not _in_cohort(gender, cohort):
            continue
        if aggregate == "per_event":
            for trip in trips:
                for p in PERIODS:
                    out[p].append(trip.period(p)[signal])
        else:
            for p in PERIODS:
                vals = [t.period(p)[signal] for t in trips if t.period(p)[signal] is not None]
                out[p].append(_mean(vals) if vals else None)
    return out


def _duration_stats(durations: list[float]) -> DurationStats | None:
    if not durations:
        return None
    sd = _sample_sd(durations) if len(durations) > 1 else 0.0
    return DurationStats(mean=_mean(durations), sd=sd, n=len(durations))


def study(sessions: Sequence[SessionBundle], config: StudyConfig = StudyConfig()) -> StudyReport:
    """Full statistics pass: the 3 signals x 3 period comparisons x cohorts
    test grid, the summary table, and target-event duration statistics
    (overall, per event index within a session, per gender)."""
    per_session = [
        (b.learner_meta.gender, extract_triplets(b, config.target_label, config.window_len))
        for b in sessions
    ]
    tests: dict[tuple[str, str, str, str], TestResult] = {}
    skipped: dict[tuple[str, str, str, str], str] = {}
    test_fn = welch_t_test if config.use_welch else paired_t_test
    for signal in SIGNALS:
        for cohort in config.cohorts:
            obs = _period_observations(per_session, signal, cohort, config.aggregate)
            for period_a, period_b in COMPARISONS:
                key = (signal, period_a, period_b, cohort)
                try:
                    tests[key] = test_fn(obs[period_a], obs[period_b], comparison=key)
                except InsufficientDataError as exc:
                    skipped[key] = str(exc)

    summary = summarize(sessions, config.target_label, config.window_len, config.cohorts)

    durations_all: list[float] = []
    by_index: dict[int, list[float]] = {}
    by_gender: dict[str, list[float]] = {}
    for gender, trips in per_session:
        for idx, trip in enumerate(trips, start=1):
            dur = trip.event.duration
            durations_all.append(dur)
            by_index.setdefault(idx, []).append(dur)
            if gender in ("female", "male"):
                by_gender.setdefault(gender, []).append(dur)
    response_times: dict[str, DurationStats] = {}
    overall = _duration_stats(durations_all)
    if overall:
        response_times["overall"] = overall
    for idx in sorted(by_index):
        st = _duration_stats(by_index[idx])
        if st:
            response_times[f"message_{idx}"] = st
    for gender in ("female", "male"):
        st = _duration_stats(by_gender.get(gender, []))
        if st:
            response_times[gender] = st

    return StudyReport(
        tests=tests,
        skipped=skipped,
        summary=summary,
        response_times=response_times,
        config=config,
        n_sessions=len(sessions),
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _json_float(x: float) -> float | str:
    return x if math.isfinite(x) else str(x)


def study_report_to_dict(report: StudyReport) -> dict:
    tests_out: dict = {}
    for signal in SIGNALS:
        sig_out: dict = {}
        for period_a, period_b in COMPARISONS:
            comp_name = f"{period_a}_vs_{period_b}"
            comp_out: dict = {}
            for cohort in report.config.cohorts:
                key = (signal, period_a, period_b, cohort)
                if key in report.tests:
                    r = report.tests[key]
                    comp_out[cohort] = {
                        "t": _json_float(r.t),
                        "df": r.df,
                        "p": _json_float(r.p),
                        "d": _json_float(r.d),
                        "n_pairs": r.n_pairs,
                    }
                elif key in report.skipped:
                    comp_out[cohort] = {"skipped": report.skipped[key]}
            sig_out[comp_name] = comp_out
        tests_out[signal] = sig_out
    return {
        "config": {
            "target_label": report.config.target_label,
            "window_len_s": report.config.window_len,
            "cohorts": list(report.config.cohorts),
            "aggregate": report.config.aggregate,
            "use_welch": report.config.use_welch,
        },
        "n_sessions": report.n_sessions,
        "tests": tests_out,
        "summary": report.summary.to_rows(),
        "response_times": {
            name: {"mean_s": st.mean, "sd_s": st.sd, "n": st.n}
            for name, st in report.response_times.items()
        },
    }


def write_study_report(report: StudyReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(study_report_to_dict(report), indent=2) + "\n", encoding="utf-8"
    )


SUMMARY_HEADER = [
    "signal", "cohort",
    "before_mean", "before_sd", "before_n",
    "during_mean", "during_sd", "during_n",
    "after_mean", "after_sd", "after_n",
]


def write_summary_csv(table: SummaryTable, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for row in table.to_rows():
            cells = [row["signal"], row["cohort"]]
            for period in PERIODS:
                cell = row[period]
                if cell is None:
                    cells.extend(["", "", "0"])
                else:
                    cells.extend([fmt_float(cell["mean"]), fmt_float(cell["sd"]), str(cell["n"])])
            w.writerow(cells)
