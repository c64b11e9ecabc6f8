from __future__ import annotations

import json
import math

import pytest

from poseguard.session import (
    BiometricSample,
    EventInterval,
    InsufficientDataError,
    LearnerMeta,
    SessionBundle,
)
from helpers import make_series
from poseguard.stats import (
    StudyConfig,
    betainc_reg,
    cohens_d_from_stats,
    cohens_d_pooled,
    extract_triplets,
    paired_t_test,
    study,
    study_report_to_dict,
    summarize,
    t_cdf,
    two_tailed_p,
    welch_t_test,
    write_summary_csv,
)
from poseguard.synth import SplitMix64


# ---------------------------------------------------------------------------
# t distribution
# ---------------------------------------------------------------------------


def test_t_cdf_at_zero():
    for df in (1, 2, 30, 500):
        assert t_cdf(0.0, df) == 0.5


@pytest.mark.parametrize(
    "t,df,expected",
    [
        (2.21, 65, 0.031),
        (2.85, 65, 0.006),
        (2.62, 37, 0.013),
        (2.50, 37, 0.017),
        (2.54, 37, 0.015),
    ],
)
def test_two_tailed_p_reference_pairs(t, df, expected):
    assert two_tailed_p(t, df) == pytest.approx(expected, abs=1e-3)


def test_t_cdf_symmetry_exact():
    rng = SplitMix64(3)
    for _ in range(200):
        df = rng.randint(1, 1000)
        t = rng.uniform(-50.0, 50.0)
        assert abs(t_cdf(t, df) + t_cdf(-t, df) - 1.0) <= 1e-12


def test_t_cdf_monotone_in_t():
    for df in (1, 5, 65, 400):
        values = [t_cdf(t, df) for t in [-20, -5, -1, -0.1, 0, 0.1, 1, 5, 20]]
        assert values == sorted(values)
        assert all(0.0 <= v <= 1.0 for v in values)


def test_t_cdf_matches_scipy_high_precision():
    scipy_stats = pytest.importorskip("scipy.stats")
    rng = SplitMix64(99)
    worst = 0.0
    for _ in range(500):
        df = rng.randint(1, 1000)
        t = rng.uniform(-50.0, 50.0)
        worst = max(worst, abs(t_cdf(t, df) - float(scipy_stats.t.cdf(t, df))))
    assert worst <= 1e-10


def test_t_cdf_normal_limit():
    assert two_tailed_p(1.96, 100_000) == pytest.approx(0.05, abs=5e-3)


def test_t_cdf_rejects_bad_df():
    with pytest.raises(ValueError):
        t_cdf(1.0, 0)
    with pytest.raises(ValueError):
        two_tailed_p(1.0, 0.5)


def test_betainc_bounds():
    assert betainc_reg(2.0, 3.0, 0.0) == 0.0
    assert betainc_reg(2.0, 3.0, 1.0) == 1.0
    assert betainc_reg(0.5, 0.5, 0.5) == pytest.approx(0.5, abs=1e-12)


# ---------------------------------------------------------------------------
# paired t-test
# ---------------------------------------------------------------------------


def test_identical_lists_t_zero_p_one():
    r = paired_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert r.t == 0.0
    assert r.p == 1.0
    assert r.df == 2.0


def test_constant_nonzero_diff_pins_infinity():
    r = paired_t_test([1.0, 2.0, 3.0], [0.0, 1.0, 2.0])
    assert math.isinf(r.t) and r.t > 0
    assert r.p == 0.0
    r = paired_t_test([0.0, 1.0, 2.0], [1.0, 2.0, 3.0])
    assert math.isinf(r.t) and r.t < 0


def test_none_pairs_dropped():
    r = paired_t_test([1.0, None, 2.0, 3.0], [0.5, 9.9, 1.0, 2.5])
    assert r.n_pairs == 3
    assert r.df == 2.0


def test_too_few_pairs_raises():
    with pytest.raises(InsufficientDataError):
        paired_t_test([1.0, None], [2.0, 3.0])


def test_unequal_lengths_rejected():
    with pytest.raises(ValueError):
        paired_t_test([1.0, 2.0], [1.0])


def test_matches_scipy_reference_66_pairs():
    scipy_stats = pytest.importorskip("scipy.stats")
    rng = SplitMix64(2026)
    a = [50 + 10 * rng.uniform(-1, 1) for _ in range(66)]
    b = [52 + 9 * rng.uniform(-1, 1) for _ in range(66)]
    r = paired_t_test(a, b)
    ref = scipy_stats.ttest_rel(a, b)
    assert r.t == pytest.approx(float(ref.statistic), abs=1e-9)
    assert r.p == pytest.approx(float(ref.pvalue), abs=1e-9)
    assert r.df == 65.0


def test_antisymmetry_and_invariances():
    rng = SplitMix64(8)
    a = [rng.uniform(0, 10) for _ in range(30)]
    b = [rng.uniform(0, 10) for _ in range(30)]
    fwd = paired_t_test(a, b)
    rev = paired_t_test(b, a)
    assert fwd.t == -rev.t
    assert fwd.p == rev.p
    shifted = paired_t_test([x + 7.5 for x in a], [x + 7.5 for x in b])
    assert shifted.t == pytest.approx(fwd.t, rel=1e-12)
    assert shifted.d == pytest.approx(fwd.d, rel=1e-9)
    scaled = paired_t_test([x * 3.0 for x in a], [x * 3.0 for x in b])
    assert scaled.t == pytest.approx(fwd.t, rel=1e-12)
    assert scaled.p == pytest.approx(fwd.p, rel=1e-9)
    assert scaled.d == pytest.approx(fwd.d, rel=1e-9)


def test_welch_variant_runs():
    scipy_stats = pytest.importorskip("scipy.stats")
    rng = SplitMix64(44)
    a = [rng.uniform(0, 10) for _ in range(20)]
    b = [rng.uniform(1, 11) for _ in range(25)]
    r = welch_t_test(a, b)
    ref = scipy_stats.ttest_ind(a, b, equal_var=False)
    assert r.t == pytest.approx(float(ref.statistic), abs=1e-9)
    assert r.p == pytest.approx(float(ref.pvalue), abs=1e-9)


# ---------------------------------------------------------------------------
# effect sizes
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "ma,sa,mb,sb,expected",
    [
        (48.39, 9.42, 51.61, 12.17, 0.29),   # attention, whole cohort, before/after
        (83.01, 10.74, 84.60, 10.43, 0.15),  # heart rate, whole cohort, before/during
        (81.26, 11.56, 83.24, 11.31, 0.17),  # heart rate, male, before/during
        (81.26, 11.56, 83.54, 10.64, 0.20),  # heart rate, male, before/after
        (57.26, 10.13, 52.82, 8.74, 0.46),   # meditation, male, during/after
    ],
)
def test_pooled_d_from_summary_stats(ma, sa, mb, sb, expected):
    assert abs(cohens_d_from_stats(ma, sa, mb, sb)) == pytest.approx(expected, abs=0.01)


def test_d_zero_for_identical_distributions():
    assert cohens_d_pooled([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0


def test_d_zero_variance_rejected():
    with pytest.raises(ValueError):
        cohens_d_pooled([1.0, 1.0], [1.0, 1.0])
    with pytest.raises(InsufficientDataError):
        cohens_d_pooled([1.0], [1.0, 2.0])


def test_d_sign_follows_second_argument():
    assert cohens_d_pooled([0.0, 1.0], [10.0, 11.0]) > 0
    assert cohens_d_pooled([10.0, 11.0], [0.0, 1.0]) < 0


# ---------------------------------------------------------------------------
# triplet extraction
# ---------------------------------------------------------------------------


def _bundle(events, biometrics, duration=400.0, gender="unspecified"):
    return SessionBundle(
        session_id="s",
        learner_meta=LearnerMeta(gender=gender),
        angles=make_series([0.0, 1.0], fps=1.0),
        biometrics=tuple(biometrics),
        labels=tuple(events),
        duration=duration,
    )


def constant_signal(value=50.0, signal="attention", until=400):
    return [BiometricSample(float(t), signal, value) for t in range(until)]


def test_triplet_constant_signal():
    bundle = _bundle([EventInterval(100.0, 130.0, "phone")], constant_signal(50.0))
    (trip,) = extract_triplets(bundle)
    assert trip.before["attention"] == 50.0
    assert trip.during["attention"] == 50.0
    assert trip.after["attention"] == 50.0


def test_triplet_window_boundaries():
    # before is [start-15, start): sample at exactly start belongs to during
    samples = [
        BiometricSample(84.9, "attention", 10.0),   # before window is [85, 100)
        BiometricSample(85.0, "attention", 20.0),
        BiometricSample(99.0, "attention", 30.0),
        BiometricSample(100.0, "attention", 40.0),  # during [100, 130]
        BiometricSample(130.0, "attention", 60.0),  # still during (closed end)
        BiometricSample(130.5, "attention", 80.0),  # after (130, 145]
        BiometricSample(145.0, "attention", 90.0),
        BiometricSample(145.1, "attention", 99.0),  # outside after window
    ]
    bundle = _bundle([EventInterval(100.0, 130.0, "phone")], samples)
    (trip,) = extract_triplets(bundle)
    assert trip.before["attention"] == 25.0   # (20 + 30) / 2
    assert trip.during["attention"] == 50.0   # (40 + 60) / 2
    assert trip.after["attention"] == 85.0    # (80 + 90) / 2


def test_triplet_truncated_at_session_start():
    samples = [BiometricSample(float(t), "attention", 50.0) for t in range(60)]
    bundle = _bundle([EventInterval(5.0, 20.0, "phone")], samples, duration=60.0)
    (trip,) = extract_triplets(bundle)
    assert trip.before["attention"] == 50.0  # window [0, 5), truncated but non-empty


def test_triplet_empty_window_is_none():
    samples = [BiometricSample(float(t), "heart_rate", 80.0) for t in range(100, 131)]
    bundle = _bundle([EventInterval(100.0, 130.0, "phone")], samples, duration=200.0)
    (trip,) = extract_triplets(bundle)
    assert trip.before["heart_rate"] is None
    assert trip.during["heart_rate"] == 80.0
    assert trip.after["heart_rate"] is None


def test_no_target_events_empty_list():
    bundle = _bundle([], constant_signal())
    assert extract_triplets(bundle) == []


def test_triplets_only_for_target_label():
    bundle = _bundle(
        [EventInterval(50.0, 60.0, "video"), EventInterval(100.0, 130.0, "phone")],
        constant_signal(),
    )
    trips = extract_triplets(bundle, target_label="phone")
    assert len(trips) == 1
    assert trips[0].event.label == "phone"


# ---------------------------------------------------------------------------
# summarize
# ---------------------------------------------------------------------------


def test_summary_single_event_sd_zero_n_one():
    bundle = _bundle([EventInterval(100.0, 130.0, "phone")], constant_signal(50.0))
    table = summarize([bundle])
    cell = table.get("attention", "all", "before")
    assert cell.mean == 50.0
    assert cell.sd == 0.0
    assert cell.n == 1


def test_summary_all_is_pooled_not_average_of_cohorts():
    female = _bundle([EventInterval(100.0, 130.0, "phone")], constant_signal(40.0), gender="female")
    male1 = _bundle(
        [EventInterval(100.0, 130.0, "phone"), EventInterval(200.0, 230.0, "phone")],
        constant_signal(70.0),
        gender="male",
    )
    table = summarize([female, male1])
    # pooled mean over 3 events: (40 + 70 + 70) / 3, not (40 + 70) / 2
    assert table.get("attention", "all", "during").mean == pytest.approx(60.0)
    assert table.get("attention", "female", "during").mean == 40.0
    assert table.get("attention", "male", "during").mean == 70.0


def test_summary_empty_cohort_omitted():
    bundle = _bundle([EventInterval(100.0, 130.0, "phone")], constant_signal(), gender="female")
    table = summarize([bundle])
    assert table.get("attention", "male", "during") is None


def test_summary_csv_layout(tmp_path):
    bundle = _bundle([EventInterval(100.0, 130.0, "phone")], constant_signal(), gender="female")
    path = tmp_path / "summary.csv"
    write_summary_csv(summarize([bundle]), path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("signal,cohort,before_mean,before_sd,before_n")
    assert any(line.startswith("attention,female") for line in lines)


def test_summary_matches_generator_parameters():
    from poseguard.synth import CorpusConfig, SignalSpec, gen_corpus

    cfg = CorpusConfig(
        count=30, base_seed=5050, duration_s=400.0, fps=5.0,
        event_duration_range_s=(20.0, 40.0), event_margin_s=30.0, event_min_gap_s=40.0,
        biometrics={
            "attention": SignalSpec(50.0, 5.0),
            "meditation": SignalSpec(55.0, 5.0),
            "heart_rate": SignalSpec(80.0, 5.0),
        },
    )
    table = summarize(gen_corpus(cfg))
    cell = table.get("heart_rate", "all", "during")
    assert cell.n == 60
    assert cell.mean == pytest.approx(80.0, abs=1.0)


# ---------------------------------------------------------------------------
# study
# ---------------------------------------------------------------------------


def test_study_duration_stats():
    bundle = _bundle(
        [EventInterval(100.0, 125.0, "phone"), EventInterval(200.0, 235.0, "phone")],
        constant_signal(),
    )
    report = study([bundle])
    assert report.response_times["overall"].mean == 30.0
    assert report.response_times["overall"].n == 2
    assert report.response_times["message_1"].mean == 25.0
    assert report.response_times["message_2"].mean == 35.0


def test_study_identical_biometrics_null_results():
    bundles = [
        _bundle(
            [EventInterval(100.0, 130.0, "phone"), EventInterval(200.0, 230.0, "phone")],
            constant_signal(50.0),
        )
        for _ in range(3)
    ]
    report = study(bundles)
    cell = report.tests[("attention", "before", "during", "all")]
    assert cell.t == 0.0
    assert cell.p == 1.0


def test_study_skips_underpopulated_cells():
    bundle = _bundle([EventInterval(100.0, 130.0, "phone")], constant_signal())
    report = study([bundle])
    key = ("attention", "before", "during", "all")
    assert key not in report.tests
    assert "pairs" in report.skipped[key]


def test_study_gender_cohorts():
    bundles = []
    for gender, level in (("female", 40.0), ("female", 42.0), ("male", 70.0), ("male", 72.0)):
        bundles.append(
            _bundle(
                [EventInterval(100.0, 130.0, "phone"), EventInterval(200.0, 230.0, "phone")],
                constant_signal(level),
                gender=gender,
            )
        )
    report = study(bundles)
    assert ("attention", "before", "during", "female") in report.tests
    assert ("attention", "before", "during", "male") in report.tests
    assert report.tests[("attention", "before", "during", "all")].n_pairs == 8


def test_study_per_learner_aggregation():
    bundles = [
        _bundle(
            [EventInterval(100.0, 130.0, "phone"), EventInterval(200.0, 230.0, "phone")],
            constant_signal(50.0),
        )
        for _ in range(4)
    ]
    report = study(bundles, StudyConfig(aggregate="per_learner"))
    assert report.tests[("attention", "before", "during", "all")].n_pairs == 4


def test_study_report_json_round_trip(tmp_path):
    bundles = [
        _bundle(
            [EventInterval(100.0, 130.0, "phone"), EventInterval(200.0, 230.0, "phone")],
            constant_signal(50.0),
        )
        for _ in range(2)
    ]
    report = study(bundles)
    payload = study_report_to_dict(report)
    text = json.dumps(payload)
    parsed = json.loads(text)
    cell = parsed["tests"]["attention"]["before_vs_during"]["all"]
    assert cell["t"] == 0.0 and cell["p"] == 1.0
    assert parsed["response_times"]["overall"]["mean_s"] == 30.0
    # degenerate inf is serialized as a string, keeping the JSON standard
    inf_result = paired_t_test([1.0, 2.0, 3.0], [0.0, 1.0, 2.0])
    from poseguard.stats import _json_float

    assert _json_float(inf_result.t) == "inf"
