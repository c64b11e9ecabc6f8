from __future__ import annotations

import filecmp

import numpy as np
import pytest

from poseguard.detector import DetectorParams, detect
from poseguard.evaluation import MatchPolicy, match_events
from poseguard.synth import (
    CorpusConfig,
    EventSpec,
    SplitMix64,
    SynthConfig,
    brute_force_detect,
    config_from_dict,
    gaussian_stream,
    gen_corpus,
    gen_session,
    uniform_stream,
    write_synth_tree,
)


# ---------------------------------------------------------------------------
# PRNG
# ---------------------------------------------------------------------------


def test_splitmix_reference_values():
    # first outputs for seed 0, cross-checked against the published algorithm
    rng = SplitMix64(0)
    assert rng.next_u64() == 0xE220A8397B1DCDAF
    assert rng.next_u64() == 0x6E789E6AA1B965F4
    assert rng.next_u64() == 0x06C45D188009454F


def test_scalar_and_vector_streams_identical():
    rng = SplitMix64(98765)
    scalar = np.array([rng.next_float() for _ in range(64)])
    assert np.array_equal(scalar, uniform_stream(98765, 64))


def test_gaussian_stream_odd_count_prefix():
    assert np.array_equal(gaussian_stream(5, 7), gaussian_stream(5, 8)[:7])


def test_gaussian_stream_moments():
    g = gaussian_stream(17, 200_000)
    assert abs(g.mean()) < 0.01
    assert abs(g.std() - 1.0) < 0.01


# ---------------------------------------------------------------------------
# gen_session
# ---------------------------------------------------------------------------


def test_same_seed_same_bundle_bytes(tmp_path):
    cfg = SynthConfig(
        seed=42,
        session_id="twin",
        duration_s=60.0,
        fps=10.0,
        dropout_rate=0.05,
        ar1=0.9,
        events=(EventSpec(start_s=20.0, duration_s=10.0, offsets_sigma={"yaw": 4.0}, ramp_s=1.0),),
    )
    write_synth_tree(cfg, tmp_path / "a")
    write_synth_tree(cfg, tmp_path / "b")
    for name in ("angles.csv", "labels.csv", "biometrics.csv", "session.json"):
        assert filecmp.cmp(tmp_path / "a/twin" / name, tmp_path / "b/twin" / name, shallow=False)


def test_different_seed_differs():
    a = gen_session(SynthConfig(seed=1, duration_s=30, fps=10))
    b = gen_session(SynthConfig(seed=2, duration_s=30, fps=10))
    assert not np.array_equal(a.angles.angles, b.angles.angles)


def test_dropout_fraction_binomial():
    cfg = SynthConfig(seed=7, duration_s=1800.0, fps=30.0, dropout_rate=0.1)
    bundle = gen_session(cfg)
    assert len(bundle.angles) == 54000
    assert bundle.angles.invalid_fraction == pytest.approx(0.10, abs=0.01)


def test_zero_noise_event_detected_exactly_once():
    cfg = SynthConfig(
        seed=11,
        duration_s=300.0,
        fps=10.0,
        noise_scale=0.0,
        events=(EventSpec(start_s=120.0, duration_s=30.0, offsets_sigma={"yaw": 5.0}),),
    )
    bundle = gen_session(cfg)
    result = detect(bundle.angles, DetectorParams(n=2.0, w=5))
    assert len(result.events) == 1
    report = match_events(result.events, bundle.labels, MatchPolicy())
    assert report.sensitivity == 1.0


def test_overlapping_events_rejected():
    with pytest.raises(ValueError, match="overlap"):
        SynthConfig(
            seed=1,
            duration_s=100.0,
            events=(
                EventSpec(start_s=10.0, duration_s=20.0, offsets_sigma={"yaw": 3.0}),
                EventSpec(start_s=25.0, duration_s=20.0, offsets_sigma={"yaw": 3.0}),
            ),
        )


def test_event_outside_session_rejected():
    with pytest.raises(ValueError, match="outside"):
        SynthConfig(seed=1, duration_s=100.0, events=(EventSpec(90.0, 20.0, {"yaw": 3.0}),))


def test_biometric_offsets_applied_during_events():
    from poseguard.synth import SignalSpec

    cfg = SynthConfig(
        seed=13,
        duration_s=600.0,
        fps=5.0,
        events=(EventSpec(start_s=200.0, duration_s=60.0, offsets_sigma={}),),
        biometrics={
            "attention": SignalSpec(50.0, 0.0),
            "meditation": SignalSpec(55.0, 0.0),
            "heart_rate": SignalSpec(80.0, 0.0, event_offset=5.0),
        },
    )
    bundle = gen_session(cfg)
    hr = {s.timestamp: s.value for s in bundle.biometrics_for("heart_rate")}
    assert hr[100.0] == 80.0
    assert hr[230.0] == 85.0
    assert hr[500.0] == 80.0


def test_biometrics_stay_in_valid_range():
    from poseguard.synth import SignalSpec

    cfg = SynthConfig(
        seed=19,
        duration_s=300.0,
        fps=5.0,
        biometrics={
            "attention": SignalSpec(95.0, 30.0),
            "meditation": SignalSpec(5.0, 30.0),
            "heart_rate": SignalSpec(80.0, 8.0),
        },
    )
    bundle = gen_session(cfg)  # would raise at BiometricSample construction if out of range
    assert all(0 <= s.value <= 100 for s in bundle.biometrics_for("attention"))


def test_labels_match_event_specs():
    cfg = SynthConfig(
        seed=23,
        duration_s=200.0,
        fps=5.0,
        events=(
            EventSpec(start_s=120.0, duration_s=20.0, offsets_sigma={"yaw": 3.0}),
            EventSpec(start_s=40.0, duration_s=25.0, offsets_sigma={"pitch": 3.0}),
        ),
    )
    bundle = gen_session(cfg)
    assert [(iv.start, iv.end, iv.label) for iv in bundle.labels] == [
        (40.0, 65.0, "phone"),
        (120.0, 140.0, "phone"),
    ]


# ---------------------------------------------------------------------------
# gen_corpus
# ---------------------------------------------------------------------------


def test_corpus_deterministic_and_distinct():
    cfg = CorpusConfig(count=4, base_seed=55, duration_s=120.0, fps=10.0,
                       event_margin_s=25.0, event_min_gap_s=5.0,
                       event_duration_range_s=(10.0, 15.0))
    a = gen_corpus(cfg)
    b = gen_corpus(cfg)
    assert [s.session_id for s in a] == ["synth-000", "synth-001", "synth-002", "synth-003"]
    assert [s.labels for s in a] == [s.labels for s in b]
    assert a[0].labels != a[1].labels  # layouts differ between sessions
    assert [s.learner_meta.gender for s in a] == ["female", "male", "female", "male"]


def test_corpus_events_within_margins():
    cfg = CorpusConfig(count=6, base_seed=9, duration_s=300.0, fps=5.0,
                       event_margin_s=30.0, event_min_gap_s=20.0)
    for bundle in gen_corpus(cfg):
        assert len(bundle.labels) == 2
        for iv in bundle.labels:
            assert iv.start >= 30.0
            assert iv.end <= 270.0
        first, second = bundle.labels
        assert second.start - first.end >= 20.0


def test_injected_event_recall_property():
    # strong offsets, no dropout, no autocorrelation, small window: always found
    for seed in range(5):
        cfg = CorpusConfig(
            count=1, base_seed=seed, duration_s=240.0, fps=10.0,
            event_offset_sigma_range=(4.0, 5.0), dropout_rate=0.0, ar1=0.0,
            event_duration_range_s=(20.0, 30.0), event_margin_s=30.0, event_min_gap_s=15.0,
        )
        (bundle,) = gen_corpus(cfg)
        result = detect(bundle.angles, DetectorParams(n=2.0, w=10))
        report = match_events(result.events, bundle.labels, MatchPolicy())
        assert report.sensitivity == 1.0, f"seed {seed} missed an injected event"


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------


def test_config_from_dict_session():
    cfg = config_from_dict(
        {
            "seed": 5,
            "duration_s": 60,
            "fps": 10,
            "events": [{"start_s": 10, "duration_s": 5, "offsets_sigma": {"yaw": 3}}],
            "baseline": {"yaw": [1.0, 2.0]},
        }
    )
    assert isinstance(cfg, SynthConfig)
    assert cfg.baseline["yaw"] == (1.0, 2.0)
    assert cfg.events[0].offsets_sigma == {"yaw": 3.0}


def test_config_from_dict_corpus():
    cfg = config_from_dict({"count": 2, "base_seed": 1, "duration_s": 120, "fps": 5,
                            "event_margin_s": 25, "event_duration_range_s": [10, 15]})
    assert isinstance(cfg, CorpusConfig)
    assert cfg.event_duration_range_s == (10.0, 15.0)


def test_config_rejects_unknown_angle():
    with pytest.raises(ValueError):
        config_from_dict({"seed": 1, "baseline": {"tilt": [0, 1]}})


# ---------------------------------------------------------------------------
# brute force reference
# ---------------------------------------------------------------------------


def test_brute_force_constant_series_no_events():
    bundle = gen_session(SynthConfig(seed=2, duration_s=30.0, fps=5.0, noise_scale=0.0))
    result = brute_force_detect(bundle.angles, DetectorParams(n=1.0, w=3))
    assert result.events == ()


def test_brute_force_window_equals_series_length():
    bundle = gen_session(SynthConfig(seed=2, duration_s=10.0, fps=5.0))
    n_frames = len(bundle.angles)
    result = brute_force_detect(bundle.angles, DetectorParams(n=0.1, w=n_frames, stride=n_frames))
    assert result.flagged_window_count <= 1
