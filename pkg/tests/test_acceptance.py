"""End-to-end acceptance checks.

Each test pins one release gate at a fixed tolerance and prints a single
PASS/FAIL line so the suite's output doubles as an acceptance report. Run
with ``pytest tests/test_acceptance.py -v -s``.
"""

from __future__ import annotations

import json
import time

from poseguard.cli import main
from poseguard.detector import DetectorParams, detect
from poseguard.evaluation import MatchPolicy, match_events, sweep
from poseguard.stats import StudyConfig, cohens_d_from_stats, study, two_tailed_p
from poseguard.synth import (
    CorpusConfig,
    EventSpec,
    SignalSpec,
    SplitMix64,
    SynthConfig,
    brute_force_detect,
    gen_corpus,
    gen_session,
)


def report(name: str, ok: bool, detail: str = "") -> None:
    line = f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert ok, line


# ---------------------------------------------------------------------------
# 1. p-value reproduction
# ---------------------------------------------------------------------------

P_VALUE_CASES = [
    (2.21, 65, 0.031),
    (2.85, 65, 0.006),
    (2.62, 37, 0.013),
    (2.50, 37, 0.017),
    (2.54, 37, 0.015),
]


def test_p_value_reproduction():
    t0 = time.time()
    errors = []
    for t, df, expected in P_VALUE_CASES:
        p = two_tailed_p(t, df)
        if abs(p - expected) > 0.0015:
            errors.append(f"t={t}, df={df}: got {p:.5f}, expected {expected}")
    report(
        "p-value reproduction",
        not errors,
        f"5 pairs within ±0.0015 in {1000 * (time.time() - t0):.1f} ms" if not errors else "; ".join(errors),
    )


# ---------------------------------------------------------------------------
# 2. effect-size reproduction
# ---------------------------------------------------------------------------

EFFECT_SIZE_CASES = [
    ("attention/all before-after", 48.39, 9.42, 51.61, 12.17, 0.29),
    ("heart_rate/all before-during", 83.01, 10.74, 84.60, 10.43, 0.15),
    ("heart_rate/male before-during", 81.26, 11.56, 83.24, 11.31, 0.17),
    ("heart_rate/male before-after", 81.26, 11.56, 83.54, 10.64, 0.20),
    ("meditation/male during-after", 57.26, 10.13, 52.82, 8.74, 0.46),
]


def test_effect_size_reproduction():
    errors = []
    for name, ma, sa, mb, sb, expected in EFFECT_SIZE_CASES:
        d = abs(cohens_d_from_stats(ma, sa, mb, sb))
        if abs(d - expected) > 0.01:
            errors.append(f"{name}: got {d:.4f}, expected {expected}")
    report(
        "effect-size reproduction",
        not errors,
        "5 pooled-SD values within ±0.01" if not errors else "; ".join(errors),
    )


# ---------------------------------------------------------------------------
# 3. detector oracle equivalence
# ---------------------------------------------------------------------------


def _random_session(rng: SplitMix64, index: int):
    frames = rng.randint(500, 10_000)
    fps = (10.0, 15.0, 30.0)[rng.randint(0, 2)]
    duration = frames / fps
    events = []
    t = duration * 0.15
    for _ in range(rng.randint(0, 2)):
        dur = rng.uniform(5.0, duration * 0.2)
        if t + dur > duration * 0.95:
            break
        events.append(
            EventSpec(
                start_s=t,
                duration_s=dur,
                offsets_sigma={"yaw": rng.uniform(-6, 6), "pitch": rng.uniform(-6, 6)},
                ramp_s=rng.uniform(0, 2),
            )
        )
        t += dur + duration * 0.15
    cfg = SynthConfig(
        seed=rng.next_u64(),
        session_id=f"oracle-{index}",
        duration_s=duration,
        fps=fps,
        ar1=(0.0, 0.9)[rng.randint(0, 1)],
        dropout_rate=rng.uniform(0.0, 0.2),
        events=tuple(events),
    )
    bundle = gen_session(cfg)
    w = min(rng.randint(1, 300), frames)
    stride = (1, max(1, w // 2), w)[rng.randint(0, 2)]
    params = DetectorParams(n=rng.uniform(1.0, 4.0), w=w, stride=stride)
    return bundle, params


def test_detector_oracle_equivalence():
    t0 = time.time()
    rng = SplitMix64(0xACCE97)
    mismatches = []
    for i in range(100):
        bundle, params = _random_session(rng, i)
        fast = detect(bundle.angles, params)
        slow = brute_force_detect(bundle.angles, params)
        if fast.events != slow.events or fast.flagged_window_count != slow.flagged_window_count:
            mismatches.append(f"session {i} params {params}")
    elapsed = time.time() - t0
    report(
        "detector oracle equivalence",
        not mismatches and elapsed < 60.0,
        f"100 random sessions, exact boundaries, {elapsed:.1f} s"
        if not mismatches
        else "; ".join(mismatches[:3]),
    )


# ---------------------------------------------------------------------------
# 4. monotonicity in n
# ---------------------------------------------------------------------------


def test_monotonicity_in_n():
    n_grid = (1.5, 2.0, 2.5, 3.0, 3.5)
    w, stride = 10, 2
    violations = []
    for seed in range(20):
        cfg = CorpusConfig(
            count=1, base_seed=seed * 7919 + 1, duration_s=600.0, fps=10.0,
            event_duration_range_s=(20.0, 40.0), event_margin_s=40.0, event_min_gap_s=30.0,
            event_offset_sigma_range=(2.0, 4.0), ar1=0.5, dropout_rate=0.02,
        )
        (bundle,) = gen_corpus(cfg)
        truth = sorted(bundle.labels_for("phone"), key=lambda iv: iv.start)
        prev_duration, prev_sensitivity = None, None
        for n in n_grid:
            result = detect(bundle.angles, DetectorParams(n=n, w=w, stride=stride))
            flagged_duration = sum(e.duration for e in result.events)
            sensitivity = match_events(result.events, truth, MatchPolicy()).sensitivity
            if prev_duration is not None and flagged_duration > prev_duration + 1e-12:
                violations.append(f"seed {seed}: duration rose at n={n}")
            if prev_sensitivity is not None and sensitivity > prev_sensitivity:
                violations.append(f"seed {seed}: sensitivity rose at n={n}")
            prev_duration, prev_sensitivity = flagged_duration, sensitivity
    report(
        "monotonicity in n",
        not violations,
        "20 seeds, flagged duration and sensitivity non-increasing"
        if not violations
        else "; ".join(violations[:3]),
    )


# ---------------------------------------------------------------------------
# 5. qualitative sweep surface on a full-scale synthetic corpus
# ---------------------------------------------------------------------------


def test_sweep_surface_full_scale():
    t0 = time.time()
    cfg = CorpusConfig(
        count=40, base_seed=20260810, duration_s=1800.0, fps=30.0,
        ar1=0.9, dropout_rate=0.05,
        events_per_session=2, event_duration_range_s=(20.0, 45.0),
        event_offset_sigma_range=(3.0, 5.0), event_angles=("yaw", "pitch"),
    )
    bundles = gen_corpus(cfg)
    grid = sweep(bundles, n_grid=[1.5, 2.0, 2.5, 3.0, 3.5], w_grid=[1, 2, 3, 4, 5])
    elapsed = time.time() - t0

    smallest = grid.cell(min(grid.n_values), min(grid.w_values))
    cond_a = smallest.mean_sensitivity >= 0.90
    balanced = [
        c for c in grid.cells
        if c.mean_sensitivity is not None
        and c.mean_sensitivity >= 0.75
        and c.mean_flagged_fraction <= 0.20
    ]
    cond_b = bool(balanced)
    report(
        "sweep surface at full scale",
        cond_a and cond_b and elapsed < 300.0,
        f"sens@smallest={smallest.mean_sensitivity:.3f}, "
        f"{len(balanced)} cells with sens>=0.75 & flagged<=0.20, {elapsed:.0f} s",
    )


# ---------------------------------------------------------------------------
# 6. statistics pipeline end to end
# ---------------------------------------------------------------------------


def _stats_corpus(base_seed: int):
    cfg = CorpusConfig(
        count=36, base_seed=base_seed, duration_s=300.0, fps=5.0,
        event_duration_range_s=(20.0, 45.0), event_margin_s=30.0, event_min_gap_s=40.0,
        biometrics={
            "attention": SignalSpec(50.0, 8.0),              # null effect
            "meditation": SignalSpec(55.0, 8.0),
            "heart_rate": SignalSpec(80.0, 8.0, event_offset=5.0),
        },
    )
    return gen_corpus(cfg)


def test_statistics_pipeline_end_to_end():
    t0 = time.time()
    hr_failures = []
    attention_ps = []
    for draw in range(20):
        corpus = _stats_corpus(base_seed=900_000 + draw)
        rep = study(corpus, StudyConfig())
        hr = rep.tests[("heart_rate", "before", "during", "all")]
        if not (hr.p < 0.05):
            hr_failures.append(f"draw {draw}: p={hr.p:.4f}")
        attention_ps.append(rep.tests[("attention", "before", "during", "all")].p)
    elapsed = time.time() - t0
    null_ok = max(attention_ps) > 0.5
    report(
        "statistics pipeline end-to-end",
        not hr_failures and null_ok and elapsed < 120.0,
        f"20 draws, injected heart-rate effect always p<0.05, "
        f"null attention max p={max(attention_ps):.3f}, {elapsed:.0f} s"
        if not hr_failures
        else "; ".join(hr_failures[:3]),
    )


# ---------------------------------------------------------------------------
# 7. determinism of synth and detect commands
# ---------------------------------------------------------------------------


def test_command_determinism(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({
        "seed": 7321, "session_id": "det", "duration_s": 180, "fps": 15,
        "dropout_rate": 0.05, "ar1": 0.9,
        "events": [{"start_s": 60, "duration_s": 25, "offsets_sigma": {"yaw": 4.0}, "ramp_s": 1.0}],
    }))
    for run in ("r1", "r2"):
        assert main(["synth", str(cfg_path), "--out-dir", str(tmp_path / run)]) == 0
        assert main([
            "detect", str(tmp_path / run / "det" / "session.json"),
            "--n", "2", "--w", "5", "--out", str(tmp_path / run / "out"),
        ]) == 0

    mismatched = []
    files = sorted(
        p.relative_to(tmp_path / "r1") for p in (tmp_path / "r1").rglob("*") if p.is_file()
    )
    for rel in files:
        if (tmp_path / "r1" / rel).read_bytes() != (tmp_path / "r2" / rel).read_bytes():
            mismatched.append(str(rel))
    report(
        "byte determinism of synth and detect",
        not mismatched,
        f"{len(files)} files byte-identical across runs" if not mismatched else ", ".join(mismatched),
    )
