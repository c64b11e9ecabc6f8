"""Deterministic synthetic session generator and a naive reference detector.

Randomness is pinned for reproducibility: a SplitMix64 stream drives
everything, and normal deviates come from Box-Muller applied to consecutive
uniform pairs (never a rejection sampler), so a seed fully determines every
generated byte. Each generated stream (per angle, dropout, per signal) gets
its own sub-seed drawn from the root stream in a fixed order.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .detector import (
    AngleStats,
    DetectionResult,
    DetectorParams,
    PerAngleStats,
)
from .session import (
    ANGLES,
    SIGNALS,
    AngleSeries,
    BiometricSample,
    EventInterval,
    InsufficientDataError,
    LearnerMeta,
    SessionBundle,
    write_session_bundle,
)

_GOLDEN = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1


class SplitMix64:
    """64-bit SplitMix64 generator; the i-th output is a pure function of
    seed + (i+1) * golden-ratio increment, which the vectorized helpers
    below exploit."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def next_float(self) -> float:
        # 53-bit mantissa in [0, 1)
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.next_float()

    def randint(self, lo: int, hi: int) -> int:
        # inclusive bounds; modulo bias is irrelevant at fixture scale
        return lo + self.next_u64() % (hi - lo + 1)


def _u64_stream(seed: int, count: int) -> np.ndarray:
    idx = np.arange(1, count + 1, dtype=np.uint64)
    z = (np.uint64(seed) + idx * np.uint64(_GOLDEN)).astype(np.uint64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def uniform_stream(seed: int, count: int) -> np.ndarray:
    """count uniforms in [0, 1), identical to repeated SplitMix64.next_float."""
    return (_u64_stream(seed, count) >> np.uint64(11)) * 2.0**-53


def gaussian_stream(seed: int, count: int) -> np.ndarray:
    """count standard normals via Box-Muller over consecutive uniform pairs."""
    pairs = (count + 1) // 2
    u = uniform_stream(seed, 2 * pairs)
    u1 = 1.0 - u[0::2]  # (0, 1]; keeps log finite
    u2 = u[1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    out = np.empty(2 * pairs)
    out[0::2] = r * np.cos(2.0 * np.pi * u2)
    out[1::2] = r * np.sin(2.0 * np.pi * u2)
    return out[:count]


def _ar1(innovations: np.ndarray, rho: float) -> np.ndarray:
    """AR(1) with unit stationary variance: x_t = rho x_{t-1} + sqrt(1-rho^2) e_t."""
    if rho == 0.0:
        return innovations
    scale = math.sqrt(1.0 - rho * rho)
    out = np.empty_like(innovations)
    prev = innovations[0]
    out[0] = prev
    for t in range(1, len(innovations)):
        prev = rho * prev + scale * innovations[t]
        out[t] = prev
    return out


@dataclass(frozen=True)
class EventSpec:
    """One injected deviation: angle offsets are in units of the configured
    baseline SD (independent of noise_scale), ramped linearly over ramp_s at
    both ends."""

    start_s: float
    duration_s: float
    offsets_sigma: dict[str, float]
    ramp_s: float = 0.0
    label: str = "phone"

    @property
    def end_s(self) -> float:
        return self.start_s + self.duration_s


@dataclass(frozen=True)
class SignalSpec:
    mean: float
    sd: float
    event_offset: float = 0.0


def _default_baseline() -> dict[str, tuple[float, float]]:
    return {"yaw": (0.0, 4.0), "pitch": (-10.0, 4.0), "roll": (0.0, 2.0)}


def _default_biometrics() -> dict[str, SignalSpec]:
    return {
        "attention": SignalSpec(50.0, 8.0),
        "meditation": SignalSpec(55.0, 8.0),
        "heart_rate": SignalSpec(80.0, 8.0),
    }


@dataclass(frozen=True)
class SynthConfig:
    seed: int
    session_id: str = "synth"
    duration_s: float = 1800.0
    fps: float = 30.0
    gender: str = "unspecified"
    baseline: dict[str, tuple[float, float]] = field(default_factory=_default_baseline)
    noise_scale: float = 1.0
    ar1: float = 0.0
    dropout_rate: float = 0.0
    events: tuple[EventSpec, ...] = ()
    biometrics: dict[str, SignalSpec] = field(default_factory=_default_biometrics)
    biometric_hz: float = 1.0

    def __post_init__(self) -> None:
        if self.duration_s <= 0 or self.fps <= 0:
            raise ValueError("duration_s and fps must be positive")
        if not (0.0 <= self.ar1 < 1.0):
            raise ValueError(f"ar1 must be in [0, 1), got {self.ar1}")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        ordered = sorted(self.events, key=lambda e: e.start_s)
        for ev in ordered:
            if ev.start_s < 0 or ev.end_s > self.duration_s:
                raise ValueError(f"event [{ev.start_s}, {ev.end_s}] outside [0, {self.duration_s}]")
            for a in ev.offsets_sigma:
                if a not in ANGLES:
                    raise ValueError(f"unknown angle {a!r} in event spec")
        for prev, nxt in zip(ordered, ordered[1:]):
            if nxt.start_s < prev.end_s:
                raise ValueError(
                    f"injected events overlap: [{prev.start_s}, {prev.end_s}] and [{nxt.start_s}, {nxt.end_s}]"
                )


def _ramp_profile(t: np.ndarray, ev: EventSpec) -> np.ndarray:
    inside = (t >= ev.start_s) & (t <= ev.end_s)
    if ev.ramp_s <= 0:
        return inside.astype(float)
    up = (t - ev.start_s) / ev.ramp_s
    down = (ev.end_s - t) / ev.ramp_s
    return np.clip(np.minimum(up, down), 0.0, 1.0) * inside


def gen_session(config: SynthConfig) -> SessionBundle:
    """Generate one session: noisy baselines plus ramped event offsets,
    ground-truth labels, and 1 Hz (by default) biometric streams."""
    root = SplitMix64(config.seed)
    sub = {name: root.next_u64() for name in (*ANGLES, "dropout", *SIGNALS)}

    n_frames = int(round(config.duration_s * config.fps))
    if n_frames < 2:
        raise ValueError("session too short for an angle series")
    frames = np.arange(n_frames, dtype=np.int64)
    t_frames = frames / config.fps

    angle_rows = []
    for a in ANGLES:
        mean, sd = config.baseline[a]
        noise = _ar1(gaussian_stream(sub[a], n_frames), config.ar1)
        values = mean + sd * config.noise_scale * noise
        for ev in config.events:
            off = ev.offsets_sigma.get(a, 0.0)
            if off:
                values = values + off * sd * _ramp_profile(t_frames, ev)
        angle_rows.append(values)
    valid = uniform_stream(sub["dropout"], n_frames) >= config.dropout_rate
    angles_arr = np.array(angle_rows)
    angles_arr[:, ~valid] = np.nan

    series = AngleSeries(
        session_id=config.session_id,
        fps=config.fps,
        frames=frames,
        timestamps=t_frames,
        angles=angles_arr,
        valid=valid,
    )

    labels = tuple(
        EventInterval(ev.start_s, ev.end_s, ev.label, source="ground_truth")
        for ev in sorted(config.events, key=lambda e: e.start_s)
    )

    n_bio = int(math.floor(config.duration_s * config.biometric_hz))
    t_bio = np.arange(n_bio) / config.biometric_hz
    biometrics: list[BiometricSample] = []
    for signal in SIGNALS:
        spec = config.biometrics[signal]
        values = spec.mean + spec.sd * gaussian_stream(sub[signal], n_bio)
        if spec.event_offset:
            in_event = np.zeros(n_bio, dtype=bool)
            for ev in config.events:
                in_event |= (t_bio >= ev.start_s) & (t_bio <= ev.end_s)
            values = values + spec.event_offset * in_event
        if signal in ("attention", "meditation"):
            values = np.clip(values, 0.0, 100.0)
        else:
            values = np.clip(values, 1.0, 299.0)
        biometrics.extend(BiometricSample(float(t), signal, float(v)) for t, v in zip(t_bio, values))

    return SessionBundle(
        session_id=config.session_id,
        learner_meta=LearnerMeta(gender=config.gender),
        angles=series,
        biometrics=tuple(biometrics),
        labels=labels,
        duration=config.duration_s,
    )


@dataclass(frozen=True)
class CorpusConfig:
    """Batch of sessions with randomized event layouts, all derived from one
    base seed. Event times, durations, offsets and signs are drawn per
    session from the ranges below."""

    count: int
    base_seed: int
    duration_s: float = 1800.0
    fps: float = 30.0
    baseline: dict[str, tuple[float, float]] = field(default_factory=_default_baseline)
    noise_scale: float = 1.0
    ar1: float = 0.0
    dropout_rate: float = 0.0
    events_per_session: int = 2
    event_duration_range_s: tuple[float, float] = (20.0, 45.0)
    event_offset_sigma_range: tuple[float, float] = (3.0, 5.0)
    event_angles: tuple[str, ...] = ("yaw", "pitch")
    event_ramp_s: float = 1.0
    event_margin_s: float = 60.0
    event_min_gap_s: float = 60.0
    event_label: str = "phone"
    biometrics: dict[str, SignalSpec] = field(default_factory=_default_biometrics)
    genders: tuple[str, ...] = ("female", "male")
    session_prefix: str = "synth"

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("count must be >= 1")
        for a in self.event_angles:
            if a not in ANGLES:
                raise ValueError(f"unknown angle {a!r}")


def _layout_events(cfg: CorpusConfig, rng: SplitMix64) -> tuple[EventSpec, ...]:
    placed: list[tuple[float, float]] = []
    specs: list[EventSpec] = []
    lo, hi = cfg.event_duration_range_s
    for _ in range(cfg.events_per_session):
        for _attempt in range(1000):
            dur = rng.uniform(lo, hi)
            start = rng.uniform(cfg.event_margin_s, cfg.duration_s - cfg.event_margin_s - dur)
            ok = all(
                start >= e + cfg.event_min_gap_s or start + dur <= s - cfg.event_min_gap_s
                for s, e in placed
            )
            if ok:
                placed.append((start, start + dur))
                break
        else:
            raise ValueError("could not place non-overlapping events; loosen the layout ranges")
        magnitude = rng.uniform(*cfg.event_offset_sigma_range)
        offsets = {}
        for a in cfg.event_angles:
            sign = 1.0 if rng.next_float() < 0.5 else -1.0
            offsets[a] = sign * magnitude
        specs.append(
            EventSpec(start_s=start, duration_s=dur, offsets_sigma=offsets,
                      ramp_s=cfg.event_ramp_s, label=cfg.event_label)
        )
    return tuple(sorted(specs, key=lambda e: e.start_s))


def gen_corpus(cfg: CorpusConfig) -> list[SessionBundle]:
    """Generate ``cfg.count`` sessions deterministically from the base seed."""
    root = SplitMix64(cfg.base_seed)
    bundles = []
    for i in range(cfg.count):
        session_seed = root.next_u64()
        layout_rng = SplitMix64(root.next_u64())
        events = _layout_events(cfg, layout_rng)
        session_cfg = SynthConfig(
            seed=session_seed,
            session_id=f"{cfg.session_prefix}-{i:03d}",
            duration_s=cfg.duration_s,
            fps=cfg.fps,
            gender=cfg.genders[i % len(cfg.genders)] if cfg.genders else "unspecified",
            baseline=cfg.baseline,
            noise_scale=cfg.noise_scale,
            ar1=cfg.ar1,
            dropout_rate=cfg.dropout_rate,
            events=events,
            biometrics=cfg.biometrics,
        )
        bundles.append(gen_session(session_cfg))
    return bundles


# ---------------------------------------------------------------------------
# Config (de)serialization for the CLI
# ---------------------------------------------------------------------------


def _signal_specs(raw: dict) -> dict[str, SignalSpec]:
    out = _default_biometrics()
    for k, v in raw.items():
        if k not in SIGNALS:
            raise ValueError(f"unknown signal {k!r} in biometrics config")
        out[k] = SignalSpec(float(v["mean"]), float(v["sd"]), float(v.get("event_offset", 0.0)))
    return out


def _baseline(raw: dict) -> dict[str, tuple[float, float]]:
    out = _default_baseline()
    for k, v in raw.items():
        if k not in ANGLES:
            raise ValueError(f"unknown angle {k!r} in baseline config")
        out[k] = (float(v[0]), float(v[1]))
    return out


def config_from_dict(raw: dict) -> SynthConfig | CorpusConfig:
    """Build a single-session or (when "count" is present) corpus config."""
    if "count" in raw:
        kwargs = dict(raw)
        if "baseline" in kwargs:
            kwargs["baseline"] = _baseline(kwargs["baseline"])
        if "biometrics" in kwargs:
            kwargs["biometrics"] = _signal_specs(kwargs["biometrics"])
        for key in ("event_duration_range_s", "event_offset_sigma_range"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        if "event_angles" in kwargs:
            kwargs["event_angles"] = tuple(kwargs["event_angles"])
        if "genders" in kwargs:
            kwargs["genders"] = tuple(kwargs["genders"])
        return CorpusConfig(**kwargs)
    kwargs = dict(raw)
    if "baseline" in kwargs:
        kwargs["baseline"] = _baseline(kwargs["baseline"])
    if "biometrics" in kwargs:
        kwargs["biometrics"] = _signal_specs(kwargs["biometrics"])
    if "events" in kwargs:
        kwargs["events"] = tuple(
            EventSpec(
                start_s=float(e["start_s"]),
                duration_s=float(e["duration_s"]),
                offsets_sigma={k: float(v) for k, v in e.get("offsets_sigma", {}).items()},
                ramp_s=float(e.get("ramp_s", 0.0)),
                label=e.get("label", "phone"),
            )
            for e in kwargs["events"]
        )
    return SynthConfig(**kwargs)


def write_synth_tree(config: SynthConfig | CorpusConfig, out_dir: str | Path,
                     raw_config: dict | None = None) -> list[Path]:
    """Write session directories plus a synth_config.json provenance copy."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    bundles = gen_corpus(config) if isinstance(config, CorpusConfig) else [gen_session(config)]
    manifests = []
    for bundle in bundles:
        manifests.append(write_session_bundle(bundle, out_dir / bundle.session_id))
    provenance = raw_config if raw_config is not None else asdict(config)
    (out_dir / "synth_config.json").write_text(
        json.dumps(provenance, indent=2, default=list) + "\n", encoding="utf-8"
    )
    return manifests


# ---------------------------------------------------------------------------
# Naive reference detector (test oracle)
# ---------------------------------------------------------------------------


def brute_force_detect(series: AngleSeries, params: DetectorParams) -> DetectionResult:
    """Reference pipeline used only in tests: recomputes every window mean
    independently (compensated sums over window slices) and merges flagged
    spans by repeated pairwise scanning. Same contract as detector.detect."""
    per_angle_values: list[list[float | None]] = []
    length = int(series.frames[-1]) + 1 if len(series) else 0
    if length == 0:
        raise InsufficientDataError("empty angle series")
    for a in range(3):
        col: list[float | None] = [None] * length
        for i in range(len(series)):
            if bool(series.valid[i]):
                col[int(series.frames[i])] = float(series.angles[a, i])
        per_angle_values.append(col)

    valid_counts = sum(1 for v in per_angle_values[0] if v is not None)
    if valid_counts < 2:
        raise InsufficientDataError(f"need at least 2 valid samples, got {valid_counts}")
    stats_list = []
    for col in per_angle_values:
        xs = [v for v in col if v is not None]
        mu = math.fsum(xs) / len(xs)
        var = math.fsum((x - mu) ** 2 for x in xs) / (len(xs) - 1)
        stats_list.append(AngleStats(mu=mu, sigma=math.sqrt(var), valid_count=len(xs)))
    stats = PerAngleStats(*stats_list)

    width = params.effective_window(series.fps)
    if width > length:
        raise InsufficientDataError(
            f"effective window of {width} frames exceeds series length {length}"
        )
    if params.stride > width:
        raise ValueError(f"stride {params.stride} exceeds effective window {width}")

    flagged: list[list] = []  # [start, end, set(angles)]
    n_flagged = 0
    for s in range(0, length - width + 1, params.stride):
        window_vals = [col[s : s + width] for col in per_angle_values]
        count = sum(1 for v in window_vals[0] if v is not None)
        if count / width < params.min_window_coverage or count == 0:
            continue
        hit = set()
        for a, vals in enumerate(window_vals):
            kept = [v for v in vals if v is not None]
            mean = math.fsum(kept) / len(kept)
            if abs(mean - stats_list[a].mu) > params.n * stats_list[a].sigma:
                hit.add(ANGLES[a])
        if hit:
            n_flagged += 1
            flagged.append([s, s + width - 1, hit])

    # merge by repeated scanning until no pair coalesces
    while True:
        merged_any = False
        out: list[list] = []
        for span in flagged:
            if out and span[0] <= out[-1][1]:
                out[-1][1] = max(out[-1][1], span[1])
                out[-1][2] = out[-1][2] | span[2]
                merged_any = True
            else:
                out.append(list(span))
        flagged = out
        if not merged_any:
            break

    events = tuple(
        EventInterval(
            start=float(s / series.fps),
            end=float((e + 1) / series.fps),
            label="predicted",
            source="predicted",
            attribution=frozenset(attrs),
        )
        for s, e, attrs in flagged
    )
    return DetectionResult(params=params, stats=stats, events=events, flagged_window_count=n_flagged)
