from __future__ import annotations

import pytest

from poseguard.synth import CorpusConfig, SynthConfig, EventSpec, gen_corpus, gen_session


@pytest.fixture
def small_bundle():
    """120 s @ 10 fps with one strong yaw event and quiet biometrics."""
    cfg = SynthConfig(
        seed=101,
        session_id="small",
        duration_s=120.0,
        fps=10.0,
        events=(EventSpec(start_s=40.0, duration_s=20.0, offsets_sigma={"yaw": 5.0}, ramp_s=1.0),),
    )
    return gen_session(cfg)


@pytest.fixture
def small_corpus(tmp_path):
    """Three short sessions written to disk; returns (dir, manifest paths)."""
    cfg = CorpusConfig(
        count=3,
        base_seed=77,
        duration_s=120.0,
        fps=10.0,
        events_per_session=2,
        event_duration_range_s=(10.0, 16.0),
        event_margin_s=20.0,
        event_min_gap_s=10.0,
        event_offset_sigma_range=(4.0, 5.0),
    )
    from poseguard.session import write_session_bundle

    manifests = []
    for bundle in gen_corpus(cfg):
        manifests.append(write_session_bundle(bundle, tmp_path / "corpus" / bundle.session_id))
    return tmp_path / "corpus", manifests
