from __future__ import annotations

from poseguard.session import AngleSample, AngleSeries


def make_series(yaw, pitch=None, roll=None, fps=1.0, valid=None, session_id="test"):
    """Build an AngleSeries from plain lists; None entries mark invalid frames."""
    n = len(yaw)
    pitch = pitch if pitch is not None else [0.0] * n
    roll = roll if roll is not None else [0.0] * n
    valid = valid if valid is not None else [v is not None for v in yaw]
    samples = [
        AngleSample(
            frame_index=i,
            timestamp=i / fps,
            yaw=float(yaw[i]) if yaw[i] is not None else float("nan"),
            pitch=float(pitch[i]) if pitch[i] is not None else float("nan"),
            roll=float(roll[i]) if roll[i] is not None else float("nan"),
            valid=bool(valid[i]),
        )
        for i in range(n)
    ]
    return AngleSeries.from_samples(session_id, fps, samples)
