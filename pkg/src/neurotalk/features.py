"""Time-major feature sequences and the delta / delta-delta expansion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FRAME_RATE_HZ = 100.0

# per-channel dims of each EEG feature set, before reduction
SET_FEATURES_PER_CHANNEL = {"1": 5, "2": 3, "3": 3}


@dataclass
class FeatureSequence:
    frames: np.ndarray  # (T, dim)
    frame_rate_hz: float = FRAME_RATE_HZ
    set_id: str = ""
    degenerate: int = 0  # windows where a degenerate-value rule fired

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            raise ValueError(f"frames must be 2-D (T, dim), got {self.frames.shape}")

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    def __len__(self) -> int:
        return self.frames.shape[0]

    def with_frames(self, frames: np.ndarray, set_id: str | None = None) -> "FeatureSequence":
        return FeatureSequence(frames, self.frame_rate_hz,
                               self.set_id if set_id is None else set_id, self.degenerate)


def _delta(x: np.ndarray) -> np.ndarray:
    padded = np.concatenate([x[:1], x, x[-1:]], axis=0)
    return (padded[2:] - padded[:-2]) / 2.0


def append_deltas(f: FeatureSequence | np.ndarray):
    """Append first and second order differences: [f, delta, delta-delta] per frame.

    delta_t = (f[t+1] - f[t-1]) / 2 with the edge frames replicated.
    """
    frames = f.frames if isinstance(f, FeatureSequence) else np.asarray(f, dtype=np.float64)
    if frames.shape[0] < 1:
        raise ValueError("need at least one frame")
    d1 = _delta(frames)
    d2 = _delta(d1)
    out = np.concatenate([frames, d1, d2], axis=1)
    if isinstance(f, FeatureSequence):
        return f.with_frames(out)
    return out
