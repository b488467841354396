"""
pitch.py

F0 tracks and their two-channel encoding for the control input:
(a) log-F0 mapped to [-1, 1] with corpus statistics, held over unvoiced runs;
(b) the voiced flag.
"""

from dataclasses import dataclass
from typing import Iterable

import numpy as np
import pandas as pd

from src.errors import ShapeError


@dataclass(frozen=True)
class F0Track:
    f0_hz: np.ndarray

    def __post_init__(self):
        f0 = np.asarray(self.f0_hz, dtype=np.float64)
        if f0.ndim != 1:
            raise ShapeError(f"F0 track must be one value per frame, got shape {f0.shape}")
        if np.any(f0 < 0) or not np.all(np.isfinite(f0)):
            raise ValueError("F0 values must be finite and non-negative")
        object.__setattr__(self, "f0_hz", f0)

    @property
    def voiced(self) -> np.ndarray:
        return self.f0_hz > 0

    @property
    def n_frames(self) -> int:
        return len(self.f0_hz)


@dataclass(frozen=True)
class F0Stats:
    log_f0_min: float
    log_f0_max: float

    def __post_init__(self):
        if not self.log_f0_max > self.log_f0_min:
            raise ValueError(f"degenerate F0 range [{self.log_f0_min}, {self.log_f0_max}]")


def fit_f0_stats(tracks: Iterable[F0Track]) -> F0Stats:
    voiced = [np.log(t.f0_hz[t.voiced]) for t in tracks]
    voiced = np.concatenate(voiced) if voiced else np.empty(0)
    if voiced.size == 0:
        raise ValueError("corpus has no voiced frames to fit F0 statistics")
    lo, hi = float(voiced.min()), float(voiced.max())
    if hi <= lo:
        # single-pitch corpus: widen by a semitone each way
        lo, hi = lo - np.log(2) / 12, hi + np.log(2) / 12
    return F0Stats(lo, hi)


def normalize_f0(track: F0Track, stats: F0Stats) -> np.ndarray:
    """Return a [n_frames, 2] float32 array (normalised log-F0, voiced flag)."""
    if track.n_frames == 0:
        raise ValueError("cannot normalise an empty F0 track")
    voiced = track.voiced
    scaled = np.full(track.n_frames, np.nan)
    log_f0 = np.log(track.f0_hz[voiced])
    scaled[voiced] = 2.0 * (log_f0 - stats.log_f0_min) / (stats.log_f0_max - stats.log_f0_min) - 1.0
    held = pd.Series(np.clip(scaled, -1.0, 1.0)).ffill().fillna(0.0).to_numpy()
    return np.stack([held, voiced.astype(np.float64)], axis=1).astype(np.float32)
