"""
features.py

Log-mel analysis: HTK-scale triangular filterbank over a Hann-windowed STFT,
log-compressed with a fixed power floor. Also the classical phase
reconstruction used to listen to predicted features.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache

import librosa
import numpy as np

from src.config import MelConfig
from src.dsp.audio import AudioClip
from src.errors import AudioTooShortError, ShapeError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MelSpectrogram:
    """Frame-major log-mel energies, shape [n_frames, n_bands]."""

    values: np.ndarray
    hop_ms: float = 5.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 2:
            raise ShapeError(f"mel values must be [frames, bands], got shape {values.shape}")
        object.__setattr__(self, "values", values)

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_bands(self) -> int:
        return self.values.shape[1]

    @property
    def seconds(self) -> np.ndarray:
        return np.arange(self.n_frames) * self.hop_ms / 1000.0


def mel_filterbank(n_bands: int, f_lo: float, f_hi: float, n_fft: int, sample_rate: int) -> np.ndarray:
    """Unnormalised triangles with peaks equally spaced on the HTK mel scale.

    Returns a [n_bands, n_fft // 2 + 1] matrix.
    """
    if f_hi > sample_rate / 2:
        raise ValueError(f"upper band edge {f_hi} Hz exceeds Nyquist ({sample_rate / 2} Hz)")
    if f_lo >= f_hi:
        raise ValueError(f"lower band edge {f_lo} Hz must be below upper edge {f_hi} Hz")
    return librosa.filters.mel(sr=sample_rate, n_fft=n_fft, n_mels=n_bands, fmin=f_lo, fmax=f_hi,
                               htk=True, norm=None, dtype=np.float64)


def band_centers(config: MelConfig) -> np.ndarray:
    """Peak frequency (Hz) of every band of the configured filterbank."""
    edges = librosa.mel_frequencies(n_mels=config.n_mels + 2, fmin=config.f_min, fmax=config.f_max, htk=True)
    return edges[1:-1]


def nearest_band(frequency: float, config: MelConfig) -> int:
    return int(np.argmin(np.abs(band_centers(config) - frequency)))


@lru_cache(maxsize=8)
def _cached_filterbank(config: MelConfig) -> np.ndarray:
    return mel_filterbank(config.n_mels, config.f_min, config.f_max, config.n_fft, config.sample_rate)


def compute_mel(clip: AudioClip, config: MelConfig) -> MelSpectrogram:
    if clip.sample_rate != config.sample_rate:
        raise ShapeError(f"clip is {clip.sample_rate} Hz but features are configured for {config.sample_rate} Hz")
    if len(clip) < config.win_length:
        raise AudioTooShortError(
            f"clip has {len(clip)} samples, shorter than one {config.win_ms:g} ms window ({config.win_length})")

    stft = librosa.stft(clip.samples, n_fft=config.n_fft, hop_length=config.hop_length,
                        win_length=config.win_length, window="hann", center=True, pad_mode="constant")
    power = np.abs(stft) ** 2
    mel = _cached_filterbank(config) @ power
    values = np.log(np.maximum(mel, config.log_floor)).T
    return MelSpectrogram(values, hop_ms=config.hop_ms)


def mel_to_audio(mel: MelSpectrogram, config: MelConfig, n_iter: int = 32) -> AudioClip:
    """Griffin-Lim rendering of a log-mel spectrogram (inspection only)."""
    power = np.exp(mel.values.astype(np.float64)).T
    samples = librosa.feature.inverse.mel_to_audio(
        power, sr=config.sample_rate, n_fft=config.n_fft, hop_length=config.hop_length,
        win_length=config.win_length, window="hann", center=True, pad_mode="constant",
        power=2.0, n_iter=n_iter, htk=True, norm=None, fmin=config.f_min, fmax=config.f_max)
    peak = np.max(np.abs(samples)) if len(samples) else 0.0
    if peak > 1.0:
        samples = samples / peak
    return AudioClip(samples, config.sample_rate)
