"""
augment.py

Pitch transposition of acoustic inputs: resample the audio (pitch and
duration change together), analyse it, then time-scale the mel frames back
onto the label grid so the linguistic alignment is untouched.
"""

import librosa
import numpy as np
from scipy.interpolate import interp1d

from src.config import MelConfig
from src.dsp.audio import AudioClip
from src.dsp.features import MelSpectrogram, compute_mel


def semitones_to_factor(semitones: float) -> float:
    return float(2.0 ** (semitones / 12.0))


def sample_transpose_factor(rng: np.random.Generator, max_semitones: float = 4.0) -> float:
    """Uniform in log-factor over [-max_semitones, +max_semitones]."""
    return semitones_to_factor(rng.uniform(-max_semitones, max_semitones))


def resample_for_pitch(clip: AudioClip, factor: float) -> AudioClip:
    """Resample so that playback at the original rate scales pitch by `factor`.

    Uses librosa's soxr_hq polyphase resampler.
    """
    if factor <= 0:
        raise ValueError(f"transposition factor must be positive, got {factor}")
    if factor == 1.0:
        return clip
    shifted = librosa.resample(clip.samples, orig_sr=clip.sample_rate * factor,
                               target_sr=clip.sample_rate, res_type="soxr_hq")
    return AudioClip(np.clip(shifted, -1.0, 1.0), clip.sample_rate)


def transpose_augment(clip: AudioClip, labels_frames: int, factor: float, config: MelConfig) -> MelSpectrogram:
    if factor <= 0:
        raise ValueError(f"transposition factor must be positive, got {factor}")
    if labels_frames < 1:
        raise ValueError(f"labels_frames must be >= 1, got {labels_frames}")

    shifted = resample_for_pitch(clip, factor)
    samples = shifted.samples
    if len(samples) < config.win_length:
        samples = np.pad(samples, (0, config.win_length - len(samples)))
    mel = compute_mel(AudioClip(samples, clip.sample_rate), config).values

    # label frame j sits at frame j / factor of the resampled signal
    positions = np.clip(np.arange(labels_frames) / factor, 0.0, mel.shape[0] - 1)
    if mel.shape[0] == 1:
        scaled = np.repeat(mel, labels_frames, axis=0)
    else:
        scaled = interp1d(np.arange(mel.shape[0]), mel, axis=0, kind="linear", assume_sorted=True)(positions)
    return MelSpectrogram(scaled.astype(np.float32), hop_ms=config.hop_ms)
