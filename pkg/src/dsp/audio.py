"""
audio.py

Mono PCM/float WAV input and output.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import soundfile as sf

from src.errors import AudioFormatError, ChannelsError

logger = logging.getLogger(__name__)

READABLE_SUBTYPES = {"PCM_16", "PCM_24", "PCM_32", "FLOAT", "DOUBLE"}


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int = 32000

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ChannelsError(f"channels unsupported: expected mono samples, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise AudioFormatError("audio contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self):
        return len(self.samples)


def load_wav(path) -> AudioClip:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"WAV file not found: {path}")
    try:
        info = sf.info(str(path))
    except RuntimeError as e:
        raise AudioFormatError(f"unreadable audio file {path}: {e}") from e
    if info.format != "WAV":
        raise AudioFormatError(f"unsupported container {info.format} in {path}; expected WAV")
    if info.channels != 1:
        raise ChannelsError(f"channels unsupported: {path} has {info.channels} channels, expected mono")
    if info.subtype not in READABLE_SUBTYPES:
        raise AudioFormatError(f"unsupported encoding {info.subtype} in {path}")

    # soundfile scales integer PCM by 1/2**(bits-1), so full scale maps into [-1, 1)
    samples, sample_rate = sf.read(str(path), dtype="float64", always_2d=False)
    logger.debug(f"Loaded {path}: {len(samples)} samples @ {sample_rate} Hz ({info.subtype})")
    return AudioClip(np.clip(samples, -1.0, 1.0), int(sample_rate))


def save_wav(clip: AudioClip, path, subtype: str = "PCM_16") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sf.write(str(path), np.clip(clip.samples, -1.0, 1.0), clip.sample_rate, subtype=subtype)
    return path
