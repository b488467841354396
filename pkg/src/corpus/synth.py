"""
synth.py

Source-filter singing generator. Vowels are an impulse train at the note F0
(with vibrato) through a cascade of formant resonators, consonants are
band-passed noise, silence is exact zeros. Frame labels and F0 come out of
the generator itself, so they are exact.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import butter, lfilter, sosfilt

from src.config import MelConfig
from src.corpus.inventory import LinguisticFrames, PhoneInventory
from src.corpus.singer import SingerSpec
from src.dsp.audio import AudioClip
from src.dsp.features import MelSpectrogram, compute_mel
from src.dsp.pitch import F0Track
from src.errors import CorpusError, LabelError, ShapeError

logger = logging.getLogger(__name__)

VOWEL_RMS = 0.2
CONSONANT_RMS = 0.05
FADE_SECONDS = 0.005


@dataclass(frozen=True)
class Utterance:
    name: str
    singer_id: int
    audio: AudioClip
    mel: MelSpectrogram
    f0: F0Track
    ling: Optional[LinguisticFrames] = None

    def __post_init__(self):
        n = self.mel.n_frames
        if self.f0.n_frames != n:
            raise ShapeError(f"{self.name}: mel has {n} frames, F0 has {self.f0.n_frames}")
        if self.ling is not None and self.ling.n_frames != n:
            raise ShapeError(f"{self.name}: mel has {n} frames, labels have {self.ling.n_frames}")

    @property
    def n_frames(self) -> int:
        return self.mel.n_frames

    @property
    def duration(self) -> float:
        return self.audio.duration

    @property
    def has_labels(self) -> bool:
        return self.ling is not None

    def without_labels(self) -> "Utterance":
        return Utterance(self.name, self.singer_id, self.audio, self.mel, self.f0, None)


def _resonator(signal: np.ndarray, freq: float, bandwidth: float, sample_rate: int) -> np.ndarray:
    r = np.exp(-np.pi * bandwidth / sample_rate)
    a = [1.0, -2.0 * r * np.cos(2.0 * np.pi * freq / sample_rate), r * r]
    return lfilter([sum(a)], a, signal)


def _fade(segment: np.ndarray, sample_rate: int) -> np.ndarray:
    n = min(int(FADE_SECONDS * sample_rate), len(segment) // 2)
    if n > 0:
        ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(n) / n)
        segment[:n] *= ramp
        segment[-n:] *= ramp[::-1]
    return segment


def _to_rms(segment: np.ndarray, target: float) -> np.ndarray:
    rms = np.sqrt(np.mean(segment ** 2))
    return segment * (target / rms) if rms > 0 else segment


def _boundaries(durations: Sequence[float], sample_rate: int) -> np.ndarray:
    return np.round(np.cumsum([0.0] + list(durations)) * sample_rate).astype(np.int64)


def synthesize_utterance(spec: SingerSpec, phone_seq: Sequence[Tuple[str, float]],
                         note_seq: Sequence[Tuple[float, float]], seed: int,
                         config: MelConfig, inventory: PhoneInventory,
                         name: str = "utt") -> Utterance:
    """Render a phone sequence sung on a note sequence.

    phone_seq and note_seq are lists of (symbol, seconds) and (f0_hz, seconds).
    Notes shorter than the phones are held at their last value.
    """
    if not phone_seq:
        raise LabelError("empty phone sequence")
    for symbol, dur in phone_seq:
        if dur <= 0:
            raise LabelError(f"phone '{symbol}' has non-positive duration {dur}")
        inventory.index(symbol)
        if inventory.kind(symbol) == "unknown":
            raise LabelError(f"phone '{symbol}' has no synthesis recipe")
    for f0, dur in note_seq:
        if dur <= 0:
            raise LabelError(f"note {f0} Hz has non-positive duration {dur}")
        if not spec.in_range(f0):
            raise CorpusError(
                f"note {f0:.1f} Hz outside singer {spec.singer_id} range [{spec.f0_min:.1f}, {spec.f0_max:.1f}] Hz")

    sr = config.sample_rate
    rng = np.random.default_rng(seed)
    bounds = _boundaries([d for _, d in phone_seq], sr)
    n = int(bounds[-1])

    # per-sample commanded F0 with vibrato
    base = np.zeros(n)
    if note_seq:
        note_bounds = np.minimum(_boundaries([d for _, d in note_seq], sr), n)
        for (f0, _), b0, b1 in zip(note_seq, note_bounds[:-1], note_bounds[1:]):
            base[b0:b1] = f0
        base[note_bounds[-1]:] = note_seq[-1][0]
    t = np.arange(n) / sr
    vibrato = spec.vibrato_depth_cents * np.sin(2 * np.pi * spec.vibrato_rate * t + rng.uniform(0, 2 * np.pi))
    f0_contour = base * 2.0 ** (vibrato / 1200.0)

    audio = np.zeros(n)
    kinds = []
    for (symbol, _), b0, b1 in zip(phone_seq, bounds[:-1], bounds[1:]):
        kind = inventory.kind(symbol)
        kinds.append(kind)
        if kind == "silence" or b1 <= b0:
            continue
        if kind == "vowel":
            if not np.all(base[b0:b1] > 0):
                raise CorpusError(f"vowel '{symbol}' at {b0 / sr:.3f}s has no note")
            phase = np.cumsum(f0_contour[b0:b1] / sr) + rng.uniform(0, 1)
            cycles = np.floor(phase)
            source = (np.diff(cycles, prepend=cycles[0] - 1) > 0).astype(np.float64)
            source = lfilter([1.0], [1.0, -0.7], source)
            for freq, bw in spec.formants[symbol]:
                source = _resonator(source, freq, bw, sr)
            segment = _to_rms(source, VOWEL_RMS)
        else:
            lo, hi = spec.consonant_bands[symbol]
            sos = butter(4, [lo, hi], btype="bandpass", fs=sr, output="sos")
            segment = _to_rms(sosfilt(sos, rng.standard_normal(b1 - b0)), CONSONANT_RMS)
        audio[b0:b1] = _fade(segment, sr)

    peak = np.max(np.abs(audio)) if n else 0.0
    if peak > 0.95:
        audio *= 0.95 / peak

    clip = AudioClip(audio, sr)
    mel = compute_mel(clip, config)

    # labels switch at the nearest frame
    positions = np.minimum(np.arange(mel.n_frames) * config.hop_length, max(n - 1, 0))
    phone_index = np.clip(np.searchsorted(bounds[1:], positions, side="right"), 0, len(phone_seq) - 1)
    ids = np.array([inventory.index(s) for s, _ in phone_seq])[phone_index]
    voiced = np.array([k == "vowel" for k in kinds])[phone_index]
    f0_frames = np.where(voiced, f0_contour[positions] if n else 0.0, 0.0)

    return Utterance(name=name, singer_id=spec.singer_id, audio=clip, mel=mel,
                     f0=F0Track(f0_frames), ling=LinguisticFrames(ids))


def _midi_to_hz(midi):
    return 440.0 * 2.0 ** ((np.asarray(midi, dtype=np.float64) - 69.0) / 12.0)


def _hz_to_midi(hz):
    return 69.0 + 12.0 * np.log2(hz / 440.0)


def random_song(spec: SingerSpec, inventory: PhoneInventory, seconds: float,
                rng: np.random.Generator) -> Tuple[List[Tuple[str, float]], List[Tuple[float, float]]]:
    """Random syllable sequence on a semitone random-walk melody.

    Returns phone and note sequences of equal length (one note per phone).
    """
    lowest = int(np.ceil(_hz_to_midi(spec.f0_min * 1.03)))
    highest = int(np.floor(_hz_to_midi(spec.f0_max / 1.03)))
    if highest < lowest:
        raise CorpusError(f"singer {spec.singer_id} F0 range holds no semitone")
    vowels, consonants = inventory.vowels, inventory.consonants
    if not vowels:
        raise CorpusError("inventory has no vowels to sing")

    pitch = int(rng.integers(lowest, highest + 1))
    phones: List[Tuple[str, float]] = []
    notes: List[Tuple[float, float]] = []

    def _add(symbol, dur):
        phones.append((symbol, float(dur)))
        notes.append((float(_midi_to_hz(pitch)), float(dur)))

    _add("sil", rng.uniform(0.3, 0.6))
    elapsed = phones[0][1]
    while elapsed < seconds - 0.8:
        pitch = int(np.clip(pitch + rng.integers(-4, 5), lowest, highest))
        if consonants and rng.random() < 0.7:
            _add(consonants[rng.integers(len(consonants))], rng.uniform(0.06, 0.14))
        _add(vowels[rng.integers(len(vowels))], rng.uniform(0.25, 1.0))
        if rng.random() < 0.25:
            _add("sil", rng.uniform(0.1, 0.35))
        elapsed = sum(d for _, d in phones)
    _add("sil", max(0.3, seconds - elapsed))
    return phones, notes
