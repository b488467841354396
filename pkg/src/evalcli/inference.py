"""
inference.py

Synthesis from a timed phone sequence + F0, voice conversion from a WAV +
F0, and the mel container both write.
"""

import logging
from pathlib import Path
from typing import Optional

import torch

from src.config import ExperimentConfig, MelConfig, config_fingerprint
from src.corpus.container import read_container, write_container
from src.corpus.inventory import PhoneInventory
from src.corpus.labels import (check_durations, f0_to_track, read_f0_file, read_phone_timing,
                               timing_duration, timing_to_frames)
from src.dsp.audio import load_wav, save_wav
from src.dsp.features import MelSpectrogram, compute_mel, mel_to_audio
from src.errors import ContainerError, LabelError
from src.model.inputs import control_track, mel_input
from src.model.timbre import TimbreModel
from src.train.checkpoint import restore_model

logger = logging.getLogger(__name__)


def _model(ckpt) -> TimbreModel:
    model = ckpt if isinstance(ckpt, TimbreModel) else restore_model(ckpt)
    model.eval()
    return model


def _check_speaker(model: TimbreModel, speaker: int) -> None:
    if not 0 <= speaker < model.config.n_speakers:
        raise ValueError(f"speaker {speaker} outside a {model.config.n_speakers}-row speaker table")


def synthesize(ckpt, timing_path, f0_path, speaker: int, config: ExperimentConfig) -> MelSpectrogram:
    timing = read_phone_timing(timing_path)
    f0 = read_f0_file(f0_path)
    check_durations(timing, f0, config.mel)
    n_samples = int(round(timing_duration(timing) * config.mel.sample_rate))
    n_frames = config.mel.frames_for(n_samples)
    ling = timing_to_frames(timing, PhoneInventory.from_list(config.corpus.phones), n_frames, config.mel)

    model = _model(ckpt)
    _check_speaker(model, speaker)
    control = control_track(model, f0_to_track(f0, n_frames, config.mel).f0_hz, speaker)
    phones = torch.as_tensor(ling.phone_ids, dtype=torch.long).unsqueeze(0)
    x = model.infer_autoregressive(phones, control)
    logger.info(f"Synthesised {n_frames} frames for speaker {speaker}")
    return MelSpectrogram(model.denormalize_mel(x)[0].numpy(), hop_ms=config.mel.hop_ms)


def convert(ckpt, wav_path, f0_path, speaker: int, config: ExperimentConfig) -> MelSpectrogram:
    if f0_path is None:
        raise LabelError("voice conversion needs an F0 file for the source recording")
    f0 = read_f0_file(f0_path)
    mel = compute_mel(load_wav(wav_path), config.mel)

    model = _model(ckpt)
    _check_speaker(model, speaker)
    control = control_track(model, f0_to_track(f0, mel.n_frames, config.mel).f0_hz, speaker)
    x = model.infer_voice_conversion(mel_input(model, mel.values), control)
    logger.info(f"Converted {wav_path} ({mel.n_frames} frames) to speaker {speaker}")
    return MelSpectrogram(model.denormalize_mel(x)[0].numpy(), hop_ms=config.mel.hop_ms)


def write_mel(mel: MelSpectrogram, path, config: MelConfig, metadata: Optional[dict] = None) -> Path:
    meta = dict(metadata or {})
    meta.update({"kind": "mel", "hop_ms": mel.hop_ms, "n_frames": mel.n_frames, "n_bands": mel.n_bands})
    return write_container(path, {"mel": mel.values}, meta, fingerprint=config_fingerprint(config))


def read_mel(path, index: int = 0) -> MelSpectrogram:
    """Mel from a predicted-mel container, or utterance `index` of a feature container."""
    arrays, meta, _ = read_container(path)
    kind = meta.get("kind")
    hop_ms = meta.get("hop_ms") or meta.get("mel_config", {}).get("hop_ms", 5.0)
    key = "mel" if kind == "mel" else f"utt/{index}/mel"
    if kind not in ("mel", "features") or key not in arrays:
        raise ContainerError(f"{path}: no mel-spectrogram found (kind '{kind}')")
    return MelSpectrogram(arrays[key], hop_ms=float(hop_ms))


def render_audio(mel: MelSpectrogram, path, config: ExperimentConfig) -> Path:
    """Classical phase reconstruction, for listening only."""
    clip = mel_to_audio(mel, config.mel, n_iter=config.eval.griffin_lim_iters)
    logger.info(f"Rendered {clip.duration:.2f}s of audio to {path}")
    return save_wav(clip, path)
