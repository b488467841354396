"""
inputs.py

Numpy features -> model tensors: normalised mel, control track, phone ids.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch

from src.dsp.pitch import F0Track, normalize_f0
from src.model.timbre import TimbreModel


@dataclass
class ModelInputs:
    x: torch.Tensor                          # [B, T, n_mels], normalised
    control: torch.Tensor                    # [B, T, 2 + speaker_dim]
    phone_ids: Optional[torch.Tensor] = None  # [B, T]


def model_dtype(model: TimbreModel) -> torch.dtype:
    return model.mel_mean.dtype


def mel_input(model: TimbreModel, mel: np.ndarray) -> torch.Tensor:
    """[B, T, n_mels] (or [T, n_mels]) raw log-mel -> normalised tensor."""
    t = torch.as_tensor(np.asarray(mel), dtype=model_dtype(model))
    if t.dim() == 2:
        t = t.unsqueeze(0)
    return model.normalize_mel(t)


def control_track(model: TimbreModel, f0_hz: np.ndarray, singer_ids) -> torch.Tensor:
    f0_hz = np.atleast_2d(f0_hz)
    stats = model.f0_stats()
    feats = np.stack([normalize_f0(F0Track(row), stats) for row in f0_hz])
    ids = torch.as_tensor(np.atleast_1d(singer_ids), dtype=torch.long)
    if ids.numel() == 1 and f0_hz.shape[0] > 1:
        ids = ids.expand(f0_hz.shape[0])
    return model.control(torch.as_tensor(feats, dtype=model_dtype(model)), ids)


def utterance_inputs(model: TimbreModel, utt, singer_id: Optional[int] = None,
                     use_labels: bool = True) -> ModelInputs:
    """Batch-of-one inputs for a whole utterance; labels are only read with use_labels."""
    speaker = utt.singer_id if singer_id is None else singer_id
    phones = None
    if use_labels and utt.ling is not None:
        phones = torch.as_tensor(utt.ling.phone_ids, dtype=torch.long).unsqueeze(0)
    return ModelInputs(x=mel_input(model, utt.mel.values),
                       control=control_track(model, utt.f0.f0_hz, speaker),
                       phone_ids=phones)
