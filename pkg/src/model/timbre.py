"""
timbre.py

The full timbre model: acoustic encoder E_A (mel -> embedding), linguistic
encoder E_L (one-hot phones -> embedding), long-scope non-causal decoder D_1
and short-scope autoregressive decoder D_2, conditioned on the control track
c = [normalised F0 (2 ch), speaker embedding].

Every tensor handed to the model is normalised log-mel; `normalize_mel` and
`denormalize_mel` convert with the feature statistics stored as buffers.
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from src.blocks.incremental import block_forward_incremental, fresh_state
from src.blocks.wavenet import BlockConfig, WaveNetBlock
from src.config import ModelConfig, NoiseSpec
from src.dsp.pitch import F0Stats, fit_f0_stats
from src.errors import ShapeError

logger = logging.getLogger(__name__)

STD_FLOOR = 0.1


@dataclass(frozen=True)
class FeatureStats:
    mel_mean: np.ndarray
    mel_std: np.ndarray
    f0: F0Stats


def fit_feature_stats(utterances: Sequence) -> FeatureStats:
    if not utterances:
        raise ValueError("cannot fit feature statistics on an empty corpus")
    mels = np.concatenate([u.mel.values for u in utterances], axis=0).astype(np.float64)
    return FeatureStats(mel_mean=mels.mean(axis=0), mel_std=np.maximum(mels.std(axis=0), STD_FLOOR),
                        f0=fit_f0_stats(u.f0 for u in utterances))


def switch_embedding(e_a: torch.Tensor, e_l: torch.Tensor, k) -> torch.Tensor:
    """e = k * e_a + (1 - k) * e_l, with k a scalar or one value per batch item."""
    if e_a.shape != e_l.shape:
        raise ShapeError(f"acoustic embedding {tuple(e_a.shape)} vs linguistic {tuple(e_l.shape)}")
    k = torch.as_tensor(k, dtype=e_a.dtype, device=e_a.device)
    if k.dim() == 1:
        k = k.view(-1, *([1] * (e_a.dim() - 1)))
    return k * e_a + (1 - k) * e_l


def _gaussian(like: torch.Tensor, sigma: float, generator: Optional[torch.Generator]) -> torch.Tensor:
    return sigma * torch.randn(like.shape, generator=generator, dtype=like.dtype, device=like.device)


class TimbreModel(nn.Module):

    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__()
        self.config = config
        cfg, slope = config, config.leaky_slope
        c_dim = cfg.control_dim
        layer_cond = cfg.cond_injection == "layer"

        self.encoder_acoustic = WaveNetBlock(BlockConfig.from_stack(
            cfg.encoder, cfg.n_mels, cfg.embed_dim, "tanh", leaky_slope=slope)) if cfg.use_acoustic_encoder else None
        self.encoder_linguistic = WaveNetBlock(BlockConfig.from_stack(
            cfg.encoder, cfg.n_phones, cfg.embed_dim, "tanh", leaky_slope=slope))
        long_out = cfg.long_decoder.hidden_channels
        # D_1 always sees [e + eps1, c] at its input; per-layer injection adds c again
        self.decoder_long = WaveNetBlock(BlockConfig.from_stack(
            cfg.long_decoder, cfg.embed_dim + c_dim, long_out, "tanh",
            cond_channels=c_dim if layer_cond else 0, leaky_slope=slope))
        self.decoder_short = WaveNetBlock(BlockConfig.from_stack(
            cfg.short_decoder, cfg.n_mels, cfg.n_mels, None, cond_channels=long_out + c_dim,
            cond_injection=cfg.cond_injection, leaky_slope=slope))
        self.speaker_embedding = nn.Embedding(cfg.n_speakers, cfg.speaker_dim)

        self.register_buffer("mel_mean", torch.zeros(cfg.n_mels))
        self.register_buffer("mel_std", torch.ones(cfg.n_mels))
        self.register_buffer("log_f0_range", torch.tensor([math.log(80.0), math.log(1000.0)]))
        self.reset_parameters(seed)

    # parameters ---------------------------------------------------------

    def reset_parameters(self, seed: int) -> "TimbreModel":
        seeds = np.random.SeedSequence(seed).generate_state(5)
        for block, s in zip(self.blocks(all_slots=True), seeds[:4]):
            if block is not None:
                block.reset_parameters(int(s))
        self.reset_speaker_rows(range(self.config.n_speakers), int(seeds[4]))
        return self

    def reset_speaker_rows(self, rows: Iterable[int], seed: int) -> None:
        gen = torch.Generator().manual_seed(seed)
        bound = math.sqrt(3.0)
        with torch.no_grad():
            for row in rows:
                if not 0 <= row < self.config.n_speakers:
                    raise ValueError(f"speaker row {row} outside a {self.config.n_speakers}-row table")
                fresh = torch.rand(self.config.speaker_dim, generator=gen, dtype=torch.float64) * 2 * bound - bound
                self.speaker_embedding.weight[row] = fresh.to(self.speaker_embedding.weight.dtype)

    def reset_decoders(self, seed: int) -> None:
        """Fresh D_1, D_2 and speaker table; encoders and feature statistics are kept."""
        seeds = np.random.SeedSequence([seed, 1]).generate_state(3)
        self.decoder_long.reset_parameters(int(seeds[0]))
        self.decoder_short.reset_parameters(int(seeds[1]))
        self.reset_speaker_rows(range(self.config.n_speakers), int(seeds[2]))

    def blocks(self, all_slots: bool = False):
        slots = [self.encoder_acoustic, self.encoder_linguistic, self.decoder_long, self.decoder_short]
        return slots if all_slots else [b for b in slots if b is not None]

    def encoder_modules(self):
        return [m for m in (self.encoder_acoustic, self.encoder_linguistic) if m is not None]

    def decoder_modules(self):
        return [self.decoder_long, self.decoder_short, self.speaker_embedding]

    def set_encoders_trainable(self, trainable: bool) -> None:
        for module in self.encoder_modules():
            module.requires_grad_(trainable)

    # feature statistics -------------------------------------------------

    def set_feature_stats(self, stats: FeatureStats) -> None:
        with torch.no_grad():
            self.mel_mean.copy_(torch.as_tensor(stats.mel_mean, dtype=self.mel_mean.dtype))
            self.mel_std.copy_(torch.as_tensor(stats.mel_std, dtype=self.mel_std.dtype))
            self.log_f0_range.copy_(torch.tensor([stats.f0.log_f0_min, stats.f0.log_f0_max],
                                                 dtype=self.log_f0_range.dtype))

    def f0_stats(self) -> F0Stats:
        lo, hi = self.log_f0_range.tolist()
        return F0Stats(lo, hi)

    def normalize_mel(self, mel: torch.Tensor) -> torch.Tensor:
        return (mel - self.mel_mean) / self.mel_std

    def denormalize_mel(self, x: torch.Tensor) -> torch.Tensor:
        return x * self.mel_std + self.mel_mean

    # forward pieces -----------------------------------------------------

    def control(self, f0_features: torch.Tensor, speaker_ids: torch.Tensor) -> torch.Tensor:
        """[B, T, 2] normalised F0 + [B] speaker ids -> control track [B, T, 2 + speaker_dim]."""
        if f0_features.shape[-1] != 2:
            raise ShapeError(f"F0 features need 2 channels, got {f0_features.shape[-1]}")
        spk = self.speaker_embedding(speaker_ids).to(f0_features.dtype)
        spk = spk[:, None, :].expand(-1, f0_features.shape[1], -1)
        return torch.cat([f0_features, spk], dim=-1)

    def encode_acoustic(self, x: torch.Tensor) -> torch.Tensor:
        if self.encoder_acoustic is None:
            raise RuntimeError("this model has no acoustic encoder")
        if x.shape[1] < 1:
            raise ShapeError("need at least one frame")
        if x.shape[-1] != self.config.n_mels:
            raise ShapeError(f"model expects {self.config.n_mels} mel bands, got {x.shape[-1]}")
        return self.encoder_acoustic(x)

    def encode_linguistic(self, phone_ids: torch.Tensor) -> torch.Tensor:
        if phone_ids.shape[1] < 1:
            raise ShapeError("need at least one frame")
        if phone_ids.max() >= self.config.n_phones or phone_ids.min() < 0:
            raise ShapeError(f"phone id outside a {self.config.n_phones}-symbol inventory")
        dtype = self.encoder_linguistic.input_proj.weight.dtype
        return self.encoder_linguistic(F.one_hot(phone_ids, self.config.n_phones).to(dtype))

    def long_scope(self, e: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        """D_2 conditioning: [D_1([e, c]), c]."""
        if e.shape[:2] != c.shape[:2]:
            raise ShapeError(f"embedding {tuple(e.shape)} and control {tuple(c.shape)} are not frame-aligned")
        d1 = self.decoder_long(torch.cat([e, c], dim=-1), c)
        return torch.cat([d1, c], dim=-1)

    def decode_teacher_forced(self, e: torch.Tensor, c: torch.Tensor, x_target: torch.Tensor,
                              noise: NoiseSpec, generator: Optional[torch.Generator] = None) -> torch.Tensor:
        if x_target.shape[:2] != e.shape[:2]:
            raise ShapeError(f"target {tuple(x_target.shape)} and embedding {tuple(e.shape)} are not frame-aligned")
        if noise.sigma1 > 0:
            e = e + _gaussian(e, noise.sigma1, generator)
        cond = self.long_scope(e, c)
        history = F.pad(x_target[:, :-1], (0, 0, 1, 0))
        if noise.sigma2 > 0:
            history = history + _gaussian(history, noise.sigma2, generator)
        return self.decoder_short(history, cond)

    @torch.no_grad()
    def generate(self, cond: torch.Tensor, teacher: Optional[torch.Tensor] = None) -> torch.Tensor:
        """Step D_2 frame by frame on its own output (or on `teacher` frames if given)."""
        B, T, _ = cond.shape
        state = fresh_state(self.decoder_short, B, dtype=cond.dtype, device=cond.device)
        prev = torch.zeros(B, self.config.n_mels, dtype=cond.dtype, device=cond.device)
        frames = []
        for t in range(T):
            y, state = block_forward_incremental(self.decoder_short, state, prev, cond[:, t])
            frames.append(y)
            prev = teacher[:, t] if teacher is not None else y
        return torch.stack(frames, dim=1)

    @torch.no_grad()
    def infer_autoregressive(self, phone_ids: torch.Tensor, c: torch.Tensor,
                             teacher: Optional[torch.Tensor] = None) -> torch.Tensor:
        e = self.encode_linguistic(phone_ids)
        return self.generate(self.long_scope(e, c), teacher)

    @torch.no_grad()
    def infer_voice_conversion(self, x_source: torch.Tensor, c_target: torch.Tensor) -> torch.Tensor:
        e = self.encode_acoustic(x_source)
        return self.generate(self.long_scope(e, c_target))
