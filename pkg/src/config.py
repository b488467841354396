"""
config.py

Experiment configuration. Defaults are the full-size system settings;
a JSON file, TIMBRE_* environment variables (read through python-dotenv) and
CLI flags override them in that order.
"""

import hashlib
import json
import logging
import os
from pathlib import Path
from typing import List, Literal, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, model_validator

logger = logging.getLogger(__name__)

DEFAULT_PHONES = ["sil", "a", "e", "i", "o", "u", "@", "s", "sh", "f", "th", "h"]


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class MelConfig(_Frozen):
    sample_rate: int = 32000
    n_mels: int = Field(100, ge=1)
    f_min: float = Field(10.0, ge=0.0)
    f_max: float = 15200.0
    hop_ms: float = Field(5.0, gt=0.0)
    win_ms: float = Field(45.0, gt=0.0)
    log_floor: float = Field(1e-5, gt=0.0)

    @model_validator(mode="after")
    def _check_band_edges(self):
        if self.f_min >= self.f_max:
            raise ValueError(f"f_min ({self.f_min}) must be below f_max ({self.f_max})")
        if self.sample_rate <= 2 * self.f_max:
            raise ValueError(
                f"sample_rate {self.sample_rate} Hz must exceed 2 x f_max ({2 * self.f_max:g} Hz)")
        return self

    @property
    def hop_length(self) -> int:
        return int(round(self.sample_rate * self.hop_ms / 1000.0))

    @property
    def win_length(self) -> int:
        return int(round(self.sample_rate * self.win_ms / 1000.0))

    @property
    def n_fft(self) -> int:
        return 1 << (self.win_length - 1).bit_length()

    def frames_for(self, n_samples: int) -> int:
        return n_samples // self.hop_length + 1

    def seconds_to_frames(self, seconds: float) -> int:
        return int(round(seconds * 1000.0 / self.hop_ms))


class CorpusConfig(_Frozen):
    phones: List[str] = Field(default_factory=lambda: list(DEFAULT_PHONES))
    n_singers: int = Field(4, ge=1)
    songs_per_singer: int = Field(10, ge=1)
    validation_songs: int = Field(1, ge=0)
    song_seconds: float = Field(15.0, gt=0.0)
    target_songs: int = Field(14, ge=2)
    clone_seconds: float = Field(180.0, gt=0.0)
    seed: int = 1234
    n_jobs: int = 1

    @model_validator(mode="after")
    def _check_phones(self):
        if len(set(self.phones)) != len(self.phones):
            raise ValueError("phone symbols must be unique")
        if "sil" not in self.phones:
            raise ValueError("phone inventory must contain 'sil'")
        if len(self.phones) < 2:
            raise ValueError("phone inventory needs at least two symbols")
        return self


class StackConfig(_Frozen):
    """Hyper-parameters of one dilated convolution stack."""

    n_layers: int = Field(ge=1)
    kernel_size: int = Field(ge=2)
    dilations: List[int]
    residual_channels: int = Field(ge=1)
    skip_channels: int = Field(ge=1)
    hidden_channels: int = Field(ge=1)
    causal: bool = False

    @model_validator(mode="after")
    def _check_dilations(self):
        if len(self.dilations) != self.n_layers:
            raise ValueError(f"{self.n_layers} layers but {len(self.dilations)} dilations")
        if any(d < 1 for d in self.dilations):
            raise ValueError(f"dilations must be >= 1, got {self.dilations}")
        if not self.causal and self.kernel_size % 2 == 0:
            raise ValueError("non-causal stacks need an odd kernel for centred padding")
        return self

    def scaled(self, factor: float) -> "StackConfig":
        def _s(c):
            return max(2, int(round(c * factor)))
        return self.model_copy(update={
            "residual_channels": _s(self.residual_channels),
            "skip_channels": _s(self.skip_channels),
            "hidden_channels": _s(self.hidden_channels),
        })


ENCODER_STACK = StackConfig(
    n_layers=9, kernel_size=3, dilations=[1, 2, 4, 1, 2, 4, 1, 2, 4],
    residual_channels=70, skip_channels=70, hidden_channels=120)
LONG_DECODER_STACK = StackConfig(
    n_layers=10, kernel_size=3, dilations=[1, 2, 4, 1, 2, 4, 1, 2, 4, 1],
    residual_channels=70, skip_channels=70, hidden_channels=120)
SHORT_DECODER_STACK = StackConfig(
    n_layers=8, kernel_size=2, dilations=[1, 2, 4, 8, 16, 1, 2, 4],
    residual_channels=200, skip_channels=200, hidden_channels=200, causal=True)


class ModelConfig(_Frozen):
    n_mels: int = 100
    n_phones: int = 12
    n_speakers: int = Field(8, ge=1)
    speaker_dim: int = Field(16, ge=1)
    embed_dim: int = Field(120, ge=1)
    encoder: StackConfig = ENCODER_STACK
    long_decoder: StackConfig = LONG_DECODER_STACK
    short_decoder: StackConfig = SHORT_DECODER_STACK
    cond_injection: Literal["layer", "input"] = "layer"
    use_acoustic_encoder: bool = True
    leaky_slope: float = 0.2

    @model_validator(mode="after")
    def _check_stacks(self):
        if not self.short_decoder.causal:
            raise ValueError("the short-scope decoder must be causal")
        if self.encoder.causal or self.long_decoder.causal:
            raise ValueError("encoders and the long-scope decoder are non-causal")
        return self

    @property
    def control_dim(self) -> int:
        # 2 F0 channels + speaker embedding
        return 2 + self.speaker_dim

    def scaled(self, factor: float) -> "ModelConfig":
        return self.model_copy(update={
            "embed_dim": max(2, int(round(self.embed_dim * factor))),
            "encoder": self.encoder.scaled(factor),
            "long_decoder": self.long_decoder.scaled(factor),
            "short_decoder": self.short_decoder.scaled(factor),
        })


class NoiseSpec(_Frozen):
    sigma1: float = Field(0.3, ge=0.0)
    sigma2: float = Field(0.2, ge=0.0)
    switch_p: float = Field(0.5, ge=0.0, le=1.0)

    @classmethod
    def off(cls, switch_p: float = 0.5) -> "NoiseSpec":
        return cls(sigma1=0.0, sigma2=0.0, switch_p=switch_p)


class TrainConfig(_Frozen):
    batch_size: int = Field(12, ge=1)
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    base_lr: float = Field(5e-4, gt=0.0)
    warmup_steps: int = Field(700, ge=1)
    decay_factor: float = Field(0.15, gt=0.0)
    decay_steps: int = Field(10000, ge=1)
    lambda_recon: float = Field(1.0, ge=0.0)
    lambda_enc: float = Field(0.2, ge=0.0)
    noise: NoiseSpec = NoiseSpec()
    max_steps: int = Field(20000, ge=0)
    adapt_steps: int = Field(10000, ge=0)
    clone_steps: int = Field(3000, ge=0)
    valid_seconds: float = Field(1.5, gt=0.0)
    augment: bool = True
    transpose_semitones: float = Field(4.0, ge=0.0)
    grad_clip_norm: float = Field(5.0, gt=0.0)
    log_every: int = Field(50, ge=1)
    checkpoint_every: int = Field(1000, ge=1)
    from_scratch: bool = False
    seed: int = 0


class EvalConfig(_Frozen):
    probe_frame_stride: int = Field(2, ge=1)
    probe_max_frames: int = Field(20000, ge=10)
    invariance_semitones: float = 2.0
    griffin_lim_iters: int = Field(32, ge=1)
    n_jobs: int = 1


class ExperimentConfig(_Frozen):
    mel: MelConfig = MelConfig()
    corpus: CorpusConfig = CorpusConfig()
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()
    eval: EvalConfig = EvalConfig()

    @model_validator(mode="after")
    def _check_dims(self):
        if self.model.n_mels != self.mel.n_mels:
            raise ValueError(f"model expects {self.model.n_mels} bands, features have {self.mel.n_mels}")
        if self.model.n_phones != len(self.corpus.phones):
            raise ValueError(
                f"model expects {self.model.n_phones} phones, inventory has {len(self.corpus.phones)}")
        if self.model.n_speakers <= self.corpus.n_singers:
            raise ValueError("speaker table needs a spare row for the target singer")
        return self


def config_fingerprint(cfg: BaseModel) -> str:
    blob = json.dumps(cfg.model_dump(mode="json"), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def _deep_update(base: dict, patch: dict) -> dict:
    out = dict(base)
    for key, value in patch.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_update(out[key], value)
        else:
            out[key] = value
    return out


def env_overrides() -> dict:
    """Collect TIMBRE_* overrides from the environment (and a .env file if present)."""
    load_dotenv()
    patch: dict = {}
    seed = os.getenv("TIMBRE_SEED")
    if seed is not None:
        patch.setdefault("train", {})["seed"] = int(seed)
        patch.setdefault("corpus", {})["seed"] = int(seed)
    n_jobs = os.getenv("TIMBRE_N_JOBS")
    if n_jobs is not None:
        patch.setdefault("corpus", {})["n_jobs"] = int(n_jobs)
        patch.setdefault("eval", {})["n_jobs"] = int(n_jobs)
    return patch


def load_config(path: Optional[Path] = None, overrides: Optional[dict] = None,
                use_env: bool = True) -> ExperimentConfig:
    data: dict = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"Config file not found: {path}")
        with open(path) as f:
            data = json.load(f)
        logger.info(f"Loaded config from {path}")
    if use_env:
        data = _deep_update(data, env_overrides())
    if overrides:
        data = _deep_update(data, overrides)
    return ExperimentConfig.model_validate(data)


def save_config(cfg: BaseModel, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(cfg.model_dump(mode="json"), f, indent=2)
