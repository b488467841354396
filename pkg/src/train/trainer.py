"""
trainer.py

Optimisation loop for the three training phases:

    supervised        E_A, E_L, D_1, D_2 and the speaker table jointly on
                      labelled multi-singer data, full loss
    adapt / clone     encoders frozen, acoustic path only (k = 1), L_recon
                      only, D_1 / D_2 warm-started, fresh speaker row(s)
    clone-supervised  fine-tune everything on labelled target data

Batches, augmentation factors, the switch and both noise draws are seeded
from (seed, step), so resuming from a checkpoint replays the same trajectory.
"""

import json
import logging
import time
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
import torch
from torch import nn

from src.config import ExperimentConfig, TrainConfig
from src.corpus.dataset import corpus_fingerprint
from src.corpus.segments import SegmentBatch, segment_iterator, system_context
from src.corpus.synth import Utterance
from src.dsp.audio import AudioClip
from src.dsp.augment import sample_transpose_factor, transpose_augment
from src.errors import CorpusError, FrozenParameterError, TrainingDivergedError
from src.model.inputs import control_track, mel_input
from src.model.losses import LossTerms, loss_terms
from src.model.timbre import TimbreModel, fit_feature_stats
from src.train.checkpoint import Checkpoint, capture, restore_model, restore_optimizer, save_checkpoint
from src.train.schedule import lr_schedule, set_learning_rate

logger = logging.getLogger(__name__)

AUGMENT_STREAM = 1
NOISE_STREAM = 2
SPEAKER_STREAM = 3
LOG_COLUMNS = ["step", "phase", "lr", "L", "L_recon", "L_enc", "wall_time"]


def derived_seed(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def build_optimizer(module: nn.Module, config: TrainConfig) -> torch.optim.Adam:
    params = [p for p in module.parameters() if p.requires_grad]
    return torch.optim.Adam(params, lr=0.0, betas=(config.adam_beta1, config.adam_beta2), eps=config.adam_eps)


class Trainer:
    """Owns the model parameters and the optimiser for one training phase."""

    def __init__(self, model: TimbreModel, config: ExperimentConfig, phase: str = "supervised", *,
                 use_labels: bool = True, freeze_encoders: bool = False, lambda_enc: Optional[float] = None,
                 out_dir=None, corpus_fingerprint: str = "", singers: Sequence[int] = (), step: int = 0):
        self.model = model
        self.config = config
        self.tc = config.train
        self.phase = phase
        self.use_labels = use_labels
        self.freeze_encoders = freeze_encoders
        self.lambda_enc = self.tc.lambda_enc if lambda_enc is None else lambda_enc
        self.corpus_fingerprint = corpus_fingerprint
        self.singers = sorted(set(int(s) for s in singers))
        self.step = step
        self.history: List[dict] = []

        model.set_encoders_trainable(not freeze_encoders)
        self._frozen = self._encoder_bytes() if freeze_encoders else None
        self.optimizer = build_optimizer(model, self.tc)
        self.context = system_context(model.config)
        self.valid_frames = config.mel.seconds_to_frames(self.tc.valid_seconds)

        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.log_path = None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            self.log_path = self.out_dir / f"train_{phase}.jsonl"
        self._t0 = time.time()

    # freeze contract ------------------------------------------------------

    def _encoder_bytes(self) -> dict:
        return {f"{i}.{n}": p.detach().cpu().numpy().tobytes()
                for i, m in enumerate(self.model.encoder_modules()) for n, p in m.named_parameters()}

    def _check_frozen_grads(self) -> None:
        if not self.freeze_encoders:
            return
        for module in self.model.encoder_modules():
            for name, p in module.named_parameters():
                if p.requires_grad or (p.grad is not None and bool(p.grad.ne(0).any())):
                    raise FrozenParameterError(f"gradient reached frozen encoder parameter '{name}'")

    def verify_frozen(self) -> None:
        if self._frozen is not None and self._encoder_bytes() != self._frozen:
            raise FrozenParameterError("frozen encoder weights changed during training")

    # batches --------------------------------------------------------------

    def prepare_batch(self, batch: SegmentBatch, step: int):
        """Segment batch -> (acoustic input, target, phone ids, control, mask) tensors."""
        model, mel_cfg = self.model, self.config.mel
        x_target = mel_input(model, batch.mel)
        x_in = None
        if model.encoder_acoustic is not None:
            if self.tc.augment:
                rng = np.random.default_rng(np.random.SeedSequence([self.tc.seed, step, AUGMENT_STREAM]))
                mels = []
                for audio in batch.audio:
                    factor = sample_transpose_factor(rng, self.tc.transpose_semitones)
                    clip = AudioClip(audio, mel_cfg.sample_rate)
                    mels.append(transpose_augment(clip, batch.n_frames, factor, mel_cfg).values)
                x_in = mel_input(model, np.stack(mels))
            else:
                x_in = x_target
        phones = torch.as_tensor(batch.phone_ids, dtype=torch.long) if self.use_labels else None
        control = control_track(model, batch.f0_hz, batch.singer_ids)
        mask = torch.as_tensor(batch.mask, dtype=x_target.dtype)
        return x_in, x_target, phones, control, mask

    # optimisation ---------------------------------------------------------

    def train_step(self, batch: SegmentBatch) -> dict:
        step = self.step
        lr = lr_schedule(step + 1, self.tc)
        set_learning_rate(self.optimizer, lr)
        x_in, x_target, phones, control, mask = self.prepare_batch(batch, step)
        generator = torch.Generator().manual_seed(derived_seed(self.tc.seed, step, NOISE_STREAM))

        self.model.train()
        terms: LossTerms = loss_terms(self.model, x_in, x_target, phones, control, mask, self.tc.noise,
                                      generator, lambda_recon=self.tc.lambda_recon, lambda_enc=self.lambda_enc)
        if not bool(torch.isfinite(terms.total)):
            path = self.save(tag="diverged") if self.out_dir is not None else None
            logger.error(f"[{self.phase}] non-finite loss at step {step}")
            raise TrainingDivergedError(f"loss became non-finite at step {step}", checkpoint_path=path)

        self.optimizer.zero_grad(set_to_none=True)
        terms.total.backward()
        self._check_frozen_grads()
        params = [p for g in self.optimizer.param_groups for p in g["params"]]
        torch.nn.utils.clip_grad_norm_(params, self.tc.grad_clip_norm)
        self.optimizer.step()
        self.step += 1

        record = {"step": self.step, "phase": self.phase, "lr": lr, **terms.as_floats(),
                  "wall_time": time.time() - self._t0}
        self.history.append(record)
        if self.log_path is not None:
            with open(self.log_path, "a") as f:
                f.write(json.dumps(record) + "\n")
        return record

    def fit(self, dataset: Sequence[Utterance], n_steps: int) -> Checkpoint:
        """Run n_steps updates from the current step and return the final checkpoint."""
        if n_steps > 0:
            end = self.step + n_steps
            logger.info(f"[{self.phase}] steps {self.step} -> {end}, segments of {self.valid_frames} valid "
                        f"+ 2 x {self.context} context frames")
            batches = segment_iterator(dataset, self.tc.batch_size, self.context, self.tc.seed,
                                       valid_frames=self.valid_frames, hop_length=self.config.mel.hop_length,
                                       with_labels=self.use_labels, start_batch=self.step, n_batches=n_steps)
            for batch in batches:
                rec = self.train_step(batch)
                if self.step % self.tc.log_every == 0 or self.step == end:
                    logger.info(f"[{self.phase}] step {rec['step']} | lr={rec['lr']:.2e} L={rec['L']:.4f} "
                                f"L_recon={rec['L_recon']:.4f} L_enc={rec['L_enc']:.4f}")
                if self.out_dir is not None and self.step % self.tc.checkpoint_every == 0 and self.step < end:
                    self.save()
        self.verify_frozen()
        if self.out_dir is not None:
            self.save()
        return self.checkpoint()

    def checkpoint(self) -> Checkpoint:
        return capture(self.model, self.tc, step=self.step, phase=self.phase, optimizer=self.optimizer,
                       corpus_fingerprint=self.corpus_fingerprint, singers=self.singers)

    def save(self, tag: Optional[str] = None) -> Path:
        name = f"{self.phase}_{tag}.ckpt" if tag else f"{self.phase}.ckpt"
        return save_checkpoint(self.checkpoint(), self.out_dir / name)


def _singer_set(utterances: Sequence[Utterance]) -> List[int]:
    return sorted({u.singer_id for u in utterances})


def train_supervised(utterances: Sequence[Utterance], config: ExperimentConfig, *, steps: Optional[int] = None,
                     out_dir=None, resume: Optional[Checkpoint] = None) -> Checkpoint:
    """Phase A. `steps` is the total step budget; a resumed run does the remainder."""
    if not utterances:
        raise CorpusError("supervised training needs a non-empty labelled corpus")
    if resume is not None:
        model = restore_model(resume)
        start = resume.step
    else:
        model = TimbreModel(config.model, seed=config.train.seed)
        model.set_feature_stats(fit_feature_stats(utterances))
        start = 0
    trainer = Trainer(model, config, "supervised", use_labels=True, out_dir=out_dir,
                      corpus_fingerprint=corpus_fingerprint(utterances), singers=_singer_set(utterances),
                      step=start)
    if resume is not None:
        restore_optimizer(resume, model, trainer.optimizer)
    total = config.train.max_steps if steps is None else steps
    return trainer.fit(utterances, max(0, total - start))


def _fine_tune(ckpt: Checkpoint, utterances: Sequence[Utterance], config: ExperimentConfig, phase: str,
               steps: int, supervised: bool, out_dir) -> Checkpoint:
    if not utterances:
        raise CorpusError(f"{phase} needs a non-empty target corpus")
    model = restore_model(ckpt)
    seed = config.train.seed
    if config.train.from_scratch:
        model.reset_decoders(derived_seed(seed, SPEAKER_STREAM, 0))
    singers = _singer_set(utterances)
    fresh = [s for s in singers if s not in ckpt.singers]
    if any(s >= model.config.n_speakers for s in fresh):
        raise ValueError(f"singer ids {fresh} do not fit a {model.config.n_speakers}-row speaker table")
    if fresh:
        logger.info(f"[{phase}] fresh speaker row(s) {fresh}")
        model.reset_speaker_rows(fresh, derived_seed(seed, SPEAKER_STREAM, *fresh))

    if supervised:
        data = list(utterances)
        trainer = Trainer(model, config, phase, use_labels=True, out_dir=out_dir,
                          corpus_fingerprint=corpus_fingerprint(data), singers=sorted(set(ckpt.singers) | set(singers)))
    else:
        if model.encoder_acoustic is None:
            raise ValueError("audio-only adaptation needs a model with an acoustic encoder")
        data = [u.without_labels() for u in utterances]
        trainer = Trainer(model, config, phase, use_labels=False, freeze_encoders=True, lambda_enc=0.0,
                          out_dir=out_dir, corpus_fingerprint=corpus_fingerprint(data),
                          singers=sorted(set(ckpt.singers) | set(singers)))
    return trainer.fit(data, steps)


def adapt_decoder(ckpt: Checkpoint, utterances: Sequence[Utterance], config: ExperimentConfig, *,
                  steps: Optional[int] = None, out_dir=None) -> Checkpoint:
    """Phase B: retrain the decoder on audio only; any labels are dropped."""
    steps = config.train.adapt_steps if steps is None else steps
    return _fine_tune(ckpt, utterances, config, "adapt", steps, supervised=False, out_dir=out_dir)


def clone(ckpt: Checkpoint, utterances: Sequence[Utterance], config: ExperimentConfig, supervised: bool = False,
          *, steps: Optional[int] = None, out_dir=None) -> Checkpoint:
    steps = config.train.clone_steps if steps is None else steps
    phase = "clone-supervised" if supervised else "clone"
    return _fine_tune(ckpt, utterances, config, phase, steps, supervised=supervised, out_dir=out_dir)


def load_training_log(path) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Training log not found: {path}")
    if path.stat().st_size == 0:
        return pd.DataFrame(columns=LOG_COLUMNS)
    return pd.read_json(path, lines=True)
