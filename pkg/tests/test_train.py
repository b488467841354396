import math

import numpy as np
import pytest
import torch
from torch import nn

from src.config import ModelConfig, NoiseSpec, TrainConfig
from src.corpus.container import save_features
from src.corpus.dataset import build_protocol_corpora
from src.errors import ContainerError, FingerprintError, TrainingDivergedError
from src.model.inputs import utterance_inputs
from src.model.losses import LossTerms
from src.model.timbre import TimbreModel, fit_feature_stats
from src.train import trainer as trainer_module
from src.train.checkpoint import capture, load_checkpoint, restore_model, save_checkpoint
from src.train.schedule import lr_schedule, set_learning_rate
from src.train.trainer import (LOG_COLUMNS, Trainer, adapt_decoder, build_optimizer, clone, load_training_log,
                               train_supervised)


@pytest.fixture
def corpora(toy_config):
    return build_protocol_corpora(toy_config)


@pytest.fixture
def phase_a(corpora, toy_config):
    return train_supervised(corpora.multi.train, toy_config, steps=2)


def _encoder_state(ckpt):
    return {k: v for k, v in ckpt.model_state.items() if k.startswith("encoder_")}


class TestSchedule:

    cfg = TrainConfig()

    @pytest.mark.parametrize("step, expected", [
        (0, 0.0),
        (350, 2.5e-4),
        (700, 5e-4),
        (10700, 5e-4 * 0.15),
        (20700, 5e-4 * 0.15 ** 2),
        (5700, 5e-4 * math.sqrt(0.15)),
    ])
    def test_values(self, step, expected):
        assert lr_schedule(step, self.cfg) == pytest.approx(expected, rel=0, abs=1e-12)

    def test_continuous_at_warmup(self):
        assert abs(lr_schedule(701, self.cfg) - lr_schedule(699, self.cfg)) < 2e-6

    def test_shape(self):
        lrs = np.array([lr_schedule(s, self.cfg) for s in range(0, 3000)])
        assert np.all(np.diff(lrs[:701]) > 0)
        assert np.all(np.diff(lrs[700:]) < 0)

    def test_negative_step(self):
        with pytest.raises(ValueError):
            lr_schedule(-1, self.cfg)


class _Scalar(nn.Module):

    def __init__(self):
        super().__init__()
        self.theta = nn.Parameter(torch.tensor([1.5], dtype=torch.float64))


def test_adam_matches_reference_update():
    cfg = TrainConfig(warmup_steps=10, decay_steps=50)
    module = _Scalar()
    opt = build_optimizer(module, cfg)
    theta, m, v = 1.5, 0.0, 0.0
    b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
    for t in range(1, 101):
        lr = lr_schedule(t, cfg)
        set_learning_rate(opt, lr)
        opt.zero_grad()
        loss = (module.theta - 0.3) ** 2
        loss.sum().backward()
        opt.step()

        g = 2 * (theta - 0.3)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
        assert float(module.theta) == pytest.approx(theta, rel=0, abs=1e-12)


class TestCheckpoint:

    def test_round_trip(self, tmp_path, micro_model_config):
        model = TimbreModel(micro_model_config, seed=3)
        ckpt = capture(model, TrainConfig(), step=7, phase="adapt", singers=[2, 0, 2])
        back = load_checkpoint(save_checkpoint(ckpt, tmp_path / "m.ckpt"), micro_model_config)
        assert (back.step, back.phase, back.singers) == (7, "adapt", [0, 2])
        assert back.model_config == micro_model_config
        restored = restore_model(back)
        for (name, a), b in zip(model.state_dict().items(), restored.state_dict().values()):
            assert torch.equal(a, b), name

    def test_other_architecture_refused(self, tmp_path, micro_model_config):
        ckpt = capture(TimbreModel(micro_model_config), TrainConfig())
        path = save_checkpoint(ckpt, tmp_path / "m.ckpt")
        with pytest.raises(FingerprintError):
            load_checkpoint(path, micro_model_config.model_copy(update={"embed_dim": 6}))

    def test_features_are_not_a_checkpoint(self, tmp_path, mel_config):
        path = save_features([], tmp_path / "f.feat", mel_config)
        with pytest.raises(ContainerError):
            load_checkpoint(path)

    def test_adam_moments_survive(self, tmp_path, corpora, toy_config):
        ckpt = train_supervised(corpora.multi.train, toy_config, steps=1, out_dir=tmp_path)
        back = load_checkpoint(tmp_path / "supervised.ckpt", toy_config.model)
        assert back.optimizer_state.keys() == ckpt.optimizer_state.keys()
        name = next(iter(back.optimizer_state))
        assert float(back.optimizer_state[name]["step"]) == 1.0


class TestSupervised:

    def test_same_seed_same_weights(self, corpora, toy_config):
        a = train_supervised(corpora.multi.train, toy_config, steps=2)
        b = train_supervised(corpora.multi.train, toy_config, steps=2)
        for name, value in a.model_state.items():
            np.testing.assert_array_equal(value, b.model_state[name], err_msg=name)

    def test_resume_replays_trajectory(self, tmp_path, corpora, toy_config):
        straight = train_supervised(corpora.multi.train, toy_config, steps=4)
        train_supervised(corpora.multi.train, toy_config, steps=2, out_dir=tmp_path)
        resume = load_checkpoint(tmp_path / "supervised.ckpt", toy_config.model)
        assert resume.step == 2
        resumed = train_supervised(corpora.multi.train, toy_config, steps=4, resume=resume)
        assert resumed.step == 4
        for name, value in straight.model_state.items():
            np.testing.assert_allclose(resumed.model_state[name], value, rtol=0, atol=1e-6, err_msg=name)

    def test_training_log(self, tmp_path, corpora, toy_config):
        train_supervised(corpora.multi.train, toy_config, steps=3, out_dir=tmp_path)
        log = load_training_log(tmp_path / "train_supervised.jsonl")
        assert list(log["step"]) == [1, 2, 3]
        assert set(LOG_COLUMNS) <= set(log.columns)
        assert (log["lr"] > 0).all()
        assert np.isfinite(log["L"]).all()

    def test_empty_and_missing_log(self, tmp_path):
        (tmp_path / "empty.jsonl").write_text("")
        assert list(load_training_log(tmp_path / "empty.jsonl").columns) == LOG_COLUMNS
        with pytest.raises(FileNotFoundError):
            load_training_log(tmp_path / "missing.jsonl")

    def test_divergence_saves_and_raises(self, tmp_path, corpora, toy_config, monkeypatch):
        def nan_loss(*args, **kwargs):
            nan = torch.tensor(float("nan"))
            return LossTerms(total=nan, recon=nan, enc=nan, k=torch.ones(1))

        monkeypatch.setattr(trainer_module, "loss_terms", nan_loss)
        with pytest.raises(TrainingDivergedError) as info:
            train_supervised(corpora.multi.train, toy_config, steps=2, out_dir=tmp_path)
        assert info.value.checkpoint_path.name == "supervised_diverged.ckpt"
        assert load_checkpoint(info.value.checkpoint_path).step == 0


class TestAdaptation:

    def test_encoders_untouched(self, corpora, toy_config, phase_a):
        adapted = adapt_decoder(phase_a, corpora.target.train, toy_config, steps=2)
        assert adapted.phase == "adapt" and adapted.step == 2
        for name, value in _encoder_state(phase_a).items():
            assert adapted.model_state[name].tobytes() == value.tobytes(), name
        assert not np.array_equal(adapted.model_state["decoder_short.out_final.weight"],
                                  phase_a.model_state["decoder_short.out_final.weight"])

    def test_target_gets_its_own_speaker_row(self, corpora, toy_config, phase_a):
        target = corpora.target_singer
        assert target not in phase_a.singers
        adapted = adapt_decoder(phase_a, corpora.target.train, toy_config, steps=1)
        assert target in adapted.singers
        table_a = phase_a.model_state["speaker_embedding.weight"]
        table_b = adapted.model_state["speaker_embedding.weight"]
        assert not np.array_equal(table_a[target], table_b[target])

    def test_frozen_encoders_get_no_gradient(self, corpora, toy_config, phase_a):
        model = restore_model(phase_a)
        data = [u.without_labels() for u in corpora.target.train]
        trainer = Trainer(model, toy_config, "adapt", use_labels=False, freeze_encoders=True, lambda_enc=0.0)
        trainer.fit(data, 1)
        for module in model.encoder_modules():
            assert all(p.grad is None for p in module.parameters())

    def test_audio_only_clone_never_reads_labels(self, corpora, toy_config, phase_a, monkeypatch):
        def no_labels(self, phone_ids):
            raise AssertionError("linguistic encoder called during audio-only cloning")

        monkeypatch.setattr(TimbreModel, "encode_linguistic", no_labels)
        cloned = clone(phase_a, corpora.clone, toy_config, supervised=False, steps=2)
        assert cloned.phase == "clone"

    def test_supervised_clone_fine_tunes_everything(self, corpora, toy_config, phase_a):
        cloned = clone(phase_a, corpora.clone, toy_config, supervised=True, steps=1)
        assert cloned.phase == "clone-supervised"
        changed = [n for n, v in _encoder_state(phase_a).items() if not np.array_equal(cloned.model_state[n], v)]
        assert changed

    def test_from_scratch_resets_decoder(self, corpora, toy_config, phase_a):
        cfg = toy_config.model_copy(update={"train": toy_config.train.model_copy(update={"from_scratch": True})})
        adapted = adapt_decoder(phase_a, corpora.target.train, cfg, steps=0)
        assert not np.array_equal(adapted.model_state["decoder_long.out_final.weight"],
                                  phase_a.model_state["decoder_long.out_final.weight"])
        for name, value in _encoder_state(phase_a).items():
            np.testing.assert_array_equal(adapted.model_state[name], value)

    def test_audio_adaptation_needs_acoustic_encoder(self, corpora, toy_config):
        sup = toy_config.model_copy(update={"model": toy_config.model.model_copy(
            update={"use_acoustic_encoder": False})})
        ckpt = train_supervised(corpora.multi.train, sup, steps=1)
        with pytest.raises(ValueError):
            adapt_decoder(ckpt, corpora.target.train, sup, steps=1)


def _overfit_run(cfg, utt, steps):
    model = TimbreModel(cfg.model, seed=cfg.train.seed)
    model.set_feature_stats(fit_feature_stats([utt]))
    trainer = Trainer(model, cfg, "supervised")
    trainer.fit([utt], steps)
    return trainer


def _acoustic_recon_error(ckpt, utterances):
    """Teacher-forced L_recon through the acoustic path, noise off."""
    model = restore_model(ckpt).eval()
    errors = []
    with torch.no_grad():
        for utt in utterances:
            inputs = utterance_inputs(model, utt, use_labels=False)
            out = model.decode_teacher_forced(model.encode_acoustic(inputs.x), inputs.control, inputs.x,
                                              NoiseSpec.off())
            errors.append(float(((out - inputs.x) ** 2).mean()))
    return float(np.mean(errors))


@pytest.mark.slow
def test_single_song_overfits_reproducibly(corpora, toy_config, thresholds):
    steps = thresholds["overfit_steps"]
    model = ModelConfig().scaled(0.25).model_copy(update={"n_speakers": toy_config.model.n_speakers})
    train = toy_config.train.model_copy(update={"batch_size": 4, "valid_seconds": 1.0, "warmup_steps": 200,
                                                "decay_steps": 10000, "augment": False})
    cfg = toy_config.model_copy(update={"model": model, "train": train})
    utt = corpora.multi.train[0]

    first = _overfit_run(cfg, utt, steps)
    initial = first.history[0]["L_recon"]
    final = np.mean([r["L_recon"] for r in first.history[-20:]])
    assert final < thresholds["overfit_recon_fraction"] * initial

    again = _overfit_run(cfg, utt, steps).checkpoint()
    for name, value in first.checkpoint().model_state.items():
        assert again.model_state[name].tobytes() == value.tobytes(), name


@pytest.mark.slow
def test_embedding_loss_converges(tmp_path, corpora, toy_config, thresholds):
    train = toy_config.train.model_copy(update={"batch_size": 4, "warmup_steps": 100, "log_every": 100})
    cfg = toy_config.model_copy(update={"train": train})
    train_supervised(corpora.multi.train, cfg, steps=1500, out_dir=tmp_path)
    log = load_training_log(tmp_path / "train_supervised.jsonl")
    assert log["L_enc"].iloc[-50:].mean() * thresholds["enc_loss_drop"] <= log["L_enc"].iloc[0]


@pytest.mark.slow
def test_adaptation_lowers_target_error(corpora, toy_config):
    train = toy_config.train.model_copy(update={"batch_size": 4, "warmup_steps": 50})
    cfg = toy_config.model_copy(update={"train": train})
    phase_a = train_supervised(corpora.multi.train, cfg, steps=300)
    start = adapt_decoder(phase_a, corpora.target.train, cfg, steps=0)
    adapted = adapt_decoder(phase_a, corpora.target.train, cfg, steps=300)
    validation = corpora.target.validation
    assert _acoustic_recon_error(adapted, validation) < _acoustic_recon_error(start, validation)
