import math

import joblib
import numpy as np
import pandas as pd
import pytest
import torch

from src.config import save_config
from src.corpus.container import load_features, save_features
from src.corpus.dataset import ProtocolCorpora, build_protocol_corpora
from src.dsp.audio import save_wav
from src.dsp.features import MelSpectrogram
from src.errors import ContainerError, CorpusError, LabelError
from src.evalcli import experiments as experiments_module
from src.evalcli.cli import main
from src.evalcli.experiments import SYSTEMS, run_experiment_matrix, supervised_variant
from src.evalcli.inference import convert, read_mel, synthesize, write_mel
from src.evalcli.metrics import (MetricReport, centroid_spread, evaluate, fit_probe, reports_frame,
                                 resynthesis_error, save_reports)
from src.evalcli.plotting import mel_figure, plot_mel, training_figure
from src.model.timbre import TimbreModel, fit_feature_stats
from src.train.checkpoint import capture, load_checkpoint, save_checkpoint
from src.train.trainer import clone, train_supervised


@pytest.fixture
def corpora(toy_config):
    return build_protocol_corpora(toy_config)


@pytest.fixture
def toy_model(toy_config, corpora):
    model = TimbreModel(toy_config.model, seed=1)
    model.set_feature_stats(fit_feature_stats(corpora.multi.train))
    return model


@pytest.fixture
def toy_checkpoint(toy_model, toy_config):
    return capture(toy_model, toy_config.train, phase="supervised", singers=[0, 1])


def _write_labels(tmp_path, phones, seconds, f0_hz=200.0):
    timing = tmp_path / "req.lab"
    timing.write_text("".join(f"{p} {s} {e}\n" for p, s, e in phones))
    f0 = tmp_path / "req.f0"
    times = np.arange(0, seconds + 1e-9, 0.005)
    f0.write_text("".join(f"{t:.3f} {f0_hz}\n" for t in times))
    return timing, f0


class TestMetrics:

    def test_report_on_toy_model(self, toy_model, corpora, toy_config):
        report = evaluate(toy_model, corpora.target.validation, toy_config, system="toy")
        assert report.system == "toy" and report.n_utterances == 1
        for value in (report.mel_error_ar, report.mel_error_tf, report.embedding_distance, report.invariance_ratio):
            assert math.isfinite(value) and value >= 0
        assert 0.0 <= report.probe_accuracy <= 1.0
        assert 0.0 <= report.probe_accuracy_acoustic <= 1.0

    def test_probe_on_separate_set_is_saved(self, tmp_path, toy_model, corpora, toy_config):
        path = tmp_path / "probe.joblib"
        evaluate(toy_model, corpora.target.validation, toy_config, probe_train=corpora.target.train,
                 autoregressive=False, probe_path=path)
        probe = joblib.load(path)
        assert probe.coef_.shape[1] == toy_config.model.embed_dim

    def test_probe_fits_its_own_split_best(self, toy_model, corpora, toy_config):
        report = evaluate(toy_model, corpora.target.validation, toy_config, probe_train=corpora.target.train,
                          autoregressive=False)
        assert report.probe_train_accuracy >= report.probe_accuracy

    def test_identical_embeddings_have_zero_distance(self, toy_model, corpora, toy_config):
        with torch.no_grad():
            for module in toy_model.encoder_modules():
                for p in module.parameters():
                    p.zero_()
        report = evaluate(toy_model, corpora.target.validation, toy_config, autoregressive=False)
        assert report.embedding_distance == 0.0
        assert math.isnan(report.mel_error_ar)

    def test_unlabelled_validation(self, toy_model, corpora, toy_config):
        with pytest.raises(LabelError):
            evaluate(toy_model, [u.without_labels() for u in corpora.target.validation], toy_config)

    def test_probe_separates_clusters(self):
        rng = np.random.default_rng(0)
        x = np.concatenate([rng.normal(-5, 1, (50, 2)), rng.normal(5, 1, (50, 2))])
        y = np.repeat([0, 1], 50)
        held_out, train = fit_probe(x[::2], y[::2], x[1::2], y[1::2])
        assert held_out == 1.0 and train == 1.0

    def test_probe_needs_two_classes(self):
        x = np.zeros((10, 2))
        assert all(math.isnan(v) for v in fit_probe(x, np.zeros(10), x, np.zeros(10)))

    def test_centroid_spread(self):
        e = np.array([[0.0, 0.0], [0.0, 0.0], [3.0, 4.0]])
        assert centroid_spread(e, np.array([1, 1, 2])) == pytest.approx(5.0)
        assert math.isnan(centroid_spread(e, np.array([1, 1, 1])))

    def test_resynthesis_reference(self, corpora, toy_config):
        report = resynthesis_error(corpora.target.validation, toy_config)
        assert report.system == "reference"
        assert math.isfinite(report.mel_error_ar) and report.mel_error_ar >= 0
        assert math.isnan(report.probe_accuracy)

    def test_reports_to_jsonl(self, tmp_path):
        path = save_reports([MetricReport("a", mel_error_tf=1.0), MetricReport("b")], tmp_path / "r.jsonl")
        df = pd.read_json(path, lines=True)
        assert list(df["system"]) == ["a", "b"]
        assert list(reports_frame([MetricReport("a")]).columns)[0] == "system"


class TestInference:

    def test_synthesis_frame_count(self, tmp_path, toy_checkpoint, toy_config):
        timing, f0 = _write_labels(tmp_path, [("sil", 0.0, 0.5), ("a", 0.5, 1.5), ("sil", 1.5, 2.0)], 2.0)
        mel = synthesize(toy_checkpoint, timing, f0, 2, toy_config)
        assert mel.values.shape == (401, 100)
        assert np.isfinite(mel.values).all()

    def test_unknown_phone_named(self, tmp_path, toy_checkpoint, toy_config):
        timing, f0 = _write_labels(tmp_path, [("sil", 0.0, 0.5), ("xx", 0.5, 1.0)], 1.0)
        with pytest.raises(LabelError, match="xx"):
            synthesize(toy_checkpoint, timing, f0, 0, toy_config)

    def test_speaker_outside_table(self, tmp_path, toy_checkpoint, toy_config):
        timing, f0 = _write_labels(tmp_path, [("sil", 0.0, 0.5)], 0.5)
        with pytest.raises(ValueError):
            synthesize(toy_checkpoint, timing, f0, 9, toy_config)

    def test_conversion_keeps_length(self, tmp_path, toy_checkpoint, toy_config, corpora):
        utt = corpora.target.validation[0]
        wav = save_wav(utt.audio, tmp_path / "src.wav")
        f0 = tmp_path / "src.f0"
        f0.write_text("".join(f"{t:.3f} {hz:.3f}\n" for t, hz in zip(utt.mel.seconds, utt.f0.f0_hz)))
        mel = convert(toy_checkpoint, wav, f0, 1, toy_config)
        assert mel.n_frames == utt.n_frames

    def test_conversion_needs_f0(self, tmp_path, toy_checkpoint, toy_config, corpora):
        wav = save_wav(corpora.target.validation[0].audio, tmp_path / "src.wav")
        with pytest.raises(LabelError):
            convert(toy_checkpoint, wav, None, 1, toy_config)

    def test_mel_container(self, tmp_path, mel_config, sung_utterance):
        path = write_mel(sung_utterance.mel, tmp_path / "out.mel", mel_config)
        np.testing.assert_array_equal(read_mel(path).values, sung_utterance.mel.values)
        feats = save_features([sung_utterance], tmp_path / "f.feat", mel_config)
        np.testing.assert_array_equal(read_mel(feats, 0).values, sung_utterance.mel.values)
        with pytest.raises(ContainerError):
            read_mel(feats, 3)


class TestPlotting:

    def test_one_row_per_band(self, sung_utterance):
        fig = mel_figure(sung_utterance.mel)
        z = np.asarray(fig.data[0].z)
        assert z.shape == (100, sung_utterance.n_frames)

    def test_uniform_silence(self):
        fig = mel_figure(MelSpectrogram(np.full((50, 100), np.log(1e-5))))
        assert fig.data[0].zmax > fig.data[0].zmin

    def test_png_written(self, tmp_path, sung_utterance):
        pytest.importorskip("kaleido")
        plot_mel(sung_utterance.mel, tmp_path / "mel.png")
        assert (tmp_path / "mel.png").read_bytes()[:4] == b"\x89PNG"

    def test_training_curves(self, tmp_path):
        log = tmp_path / "train_supervised.jsonl"
        log.write_text('{"step": 1, "phase": "supervised", "lr": 0.1, "L": 2.0, "L_recon": 1.5, "L_enc": 2.5, '
                       '"wall_time": 0.1}\n')
        fig = training_figure(log)
        assert {trace.name for trace in fig.data} == {"L", "L_recon", "L_enc", "lr"}


class TestExperiments:

    def test_supervised_variant(self, toy_config):
        variant = supervised_variant(toy_config)
        assert not variant.model.use_acoustic_encoder
        assert toy_config.model.use_acoustic_encoder

    def test_missing_part(self, corpora, toy_config):
        broken = ProtocolCorpora(multi=corpora.multi, target=corpora.target, clone=[])
        with pytest.raises(CorpusError, match="cloning"):
            run_experiment_matrix(broken, toy_config)

    def test_matrix_rows(self, tmp_path, corpora, toy_config):
        train = toy_config.train.model_copy(update={"max_steps": 1, "adapt_steps": 1, "clone_steps": 1})
        cfg = toy_config.model_copy(update={"train": train})
        reports = run_experiment_matrix(corpora, cfg, out_dir=tmp_path)
        assert [r.system for r in reports] == list(SYSTEMS) + ["reference"]
        assert math.isnan(reports[0].embedding_distance)
        assert math.isfinite(reports[1].embedding_distance)
        assert len(pd.read_json(tmp_path / "reports.jsonl", lines=True)) == 5
        assert (tmp_path / "probe_semi-supervised.joblib").is_file()
        assert (tmp_path / "config.resolved.json").is_file()

    def test_supervised_row_skips_multi_singer_pretrain(self, tmp_path, corpora, toy_config, monkeypatch):
        train = toy_config.train.model_copy(update={"max_steps": 1, "adapt_steps": 1, "clone_steps": 1})
        cfg = toy_config.model_copy(update={"train": train})
        trained, fine_tuned = [], []

        def record_train(utterances, config, **kwargs):
            trained.append((utterances, config.model.use_acoustic_encoder))
            return train_supervised(utterances, config, **kwargs)

        def record_clone(ckpt, utterances, config, supervised=False, **kwargs):
            fine_tuned.append(utterances)
            return clone(ckpt, utterances, config, supervised, **kwargs)

        monkeypatch.setattr(experiments_module, "train_supervised", record_train)
        monkeypatch.setattr(experiments_module, "clone", record_clone)
        run_experiment_matrix(corpora, cfg, out_dir=tmp_path)

        assert any(utts is corpora.target.train and not acoustic for utts, acoustic in trained)
        assert all(utts is corpora.clone for utts in fine_tuned)
        ckpt = load_checkpoint(tmp_path / "supervised" / "supervised.ckpt")
        assert ckpt.phase == "supervised"
        assert ckpt.singers == [corpora.target_singer]
        assert not ckpt.model_config.use_acoustic_encoder


class TestCli:

    def test_missing_flag_fails(self, tmp_path):
        assert main(["synth", "--out", str(tmp_path / "x.mel")]) == 1

    def test_missing_input_fails(self, tmp_path):
        assert main(["plot", "--input", str(tmp_path / "absent.mel")]) == 1

    def test_gen_corpus_then_train(self, tmp_path, toy_config):
        cfg_path = tmp_path / "toy.json"
        save_config(toy_config, cfg_path)
        data = tmp_path / "data"
        assert main(["gen-corpus", "--config", str(cfg_path), "--out", str(data)]) == 0
        utts = load_features(data / "target_valid.feat", toy_config.mel)
        assert len(utts) == 1 and utts[0].has_labels

        run = tmp_path / "run"
        assert main(["train", "--config", str(cfg_path), "--features", str(data / "multi_train.feat"),
                     "--out", str(run), "--steps", "1"]) == 0
        assert (run / "supervised.ckpt").is_file()
        assert (run / "run.log").is_file()
        assert main(["eval", "--config", str(cfg_path), "--checkpoint", str(run / "supervised.ckpt"),
                     "--features", str(data / "target_valid.feat"), "--out", str(run)]) == 0
        assert (run / "report.jsonl").is_file()

    def test_missing_label_files_fail(self, tmp_path, toy_checkpoint):
        ckpt = str(save_checkpoint(toy_checkpoint, tmp_path / "m.ckpt"))
        timing, f0 = _write_labels(tmp_path, [("sil", 0.0, 0.5)], 0.5)
        out = str(tmp_path / "x.mel")
        assert main(["synth", "--checkpoint", ckpt, "--out", out, "--f0", str(f0)]) == 1
        assert main(["synth", "--checkpoint", ckpt, "--out", out, "--phones", str(timing)]) == 1
        assert main(["convert", "--checkpoint", ckpt, "--out", out, "--f0", str(f0)]) == 1
        assert not (tmp_path / "x.mel").exists()

    def test_plot_needs_output_path(self, tmp_path, mel_config, sung_utterance):
        source = write_mel(sung_utterance.mel, tmp_path / "in.mel", mel_config)
        assert main(["plot", "--input", str(source)]) == 1
        assert not list(tmp_path.glob("*.png"))
        with pytest.raises(ValueError):
            plot_mel(sung_utterance.mel, None)


@pytest.mark.slow
def test_protocol_run_meets_pass_marks(tmp_path, acceptance_config, thresholds):
    corpora = build_protocol_corpora(acceptance_config)
    reports = {r.system: r for r in run_experiment_matrix(corpora, acceptance_config, out_dir=tmp_path)}
    semi, sup = reports["semi-supervised"], reports["supervised"]
    assert semi.mel_error_ar <= thresholds["semi_vs_supervised_mel_error"] * sup.mel_error_ar
    assert semi.probe_accuracy > thresholds["probe_accuracy"]
    assert semi.probe_accuracy_acoustic > thresholds["probe_accuracy"]
    assert semi.invariance_ratio < thresholds["invariance_ratio"]
    assert semi.probe_train_accuracy >= semi.probe_accuracy
