"""
metrics.py

Objective proxies for listening tests, all computed with noise disabled:

    mel_error_ar         MSE of autoregressive inference from phones + F0 (log-mel)
    mel_error_tf         MSE of teacher-forced decoding from the linguistic embedding
    embedding_distance   mean per-frame L2 distance between E_A(x) and E_L(y)
    probe_accuracy       linear phone classifier on frozen embeddings, held-out frames
    invariance_ratio     mean embedding shift under +/- transposition divided by
                         mean distance between phone centroids
"""

import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import joblib
import numpy as np
import pandas as pd
import torch
from joblib import Parallel, delayed
from sklearn.linear_model import LogisticRegression

from src.config import ExperimentConfig
from src.corpus.synth import Utterance
from src.dsp.augment import semitones_to_factor, transpose_augment
from src.dsp.features import compute_mel, mel_to_audio
from src.errors import CorpusError, LabelError
from src.model.inputs import mel_input, utterance_inputs
from src.model.timbre import TimbreModel

logger = logging.getLogger(__name__)

NAN = float("nan")


@dataclass
class MetricReport:
    system: str
    mel_error_ar: float = NAN
    mel_error_tf: float = NAN
    embedding_distance: float = NAN
    probe_accuracy: float = NAN
    probe_train_accuracy: float = NAN
    probe_accuracy_acoustic: float = NAN
    invariance_ratio: float = NAN
    n_utterances: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


def reports_frame(reports: Sequence[MetricReport]) -> pd.DataFrame:
    return pd.DataFrame([r.as_dict() for r in reports])


def save_reports(reports: Sequence[MetricReport], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    reports_frame(reports).to_json(path, orient="records", lines=True)
    return path


@dataclass
class _UtteranceResult:
    sq_ar: float
    sq_tf: float
    n_values: int
    e_l: np.ndarray
    e_a: Optional[np.ndarray]
    phones: np.ndarray
    shift: float


@torch.no_grad()
def _score_utterance(model: TimbreModel, utt: Utterance, config: ExperimentConfig,
                     autoregressive: bool) -> _UtteranceResult:
    inputs = utterance_inputs(model, utt)
    target = utt.mel.values.astype(np.float64)
    e_l = model.encode_linguistic(inputs.phone_ids)
    cond = model.long_scope(e_l, inputs.control)

    tf = model.decoder_short(torch.nn.functional.pad(inputs.x[:, :-1], (0, 0, 1, 0)), cond)
    sq_tf = float(((model.denormalize_mel(tf)[0].double().numpy() - target) ** 2).sum())
    sq_ar = NAN
    if autoregressive:
        ar = model.generate(cond)
        sq_ar = float(((model.denormalize_mel(ar)[0].double().numpy() - target) ** 2).sum())

    e_a, shift = None, NAN
    if model.encoder_acoustic is not None:
        e_a = model.encode_acoustic(inputs.x)
        shifts = []
        for sign in (1.0, -1.0):
            factor = semitones_to_factor(sign * config.eval.invariance_semitones)
            moved = transpose_augment(utt.audio, utt.n_frames, factor, config.mel)
            e_moved = model.encode_acoustic(mel_input(model, moved.values))
            shifts.append(float(torch.linalg.vector_norm(e_moved - e_a, dim=-1).mean()))
        shift = float(np.mean(shifts))
        e_a = e_a[0].double().numpy()
    return _UtteranceResult(sq_ar=sq_ar, sq_tf=sq_tf, n_values=target.size, e_l=e_l[0].double().numpy(),
                            e_a=e_a, phones=utt.ling.phone_ids, shift=shift)


def _subsample(n: int, stride: int, cap: int) -> np.ndarray:
    idx = np.arange(0, n, stride)
    if len(idx) > cap:
        idx = idx[np.linspace(0, len(idx) - 1, cap).round().astype(int)]
    return idx


def fit_probe(train_x: np.ndarray, train_y: np.ndarray, test_x: np.ndarray, test_y: np.ndarray,
              stride: int = 1, cap: int = 20000, save_to=None) -> Tuple[float, float]:
    """Multinomial logistic regression on frame embeddings -> (held-out, train) accuracy."""
    tr = _subsample(len(train_y), stride, cap)
    te = _subsample(len(test_y), stride, cap)
    if len(np.unique(train_y[tr])) < 2 or len(te) == 0:
        logger.warning("Phone probe skipped: need at least two phone classes and held-out frames")
        return NAN, NAN
    clf = LogisticRegression(max_iter=1000)
    clf.fit(train_x[tr], train_y[tr])
    if save_to is not None:
        joblib.dump(clf, save_to)
    return float(clf.score(test_x[te], test_y[te])), float(clf.score(train_x[tr], train_y[tr]))


def centroid_spread(embeddings: np.ndarray, phones: np.ndarray) -> float:
    """Mean pairwise L2 distance between per-phone centroids."""
    labels = np.unique(phones)
    if len(labels) < 2:
        return NAN
    centroids = np.stack([embeddings[phones == p].mean(axis=0) for p in labels])
    d = np.linalg.norm(centroids[:, None, :] - centroids[None, :, :], axis=-1)
    return float(d[np.triu_indices(len(labels), k=1)].mean())


def _split_halves(results: List[_UtteranceResult], attr: str):
    """Probe split when no separate probe set is given: first half of each utterance trains."""
    tr_x, tr_y, te_x, te_y = [], [], [], []
    for r in results:
        e = getattr(r, attr)
        half = len(r.phones) // 2
        tr_x.append(e[:half])
        tr_y.append(r.phones[:half])
        te_x.append(e[half:])
        te_y.append(r.phones[half:])
    return np.concatenate(tr_x), np.concatenate(tr_y), np.concatenate(te_x), np.concatenate(te_y)


def _stack(results: List[_UtteranceResult], attr: str):
    return np.concatenate([getattr(r, attr) for r in results]), np.concatenate([r.phones for r in results])


def _check_labelled(utterances: Sequence[Utterance], what: str) -> None:
    if not utterances:
        raise CorpusError(f"{what} set is empty")
    missing = [u.name for u in utterances if u.ling is None]
    if missing:
        raise LabelError(f"{what} set needs phone labels; {missing[0]} has none")


def evaluate(model: TimbreModel, validation: Sequence[Utterance], config: ExperimentConfig,
             system: str = "model", probe_train: Optional[Sequence[Utterance]] = None,
             autoregressive: bool = True, probe_path=None) -> MetricReport:
    _check_labelled(validation, "validation")
    if probe_train is not None:
        _check_labelled(probe_train, "probe training")
    model.eval()
    ec = config.eval

    def score(utts, ar):
        return Parallel(n_jobs=ec.n_jobs, prefer="threads")(
            delayed(_score_utterance)(model, u, config, ar) for u in utts)

    val = score(validation, autoregressive)
    n_values = sum(r.n_values for r in val)
    report = MetricReport(system=system, n_utterances=len(val))
    report.mel_error_tf = sum(r.sq_tf for r in val) / n_values
    if autoregressive:
        report.mel_error_ar = sum(r.sq_ar for r in val) / n_values

    if probe_train is not None:
        train = score(probe_train, False)
        tr_x, tr_y = _stack(train, "e_l")
        te_x, te_y = _stack(val, "e_l")
    else:
        train = None
        tr_x, tr_y, te_x, te_y = _split_halves(val, "e_l")
    report.probe_accuracy, report.probe_train_accuracy = fit_probe(
        tr_x, tr_y, te_x, te_y, ec.probe_frame_stride, ec.probe_max_frames, save_to=probe_path)

    if model.encoder_acoustic is not None:
        e_a, phones = _stack(val, "e_a")
        e_l, _ = _stack(val, "e_l")
        report.embedding_distance = float(np.linalg.norm(e_a - e_l, axis=-1).mean())
        if train is not None:
            a_tr_x, a_tr_y = _stack(train, "e_a")
            a_te_x, a_te_y = e_a, phones
        else:
            a_tr_x, a_tr_y, a_te_x, a_te_y = _split_halves(val, "e_a")
        report.probe_accuracy_acoustic, _ = fit_probe(a_tr_x, a_tr_y, a_te_x, a_te_y,
                                                      ec.probe_frame_stride, ec.probe_max_frames)
        spread = centroid_spread(e_a, phones)
        report.invariance_ratio = float(np.mean([r.shift for r in val])) / spread if spread > 0 else NAN

    logger.info(f"[{system}] " + " ".join(
        f"{k}={v:.4f}" for k, v in report.as_dict().items() if isinstance(v, float) and not math.isnan(v)))
    return report


def resynthesis_error(utterances: Sequence[Utterance], config: ExperimentConfig) -> MetricReport:
    """Reference row: mel error of analysis -> phase reconstruction -> analysis."""
    if not utterances:
        raise CorpusError("validation set is empty")

    def one(utt: Utterance):
        audio = mel_to_audio(utt.mel, config.mel, n_iter=config.eval.griffin_lim_iters)
        again = compute_mel(audio, config.mel).values[:utt.n_frames].astype(np.float64)
        target = utt.mel.values[:len(again)].astype(np.float64)
        return float(((again - target) ** 2).sum()), target.size

    parts = Parallel(n_jobs=config.eval.n_jobs)(delayed(one)(u) for u in utterances)
    err = sum(p[0] for p in parts) / sum(p[1] for p in parts)
    logger.info(f"[reference] resynthesis mel error {err:.4f}")
    return MetricReport(system="reference", mel_error_ar=err, mel_error_tf=err, n_utterances=len(parts))
