"""
experiments.py

The comparison matrix: supervised vs semi-supervised systems, each trained
on the full target set and on the short cloning subset, plus a reference row
(target validation audio passed through analysis and phase reconstruction).

    supervised               no acoustic encoder; trained from scratch with
                             labels on the target set only
    semi-supervised          phase A with both encoders, decoder adapted on
                             target audio only
    supervised-cloning       no acoustic encoder; phase A on the multi-singer
                             corpus, fine-tuned with labels on the cloning subset
    semi-supervised-cloning  as semi-supervised, cloning subset only
"""

import logging
from pathlib import Path
from typing import List, Optional

from src.config import ExperimentConfig, save_config
from src.corpus.dataset import ProtocolCorpora
from src.errors import CorpusError
from src.evalcli.metrics import MetricReport, evaluate, resynthesis_error, save_reports
from src.train.checkpoint import restore_model
from src.train.trainer import adapt_decoder, clone, train_supervised

logger = logging.getLogger(__name__)

SYSTEMS = ("supervised", "semi-supervised", "supervised-cloning", "semi-supervised-cloning")


def supervised_variant(config: ExperimentConfig) -> ExperimentConfig:
    model = config.model.model_copy(update={"use_acoustic_encoder": False})
    return config.model_copy(update={"model": model})


def _check_corpora(corpora: ProtocolCorpora) -> None:
    parts = {"phase-A training": corpora.multi.train, "target training": corpora.target.train,
             "target validation": corpora.target.validation, "cloning subset": corpora.clone}
    for name, utts in parts.items():
        if not utts:
            raise CorpusError(f"experiment matrix is missing the {name} set")


def run_experiment_matrix(corpora: ProtocolCorpora, config: ExperimentConfig,
                          out_dir: Optional[Path] = None) -> List[MetricReport]:
    """Train all four systems and return their reports followed by the reference row."""
    _check_corpora(corpora)
    out_dir = Path(out_dir) if out_dir is not None else None

    def sub(name):
        return out_dir / name if out_dir is not None else None

    sup_config = supervised_variant(config)
    multi, target, subset = corpora.multi.train, corpora.target.train, corpora.clone
    logger.info(f"Matrix: {len(multi)} phase-A songs, {len(target)} target songs, "
                f"{len(subset)} cloning songs ({sum(u.duration for u in subset):.0f}s)")

    sup_a = train_supervised(multi, sup_config, out_dir=sub("supervised-pretrain"))
    semi_a = train_supervised(multi, config, out_dir=sub("semi-supervised-pretrain"))
    checkpoints = {
        "supervised": train_supervised(target, sup_config, out_dir=sub("supervised")),
        "semi-supervised": adapt_decoder(semi_a, target, config, out_dir=sub("semi-supervised")),
        "supervised-cloning": clone(sup_a, subset, sup_config, supervised=True,
                                    out_dir=sub("supervised-cloning")),
        "semi-supervised-cloning": clone(semi_a, subset, config, supervised=False,
                                         out_dir=sub("semi-supervised-cloning")),
    }

    reports = []
    for system in SYSTEMS:
        model = restore_model(checkpoints[system])
        probe_path = sub(f"probe_{system}.joblib")
        reports.append(evaluate(model, corpora.target.validation, config, system=system,
                                probe_train=target, probe_path=probe_path))
    reports.append(resynthesis_error(corpora.target.validation, config))

    if out_dir is not None:
        save_config(config, out_dir / "config.resolved.json")
        save_reports(reports, out_dir / "reports.jsonl")
    return reports
