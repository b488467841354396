#!/usr/bin/env python
"""
cli.py

Command-line entry point:

    python -m src.evalcli.cli <verb> [options]

Verbs: gen-corpus, features, train, adapt, clone, synth, convert, eval,
matrix, plot. Configuration comes from --config (JSON), TIMBRE_* environment
variables (a .env file is honoured) and the flags below; every run that
writes to a directory leaves config.resolved.json there.
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

from src.config import ExperimentConfig, load_config, save_config
from src.corpus.container import load_features, save_features
from src.corpus.dataset import build_protocol_corpora
from src.corpus.inventory import PhoneInventory
from src.corpus.labels import load_recording
from src.errors import TimbreError
from src.evalcli.experiments import run_experiment_matrix
from src.evalcli.inference import convert, render_audio, synthesize, write_mel
from src.evalcli.metrics import evaluate, reports_frame, save_reports
from src.evalcli.plotting import plot_mel, plot_training_log
from src.train.checkpoint import load_checkpoint, restore_model
from src.train.trainer import adapt_decoder, clone, train_supervised

logger = logging.getLogger("timbre")

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"

CORPUS_FILES = {
    "multi_train": "multi_train.feat",
    "multi_valid": "multi_valid.feat",
    "target_train": "target_train.feat",
    "target_valid": "target_valid.feat",
    "clone": "clone.feat",
}


def setup_logging(level: str, out_dir: Optional[Path] = None) -> None:
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO), format=LOG_FORMAT, force=True)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        handler = logging.FileHandler(out_dir / "run.log")
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logging.getLogger().addHandler(handler)


def resolve_config(args) -> ExperimentConfig:
    overrides: dict = {}
    if args.seed is not None:
        overrides["corpus"] = {"seed": args.seed}
        overrides["train"] = {"seed": args.seed}
    if getattr(args, "from_scratch", False):
        overrides.setdefault("train", {})["from_scratch"] = True
    return load_config(args.config, overrides=overrides)


def _out_dir(args) -> Path:
    return Path(args.out or os.getenv("TIMBRE_OUT_DIR", "runs"))


# verbs -----------------------------------------------------------------------

def cmd_gen_corpus(args, cfg: ExperimentConfig) -> None:
    out = _out_dir(args)
    corpora = build_protocol_corpora(cfg)
    parts = {
        "multi_train": corpora.multi.train, "multi_valid": corpora.multi.validation,
        "target_train": corpora.target.train, "target_valid": corpora.target.validation,
        "clone": corpora.clone,
    }
    for key, utts in parts.items():
        save_features(utts, out / CORPUS_FILES[key], cfg.mel, metadata={"split": key})
    save_config(cfg, out / "config.resolved.json")


def cmd_features(args, cfg: ExperimentConfig) -> None:
    inventory = PhoneInventory.from_list(cfg.corpus.phones)
    utt = load_recording(_require(args.wav, "--wav"), _require(args.phones, "--phones"),
                         _require(args.f0, "--f0"), cfg.mel, inventory, singer_id=args.speaker)
    out = Path(_require(args.out, "--out"))
    save_features([utt], out, cfg.mel, metadata={"source": str(args.wav)})
    save_config(cfg, out.parent / "config.resolved.json")


def cmd_train(args, cfg: ExperimentConfig) -> None:
    out = _out_dir(args)
    if args.supervised:
        cfg = cfg.model_copy(update={"model": cfg.model.model_copy(update={"use_acoustic_encoder": False})})
    save_config(cfg, out / "config.resolved.json")
    data = load_features(_require(args.features, "--features"), cfg.mel)
    resume = load_checkpoint(args.checkpoint, cfg.model) if args.checkpoint else None
    train_supervised(data, cfg, steps=args.steps, out_dir=out, resume=resume)


def cmd_adapt(args, cfg: ExperimentConfig) -> None:
    out = _out_dir(args)
    save_config(cfg, out / "config.resolved.json")
    ckpt = load_checkpoint(_require(args.checkpoint, "--checkpoint"))
    data = load_features(_require(args.features, "--features"), cfg.mel)
    adapt_decoder(ckpt, data, cfg, steps=args.steps, out_dir=out)


def cmd_clone(args, cfg: ExperimentConfig) -> None:
    out = _out_dir(args)
    save_config(cfg, out / "config.resolved.json")
    ckpt = load_checkpoint(_require(args.checkpoint, "--checkpoint"))
    data = load_features(_require(args.features, "--features"), cfg.mel)
    clone(ckpt, data, cfg, supervised=args.supervised, steps=args.steps, out_dir=out)


def cmd_synth(args, cfg: ExperimentConfig) -> None:
    ckpt = load_checkpoint(_require(args.checkpoint, "--checkpoint"))
    out = Path(_require(args.out, "--out"))
    mel = synthesize(ckpt, _require(args.phones, "--phones"), _require(args.f0, "--f0"), args.speaker, cfg)
    write_mel(mel, out, cfg.mel, metadata={"speaker": args.speaker, "source": str(args.phones)})
    if args.wav_out:
        render_audio(mel, args.wav_out, cfg)
    save_config(cfg, out.parent / "config.resolved.json")


def cmd_convert(args, cfg: ExperimentConfig) -> None:
    ckpt = load_checkpoint(_require(args.checkpoint, "--checkpoint"))
    out = Path(_require(args.out, "--out"))
    mel = convert(ckpt, _require(args.wav, "--wav"), _require(args.f0, "--f0"), args.speaker, cfg)
    write_mel(mel, out, cfg.mel, metadata={"speaker": args.speaker, "source": str(args.wav)})
    if args.wav_out:
        render_audio(mel, args.wav_out, cfg)
    save_config(cfg, out.parent / "config.resolved.json")


def cmd_eval(args, cfg: ExperimentConfig) -> None:
    ckpt = load_checkpoint(_require(args.checkpoint, "--checkpoint"))
    validation = load_features(_require(args.features, "--features"), cfg.mel)
    probe = load_features(args.probe_features, cfg.mel) if args.probe_features else None
    report = evaluate(restore_model(ckpt), validation, cfg, system=ckpt.phase, probe_train=probe)
    out = _out_dir(args)
    save_reports([report], out / "report.jsonl")
    save_config(cfg, out / "config.resolved.json")


def cmd_matrix(args, cfg: ExperimentConfig) -> None:
    out = _out_dir(args)
    corpora = build_protocol_corpora(cfg)
    reports = run_experiment_matrix(corpora, cfg, out_dir=out)
    logger.info("\n" + reports_frame(reports).to_string(index=False))


def cmd_plot(args, cfg: ExperimentConfig) -> None:
    source = Path(_require(args.input, "--input"))
    out = Path(_require(args.out, "--out"))
    if source.suffix == ".jsonl":
        plot_training_log(source, out)
    else:
        plot_mel(source, out)


def _require(value, flag: str):
    if not value:
        raise TimbreError(f"{flag} is required for this command")
    return value


COMMANDS = {
    "gen-corpus": cmd_gen_corpus, "features": cmd_features, "train": cmd_train, "adapt": cmd_adapt,
    "clone": cmd_clone, "synth": cmd_synth, "convert": cmd_convert, "eval": cmd_eval,
    "matrix": cmd_matrix, "plot": cmd_plot,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="timbre", description="Semi-supervised singing timbre model")
    p.add_argument("command", choices=sorted(COMMANDS), help="What to run")
    p.add_argument("--config", type=Path, help="JSON experiment configuration")
    p.add_argument("--seed", type=int, help="Override corpus and training seeds")
    p.add_argument("--checkpoint", help="Checkpoint to resume from / adapt / run")
    p.add_argument("--out", help="Output directory (or file for features/synth/convert/plot)")
    p.add_argument("--steps", type=int, help="Override the step budget of this phase")
    p.add_argument("--from-scratch", action="store_true", help="Re-initialise the decoder before adaptation")
    p.add_argument("--supervised", action="store_true",
                   help="train: baseline without acoustic encoder; clone: fine-tune with labels")
    p.add_argument("--features", help="Feature container to train / adapt / evaluate on")
    p.add_argument("--probe-features", help="Feature container the phone probe is fitted on")
    p.add_argument("--wav", help="Input WAV (features, convert)")
    p.add_argument("--phones", help="Phone timing file: 'phone start_s end_s' per line")
    p.add_argument("--f0", help="F0 file: 'time_s f0_hz' per line")
    p.add_argument("--speaker", type=int, default=0, help="Speaker row to synthesise / convert to")
    p.add_argument("--wav-out", help="Also render audio by phase reconstruction")
    p.add_argument("--input", help="Container or training log to plot")
    p.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ...")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    level = args.log_level or os.getenv("TIMBRE_LOG_LEVEL", "INFO")
    run_dir = _out_dir(args) if args.command in ("gen-corpus", "train", "adapt", "clone", "eval", "matrix") else None
    setup_logging(level, run_dir)

    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](args, cfg)
    except (TimbreError, FileNotFoundError, ValueError) as e:
        logger.error(f"{args.command} failed: {e}")
        return 1
    logger.info(f"{args.command} done")
    return 0


if __name__ == "__main__":
    sys.exit(main())
