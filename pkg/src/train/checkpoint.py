"""
checkpoint.py

Checkpoints reuse the named-tensor container: model parameters and buffers
under "model/", Adam moments under "optim/<param>/", configs and the step
counter in the JSON metadata. The container fingerprint is the architecture
(ModelConfig) fingerprint, so a checkpoint refuses to load into a different
model shape.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import torch

from src.config import ModelConfig, TrainConfig, config_fingerprint
from src.corpus.container import read_container, write_container
from src.errors import ContainerError
from src.model.timbre import TimbreModel

logger = logging.getLogger(__name__)

ADAM_SLOTS = ("step", "exp_avg", "exp_avg_sq")


@dataclass
class Checkpoint:
    model_state: Dict[str, np.ndarray]
    model_config: ModelConfig
    train_config: TrainConfig
    step: int = 0
    phase: str = "supervised"
    optimizer_state: Dict[str, Dict[str, np.ndarray]] = field(default_factory=dict)
    corpus_fingerprint: str = ""
    singers: List[int] = field(default_factory=list)

    @property
    def model_fingerprint(self) -> str:
        return config_fingerprint(self.model_config)

    @property
    def train_fingerprint(self) -> str:
        return config_fingerprint(self.train_config)


def capture(model: TimbreModel, train_config: TrainConfig, *, step: int = 0, phase: str = "supervised",
            optimizer: Optional[torch.optim.Optimizer] = None, corpus_fingerprint: str = "",
            singers=()) -> Checkpoint:
    state = {k: v.detach().cpu().numpy().copy() for k, v in model.state_dict().items()}
    return Checkpoint(model_state=state, model_config=model.config, train_config=train_config, step=step,
                      phase=phase, optimizer_state=optimizer_state(model, optimizer) if optimizer else {},
                      corpus_fingerprint=corpus_fingerprint, singers=sorted(set(int(s) for s in singers)))


def optimizer_state(model: TimbreModel, optimizer: torch.optim.Optimizer) -> Dict[str, Dict[str, np.ndarray]]:
    names = {id(p): n for n, p in model.named_parameters()}
    out = {}
    for group in optimizer.param_groups:
        for p in group["params"]:
            slots = optimizer.state.get(p)
            if slots:
                out[names[id(p)]] = {s: torch.as_tensor(slots[s]).detach().cpu().numpy().copy()
                                     for s in ADAM_SLOTS}
    return out


def restore_model(ckpt: Checkpoint) -> TimbreModel:
    tensors = {k: torch.from_numpy(np.array(v)) for k, v in ckpt.model_state.items()}
    dtype = tensors["mel_mean"].dtype if "mel_mean" in tensors else torch.float32
    model = TimbreModel(ckpt.model_config).to(dtype)
    try:
        model.load_state_dict(tensors, strict=True)
    except RuntimeError as e:
        raise ContainerError(f"checkpoint tensors do not fit the model: {e}") from e
    return model


def restore_optimizer(ckpt: Checkpoint, model: TimbreModel, optimizer: torch.optim.Optimizer) -> None:
    params = dict(model.named_parameters())
    for name, slots in ckpt.optimizer_state.items():
        p = params.get(name)
        if p is None:
            raise ContainerError(f"optimizer state for unknown parameter '{name}'")
        optimizer.state[p] = {s: torch.from_numpy(np.array(slots[s])).to(p.device) for s in ADAM_SLOTS}


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    arrays = {f"model/{k}": v for k, v in ckpt.model_state.items()}
    for name, slots in ckpt.optimizer_state.items():
        for s, v in slots.items():
            arrays[f"optim/{name}/{s}"] = v
    meta = {
        "kind": "checkpoint",
        "step": ckpt.step,
        "phase": ckpt.phase,
        "model_config": ckpt.model_config.model_dump(mode="json"),
        "train_config": ckpt.train_config.model_dump(mode="json"),
        "train_fingerprint": ckpt.train_fingerprint,
        "corpus_fingerprint": ckpt.corpus_fingerprint,
        "singers": ckpt.singers,
    }
    path = write_container(path, arrays, meta, fingerprint=ckpt.model_fingerprint)
    logger.info(f"Checkpoint ({ckpt.phase}, step {ckpt.step}) written to {path}")
    return path


def load_checkpoint(path, model_config: Optional[ModelConfig] = None) -> Checkpoint:
    """Read a checkpoint; with `model_config` given, refuse a different architecture."""
    expected = config_fingerprint(model_config) if model_config is not None else None
    arrays, meta, fingerprint = read_container(path, expected_fingerprint=expected)
    if meta.get("kind") != "checkpoint":
        raise ContainerError(f"{path}: container holds '{meta.get('kind')}', not a checkpoint")
    try:
        mcfg = ModelConfig.model_validate(meta["model_config"])
        tcfg = TrainConfig.model_validate(meta["train_config"])
    except (KeyError, ValueError) as e:
        raise ContainerError(f"{path}: unreadable config block ({e})") from e
    if config_fingerprint(mcfg) != fingerprint:
        raise ContainerError(f"{path}: stored model config does not match its fingerprint")

    model_state, optim = {}, {}
    for name, array in arrays.items():
        kind, _, rest = name.partition("/")
        if kind == "model":
            model_state[rest] = array
        elif kind == "optim":
            pname, _, slot = rest.rpartition("/")
            optim.setdefault(pname, {})[slot] = array
    return Checkpoint(model_state=model_state, model_config=mcfg, train_config=tcfg,
                      step=int(meta.get("step", 0)), phase=meta.get("phase", "supervised"),
                      optimizer_state=optim, corpus_fingerprint=meta.get("corpus_fingerprint", ""),
                      singers=list(meta.get("singers", [])))
