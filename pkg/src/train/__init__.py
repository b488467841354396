from src.train.checkpoint import Checkpoint, capture, load_checkpoint, restore_model, restore_optimizer, save_checkpoint
from src.train.schedule import lr_schedule, set_learning_rate
from src.train.trainer import (Trainer, adapt_decoder, build_optimizer, clone, load_training_log,
                               train_supervised)

__all__ = [
    "Checkpoint", "capture", "load_checkpoint", "restore_model", "restore_optimizer", "save_checkpoint",
    "lr_schedule", "set_learning_rate",
    "Trainer", "adapt_decoder", "build_optimizer", "clone", "load_training_log", "train_supervised",
]
