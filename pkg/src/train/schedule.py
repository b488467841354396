"""
schedule.py

Linear warm-up to the base rate, then exponential decay by `decay_factor`
every `decay_steps` updates (continuous exponent).
"""

from src.config import TrainConfig


def lr_schedule(step: int, config: TrainConfig) -> float:
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    warm = min(step / config.warmup_steps, 1.0)
    decay = config.decay_factor ** (max(0, step - config.warmup_steps) / config.decay_steps)
    return config.base_lr * warm * decay


def set_learning_rate(optimizer, lr: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr
