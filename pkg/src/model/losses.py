"""
losses.py

Training objective: L = lambda_recon * L_recon + lambda_enc * L_enc, both
mean squared errors over the valid (mask = 1) frames of each segment.
"""

from dataclasses import dataclass
from typing import Optional

import torch

from src.config import NoiseSpec
from src.errors import ShapeError
from src.model.timbre import TimbreModel, switch_embedding


@dataclass
class LossTerms:
    total: torch.Tensor
    recon: torch.Tensor
    enc: torch.Tensor
    k: torch.Tensor

    def as_floats(self) -> dict:
        return {"L": self.total.detach().item(), "L_recon": self.recon.detach().item(),
                "L_enc": self.enc.detach().item()}


def masked_mse(a: torch.Tensor, b: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean of (a - b)^2 over masked frames and all channels. a, b: [B, T, C]; mask: [B, T]."""
    if a.shape != b.shape:
        raise ShapeError(f"cannot compare {tuple(a.shape)} with {tuple(b.shape)}")
    if mask.shape != a.shape[:2]:
        raise ShapeError(f"mask {tuple(mask.shape)} does not match frames {tuple(a.shape[:2])}")
    m = mask.to(a.dtype)
    denom = m.sum() * a.shape[-1]
    if denom == 0:
        raise ShapeError("every frame of the batch is masked out")
    return (((a - b) ** 2) * m.unsqueeze(-1)).sum() / denom


def _draw_k(batch_size: int, p: float, generator, dtype) -> torch.Tensor:
    probs = torch.full((batch_size,), float(p), dtype=torch.float64)
    return torch.bernoulli(probs, generator=generator).to(dtype)


def loss_terms(model: TimbreModel, x: Optional[torch.Tensor], x_target: torch.Tensor,
               phone_ids: Optional[torch.Tensor], control: torch.Tensor, mask: torch.Tensor,
               noise: NoiseSpec, generator: Optional[torch.Generator] = None, *,
               lambda_recon: float = 1.0, lambda_enc: float = 0.2, k=None) -> LossTerms:
    """Compute L, L_recon, L_enc and the switch values used.

    `x` is the (possibly transposed) acoustic encoder input, `x_target` the
    reconstruction target, both normalised mel. Either encoder input may be
    None; the switch then falls on the side that is present. `k` forces the
    switch (scalar or one value per example) instead of drawing it.
    """
    if mask.sum() == 0:
        raise ShapeError("every frame of the batch is masked out")
    B = x_target.shape[0]
    dtype = x_target.dtype
    e_a = model.encode_acoustic(x) if x is not None and model.encoder_acoustic is not None else None
    e_l = model.encode_linguistic(phone_ids) if phone_ids is not None else None
    if e_a is None and e_l is None:
        raise ShapeError("loss needs acoustic or linguistic input")

    if k is not None:
        k = torch.as_tensor(k, dtype=dtype)
        if k.dim() == 0:
            k = k.expand(B)
    elif e_l is None:
        k = torch.ones(B, dtype=dtype)
    elif e_a is None:
        k = torch.zeros(B, dtype=dtype)
    else:
        k = _draw_k(B, noise.switch_p, generator, dtype)
    if k.shape != (B,):
        raise ShapeError(f"switch needs {B} values, got shape {tuple(k.shape)}")

    if e_a is not None and e_l is not None:
        l_enc = masked_mse(e_a, e_l, mask)
        e = switch_embedding(e_a, e_l, k)
    else:
        l_enc = torch.zeros((), dtype=dtype)
        if e_a is None and bool((k != 0).any()):
            raise ShapeError("switch selects the acoustic path but there is no acoustic embedding")
        if e_l is None and bool((k != 1).any()):
            raise ShapeError("switch selects the linguistic path but there is no linguistic embedding")
        e = e_a if e_a is not None else e_l

    x_hat = model.decode_teacher_forced(e, control, x_target, noise, generator)
    l_recon = masked_mse(x_hat, x_target, mask)
    total = lambda_recon * l_recon + lambda_enc * l_enc
    return LossTerms(total=total, recon=l_recon, enc=l_enc, k=k)
