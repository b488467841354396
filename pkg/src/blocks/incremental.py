"""
incremental.py

Frame-by-frame evaluation of a causal WaveNetBlock. Each layer keeps a queue
of the last d * (k - 1) inputs to its dilated convolution; a fresh state is
an all-zero history, which is what the parallel path's left padding sees.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import torch

from src.blocks.wavenet import WaveNetBlock


@dataclass(frozen=True)
class IncrementalState:
    queues: Tuple[torch.Tensor, ...]
    step: int = 0


def fresh_state(block: WaveNetBlock, batch_size: int = 1, dtype=None, device=None) -> IncrementalState:
    ref = block.input_proj.weight
    dtype = dtype or ref.dtype
    device = device or ref.device
    R, k = block.config.residual_channels, block.config.kernel_size
    queues = tuple(torch.zeros(batch_size, R, d * (k - 1), dtype=dtype, device=device)
                   for d in block.config.dilations)
    return IncrementalState(queues=queues, step=0)


def block_forward_incremental(block: WaveNetBlock, state: IncrementalState, x_t: torch.Tensor,
                              cond_t: Optional[torch.Tensor] = None) -> Tuple[torch.Tensor, IncrementalState]:
    """One frame: x_t [B, in] (+ cond_t [B, cond]) -> (y_t [B, out], next state)."""
    if not block.config.causal:
        raise ValueError("incremental evaluation needs a causal block")
    block._check(x_t, cond_t)

    h = x_t.unsqueeze(-1)
    c = cond_t.unsqueeze(-1) if cond_t is not None and block.config.cond_channels > 0 else None
    if c is not None and not block.layer_cond:
        h = torch.cat([h, c], dim=1)
    h = block.input_proj(h)

    queues: List[torch.Tensor] = []
    skip = 0.0
    for i, conv in enumerate(block.dilated):
        window = torch.cat([state.queues[i], h], dim=2)
        queues.append(window[:, :, 1:])
        z = conv(window)
        if block.layer_cond:
            z = z + block.cond_proj[i](c)
        g = block._gate(z)
        skip = skip + block.skip_proj[i](g)
        if i < len(block.res_proj):
            h = h + block.res_proj[i](g)
    y = block._head(skip).squeeze(-1)
    return y, IncrementalState(queues=tuple(queues), step=state.step + 1)
