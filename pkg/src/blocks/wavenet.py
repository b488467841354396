"""
wavenet.py

Dilated 1-d gated convolution stack with residual shortcuts and a skip sum
feeding a two-layer 1x1 output stack. Used for both encoders and both
decoder scopes, in causal (left-padded) or non-causal (centred) mode.

Tensors are frame-major at the interface: [batch, frames, channels].
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import torch
import torch.nn.functional as F
from torch import nn

from src.config import StackConfig
from src.errors import ShapeError

ACTIVATIONS = ("leaky_relu", "tanh", None)


@dataclass(frozen=True)
class BlockConfig:
    in_channels: int
    n_layers: int
    kernel_size: int
    dilations: Tuple[int, ...]
    residual_channels: int
    skip_channels: int
    output_channels: Tuple[int, int]
    output_activations: Tuple[Optional[str], Optional[str]] = ("leaky_relu", "tanh")
    causal: bool = False
    cond_channels: int = 0
    cond_injection: str = "layer"
    leaky_slope: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        if len(self.dilations) != self.n_layers:
            raise ValueError(f"{self.n_layers} layers but {len(self.dilations)} dilations")
        if any(d < 1 for d in self.dilations):
            raise ValueError(f"dilations must be >= 1, got {self.dilations}")
        if self.kernel_size < 2:
            raise ValueError(f"kernel_size must be >= 2, got {self.kernel_size}")
        if not self.causal and self.kernel_size % 2 == 0:
            raise ValueError("non-causal blocks use centred padding and need an odd kernel")
        if self.cond_injection not in ("layer", "input"):
            raise ValueError(f"unknown cond_injection '{self.cond_injection}'")
        if any(a not in ACTIVATIONS for a in self.output_activations):
            raise ValueError(f"unknown activation in {self.output_activations}")

    @classmethod
    def from_stack(cls, stack: StackConfig, in_channels: int, out_channels: int,
                   final_activation: Optional[str], cond_channels: int = 0,
                   cond_injection: str = "layer", leaky_slope: float = 0.2) -> "BlockConfig":
        return cls(in_channels=in_channels, n_layers=stack.n_layers, kernel_size=stack.kernel_size,
                   dilations=tuple(stack.dilations), residual_channels=stack.residual_channels,
                   skip_channels=stack.skip_channels,
                   output_channels=(stack.hidden_channels, out_channels),
                   output_activations=("leaky_relu", final_activation), causal=stack.causal,
                   cond_channels=cond_channels, cond_injection=cond_injection, leaky_slope=leaky_slope)


def receptive_field(config) -> Tuple[int, int]:
    """(past_frames, future_frames) seen by one output frame.

    Total receptive field is past + future + 1 = 1 + sum(d * (k - 1)).
    Accepts a BlockConfig or a StackConfig.
    """
    span = sum(d * (config.kernel_size - 1) for d in config.dilations)
    if config.causal:
        return span, 0
    return span // 2, span // 2


def total_receptive_field(config) -> int:
    past, future = receptive_field(config)
    return past + future + 1


class WaveNetBlock(nn.Module):

    def __init__(self, config: BlockConfig):
        super().__init__()
        self.config = config
        R, S = config.residual_channels, config.skip_channels
        hidden, out = config.output_channels
        self.layer_cond = config.cond_channels > 0 and config.cond_injection == "layer"
        in_channels = config.in_channels
        if config.cond_channels > 0 and config.cond_injection == "input":
            in_channels += config.cond_channels

        self.input_proj = nn.Conv1d(in_channels, R, 1)
        self.dilated = nn.ModuleList(
            nn.Conv1d(R, 2 * R, config.kernel_size, dilation=d) for d in config.dilations)
        self.cond_proj = nn.ModuleList(
            nn.Conv1d(config.cond_channels, 2 * R, 1) for _ in config.dilations) if self.layer_cond else None
        self.skip_proj = nn.ModuleList(nn.Conv1d(R, S, 1) for _ in config.dilations)
        # the last layer only feeds the skip sum
        self.res_proj = nn.ModuleList(nn.Conv1d(R, R, 1) for _ in config.dilations[:-1])
        self.out_hidden = nn.Conv1d(S, hidden, 1)
        self.out_final = nn.Conv1d(hidden, out, 1)

    @property
    def out_channels(self) -> int:
        return self.config.output_channels[1]

    def reset_parameters(self, seed: int) -> "WaveNetBlock":
        """Fan-in scaled uniform weights (variance 1/fan_in), zero biases."""
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for name, p in self.named_parameters():
                if name.endswith("bias"):
                    p.zero_()
                else:
                    fan_in = p.shape[1] * p.shape[2]
                    bound = math.sqrt(3.0 / fan_in)
                    p.copy_(torch.rand(p.shape, generator=gen, dtype=torch.float64)
                            .mul_(2 * bound).sub_(bound).to(p.dtype))
        return self

    def _padding(self, dilation: int) -> Tuple[int, int]:
        span = dilation * (self.config.kernel_size - 1)
        return (span, 0) if self.config.causal else (span // 2, span // 2)

    def _activate(self, x: torch.Tensor, name: Optional[str]) -> torch.Tensor:
        if name == "leaky_relu":
            return F.leaky_relu(x, self.config.leaky_slope)
        if name == "tanh":
            return torch.tanh(x)
        return x

    def _gate(self, z: torch.Tensor) -> torch.Tensor:
        R = self.config.residual_channels
        return torch.tanh(z[:, :R]) * torch.sigmoid(z[:, R:])

    def _check(self, x: torch.Tensor, cond: Optional[torch.Tensor], frame_axis: bool = True):
        cfg = self.config
        if x.shape[-1] != cfg.in_channels:
            raise ShapeError(f"block expects {cfg.in_channels} input channels, got {x.shape[-1]}")
        if cfg.cond_channels > 0:
            if cond is None:
                raise ShapeError("block is conditioned but no conditioning was given")
            if cond.shape[-1] != cfg.cond_channels:
                raise ShapeError(f"block expects {cfg.cond_channels} conditioning channels, got {cond.shape[-1]}")
            if cond.shape[:-1] != x.shape[:-1]:
                raise ShapeError(f"conditioning shape {tuple(cond.shape)} does not match input {tuple(x.shape)}")

    def _head(self, skip: torch.Tensor) -> torch.Tensor:
        out = F.leaky_relu(skip, self.config.leaky_slope)
        act_hidden, act_final = self.config.output_activations
        out = self._activate(self.out_hidden(out), act_hidden)
        return self._activate(self.out_final(out), act_final)

    def forward(self, x: torch.Tensor, cond: Optional[torch.Tensor] = None) -> torch.Tensor:
        """[B, T, in] (+ [B, T, cond]) -> [B, T, out]."""
        self._check(x, cond)
        h = x.transpose(1, 2)
        c = cond.transpose(1, 2) if cond is not None and self.config.cond_channels > 0 else None
        if c is not None and not self.layer_cond:
            h = torch.cat([h, c], dim=1)
        h = self.input_proj(h)

        skip = 0.0
        for i, conv in enumerate(self.dilated):
            z = conv(F.pad(h, self._padding(conv.dilation[0])))
            if self.layer_cond:
                z = z + self.cond_proj[i](c)
            g = self._gate(z)
            skip = skip + self.skip_proj[i](g)
            if i < len(self.res_proj):
                h = h + self.res_proj[i](g)
        return self._head(skip).transpose(1, 2)


def init_params(config: BlockConfig, seed: int) -> WaveNetBlock:
    return WaveNetBlock(config).reset_parameters(seed)


def block_forward(block: WaveNetBlock, x: torch.Tensor, cond: Optional[torch.Tensor] = None) -> torch.Tensor:
    return block(x, cond)
