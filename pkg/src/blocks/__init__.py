from src.blocks.incremental import IncrementalState, block_forward_incremental, fresh_state
from src.blocks.wavenet import (BlockConfig, WaveNetBlock, block_forward, init_params, receptive_field,
                                total_receptive_field)

__all__ = [
    "BlockConfig", "WaveNetBlock", "block_forward", "init_params", "receptive_field", "total_receptive_field",
    "IncrementalState", "block_forward_incremental", "fresh_state",
]
