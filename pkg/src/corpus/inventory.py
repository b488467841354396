"""
inventory.py

Phone inventory and frame-wise linguistic labels. The synthetic inventory is
silence, six vowels and five unvoiced fricatives.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from src.config import DEFAULT_PHONES
from src.errors import LabelError, ShapeError

# canonical (F1, F2, F3) in Hz
VOWEL_FORMANTS = {
    "a": (730.0, 1090.0, 2440.0),
    "e": (530.0, 1840.0, 2480.0),
    "i": (270.0, 2290.0, 3010.0),
    "o": (570.0, 840.0, 2410.0),
    "u": (300.0, 870.0, 2240.0),
    "@": (500.0, 1500.0, 2500.0),
}
FORMANT_BANDWIDTHS = (80.0, 100.0, 140.0)

# noise pass-bands (Hz)
CONSONANT_BANDS = {
    "s": (4000.0, 9000.0),
    "sh": (2000.0, 5000.0),
    "f": (1200.0, 7000.0),
    "th": (3000.0, 8000.0),
    "h": (400.0, 3500.0),
}

SILENCE = "sil"


@dataclass(frozen=True)
class PhoneInventory:
    symbols: Tuple[str, ...] = tuple(DEFAULT_PHONES)

    def __post_init__(self):
        symbols = tuple(self.symbols)
        if len(set(symbols)) != len(symbols):
            raise LabelError(f"duplicate phone symbols in {symbols}")
        if SILENCE not in symbols:
            raise LabelError("phone inventory must contain 'sil'")
        if len(symbols) < 2:
            raise LabelError("phone inventory needs at least two symbols")
        object.__setattr__(self, "symbols", symbols)

    @classmethod
    def from_list(cls, symbols: Sequence[str]) -> "PhoneInventory":
        return cls(tuple(symbols))

    @property
    def one_hot_dim(self) -> int:
        return len(self.symbols)

    @property
    def sil_id(self) -> int:
        return self.symbols.index(SILENCE)

    def index(self, symbol: str) -> int:
        try:
            return self.symbols.index(symbol)
        except ValueError:
            raise LabelError(f"unknown phone symbol '{symbol}'") from None

    def kind(self, symbol: str) -> str:
        if symbol == SILENCE:
            return "silence"
        if symbol in VOWEL_FORMANTS:
            return "vowel"
        if symbol in CONSONANT_BANDS:
            return "consonant"
        return "unknown"

    @property
    def vowels(self) -> Tuple[str, ...]:
        return tuple(s for s in self.symbols if self.kind(s) == "vowel")

    @property
    def consonants(self) -> Tuple[str, ...]:
        return tuple(s for s in self.symbols if self.kind(s) == "consonant")


@dataclass(frozen=True)
class LinguisticFrames:
    phone_ids: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.phone_ids, dtype=np.int64)
        if ids.ndim != 1:
            raise ShapeError(f"phone ids must be one per frame, got shape {ids.shape}")
        if ids.size and ids.min() < 0:
            raise LabelError("negative phone id")
        object.__setattr__(self, "phone_ids", ids)

    @property
    def n_frames(self) -> int:
        return len(self.phone_ids)

    def one_hot(self, dim: int) -> np.ndarray:
        if self.phone_ids.size and self.phone_ids.max() >= dim:
            raise LabelError(f"phone id {self.phone_ids.max()} outside a {dim}-symbol inventory")
        return np.eye(dim, dtype=np.float32)[self.phone_ids]
