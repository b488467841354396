"""
singer.py

Random but reproducible singer voices for the synthetic corpus: formants
jittered around canonical vowel charts, an octave of F0 range and a vibrato.
"""

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from src.corpus.inventory import CONSONANT_BANDS, FORMANT_BANDWIDTHS, VOWEL_FORMANTS, PhoneInventory


@dataclass(frozen=True)
class SingerSpec:
    singer_id: int
    formants: Dict[str, Tuple[Tuple[float, float], ...]] = field(repr=False)
    consonant_bands: Dict[str, Tuple[float, float]] = field(repr=False)
    f0_min: float = 110.0
    f0_max: float = 220.0
    vibrato_rate: float = 5.5
    vibrato_depth_cents: float = 15.0

    def __post_init__(self):
        for vowel, peaks in self.formants.items():
            freqs = [f for f, _ in peaks]
            if freqs != sorted(freqs):
                raise ValueError(f"formants of /{vowel}/ must ascend, got {freqs}")
        if not 0 < self.f0_min < self.f0_max:
            raise ValueError(f"bad F0 range [{self.f0_min}, {self.f0_max}]")

    def in_range(self, f0_hz: float) -> bool:
        return self.f0_min <= f0_hz <= self.f0_max


def generate_singer(seed: int, inventory: PhoneInventory, singer_id: int = 0) -> SingerSpec:
    rng = np.random.default_rng(seed)
    tract = rng.uniform(0.85, 1.15)

    formants = {}
    for vowel in inventory.vowels:
        freqs = np.sort(np.array(VOWEL_FORMANTS[vowel]) * tract * rng.uniform(0.94, 1.06, size=3))
        bws = np.array(FORMANT_BANDWIDTHS) * rng.uniform(0.8, 1.2, size=3)
        formants[vowel] = tuple((float(f), float(b)) for f, b in zip(freqs, bws))

    bands = {}
    for consonant in inventory.consonants:
        lo, hi = CONSONANT_BANDS[consonant]
        shift = tract * rng.uniform(0.95, 1.05)
        bands[consonant] = (float(lo * shift), float(min(hi * shift, 14000.0)))

    f0_min = float(rng.uniform(110.0, 240.0))
    return SingerSpec(
        singer_id=singer_id,
        formants=formants,
        consonant_bands=bands,
        f0_min=f0_min,
        f0_max=2.0 * f0_min,
        vibrato_rate=float(rng.uniform(4.5, 6.5)),
        # stays under 2% of the commanded note
        vibrato_depth_cents=float(rng.uniform(10.0, 25.0)),
    )
