"""
segments.py

Random fixed-length training segments: a valid region of target frames with
context frames on both sides covering the system receptive field. Only the
valid region carries loss weight.
"""

import logging
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence

import numpy as np

from src.blocks.wavenet import receptive_field
from src.config import ModelConfig
from src.corpus.synth import Utterance
from src.errors import CorpusError, LabelError

logger = logging.getLogger(__name__)

VALID_FRAMES = 300


def system_context(config: ModelConfig) -> int:
    """Context frames on each side of a segment.

    Left side needs encoder + D_1 past, the D_2 past field and the one-frame
    history shift; the right side needs less, but the context is kept symmetric.
    """
    enc, _ = receptive_field(config.encoder)
    long_scope, _ = receptive_field(config.long_decoder)
    short_past, _ = receptive_field(config.short_decoder)
    return enc + long_scope + short_past + 1


@dataclass(frozen=True)
class SegmentBatch:
    mel: np.ndarray                   # [B, L, n_mels] float32
    audio: np.ndarray                 # [B, L * hop] float64, sample-aligned with frame 0
    f0_hz: np.ndarray                 # [B, L]
    singer_ids: np.ndarray            # [B] int64
    mask: np.ndarray                  # [B, L] float32, 1 on valid frames
    names: List[str]
    starts: np.ndarray                # [B] first frame of each segment
    phone_ids: Optional[np.ndarray] = None   # [B, L] int64

    @property
    def batch_size(self) -> int:
        return self.mel.shape[0]

    @property
    def n_frames(self) -> int:
        return self.mel.shape[1]


def segment_mask(context_frames: int, valid_frames: int) -> np.ndarray:
    mask = np.zeros(valid_frames + 2 * context_frames, dtype=np.float32)
    mask[context_frames:context_frames + valid_frames] = 1.0
    return mask


def _eligible(dataset: Sequence[Utterance], length: int) -> List[Utterance]:
    keep = []
    for utt in dataset:
        if utt.n_frames < length:
            logger.warning(f"Skipping {utt.name}: {utt.n_frames} frames, a segment needs {length}")
            continue
        keep.append(utt)
    if not keep:
        raise CorpusError(f"every utterance is shorter than the {length}-frame segment length")
    return keep


def segment_iterator(dataset: Sequence[Utterance], batch_size: int = 12, context_frames: int = 82,
                     seed: int = 0, *, valid_frames: int = VALID_FRAMES, hop_length: int = 160,
                     with_labels: bool = True, start_batch: int = 0,
                     n_batches: Optional[int] = None) -> Iterator[SegmentBatch]:
    """Yield batches of uniformly drawn segments.

    Batch i is drawn from its own generator seeded with (seed, i), so the
    stream can be resumed at any batch index. With with_labels=False the
    phone labels are never read.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    length = valid_frames + 2 * context_frames
    pool = _eligible(dataset, length)
    if with_labels:
        missing = [u.name for u in pool if u.ling is None]
        if missing:
            raise LabelError(f"{len(missing)} utterance(s) have no phone labels, e.g. {missing[0]}")
    mask = segment_mask(context_frames, valid_frames)

    i = start_batch
    while n_batches is None or i < start_batch + n_batches:
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        picks = rng.integers(len(pool), size=batch_size)
        mels, audio, f0, phones, names, starts, singers = [], [], [], [], [], [], []
        for p in picks:
            utt = pool[p]
            s = int(rng.integers(utt.n_frames - length + 1))
            mels.append(utt.mel.values[s:s + length])
            f0.append(utt.f0.f0_hz[s:s + length])
            clip = utt.audio.samples[s * hop_length:(s + length) * hop_length]
            audio.append(np.pad(clip, (0, length * hop_length - len(clip))))
            if with_labels:
                phones.append(utt.ling.phone_ids[s:s + length])
            names.append(utt.name)
            starts.append(s)
            singers.append(utt.singer_id)
        yield SegmentBatch(
            mel=np.stack(mels).astype(np.float32),
            audio=np.stack(audio),
            f0_hz=np.stack(f0),
            singer_ids=np.asarray(singers, dtype=np.int64),
            mask=np.tile(mask, (batch_size, 1)),
            names=names,
            starts=np.asarray(starts, dtype=np.int64),
            phone_ids=np.stack(phones).astype(np.int64) if with_labels else None,
        )
        i += 1
