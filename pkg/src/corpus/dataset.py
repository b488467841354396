"""
dataset.py

Synthetic multi-singer corpora with per-singer train/validation splits, the
held-out target singer set and the short cloning subset.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np
from joblib import Parallel, delayed

from src.config import ExperimentConfig, MelConfig
from src.corpus.inventory import PhoneInventory
from src.corpus.singer import generate_singer
from src.corpus.synth import Utterance, random_song, synthesize_utterance
from src.errors import CorpusError

logger = logging.getLogger(__name__)


@dataclass
class Corpus:
    train: List[Utterance] = field(default_factory=list)
    validation: List[Utterance] = field(default_factory=list)

    @property
    def singer_ids(self) -> List[int]:
        return sorted({u.singer_id for u in self.train + self.validation})

    @property
    def train_seconds(self) -> float:
        return sum(u.duration for u in self.train)


@dataclass
class ProtocolCorpora:
    multi: Corpus
    target: Corpus
    clone: List[Utterance]

    @property
    def target_singer(self) -> int:
        return self.target.singer_ids[0]


def _singer_seed(seed: int, singer_id: int) -> int:
    return int(np.random.SeedSequence([seed, singer_id]).generate_state(1)[0])


def _make_song(seed: int, singer_id: int, song: int, mel_config: MelConfig,
               inventory: PhoneInventory, song_seconds: float) -> Utterance:
    spec = generate_singer(_singer_seed(seed, singer_id), inventory, singer_id=singer_id)
    rng = np.random.default_rng(np.random.SeedSequence([seed, singer_id, song]))
    phones, notes = random_song(spec, inventory, song_seconds, rng)
    return synthesize_utterance(spec, phones, notes, seed=int(rng.integers(2 ** 31)),
                                config=mel_config, inventory=inventory,
                                name=f"singer{singer_id:02d}_song{song:02d}")


def build_corpus(n_singers: int, songs_per_singer: int, split: int, seed: int, *,
                 mel_config: MelConfig, inventory: PhoneInventory, song_seconds: float = 15.0,
                 first_singer_id: int = 0, n_jobs: int = 1) -> Corpus:
    """Generate songs for singers first_singer_id .. first_singer_id + n_singers - 1.

    The last `split` songs of every singer go to validation.
    """
    if n_singers < 1:
        raise CorpusError(f"need at least one singer, got {n_singers}")
    if seed < 0:
        raise CorpusError(f"corpus seed must be non-negative, got {seed}")
    if songs_per_singer - split < 1:
        raise CorpusError(f"{songs_per_singer} songs with {split} held out leaves no training songs")

    jobs = [(sid, song) for sid in range(first_singer_id, first_singer_id + n_singers)
            for song in range(songs_per_singer)]
    logger.info(f"Synthesising {len(jobs)} songs for {n_singers} singer(s) (n_jobs={n_jobs})")
    songs = Parallel(n_jobs=n_jobs)(
        delayed(_make_song)(seed, sid, song, mel_config, inventory, song_seconds) for sid, song in jobs)

    corpus = Corpus()
    for (sid, song), utt in zip(jobs, songs):
        if song >= songs_per_singer - split:
            corpus.validation.append(utt)
        else:
            corpus.train.append(utt)
    logger.info(f"Corpus: {len(corpus.train)} train / {len(corpus.validation)} validation "
                f"({corpus.train_seconds / 60:.1f} min of training audio)")
    return corpus


def cloning_subset(utterances: List[Utterance], seconds: float) -> List[Utterance]:
    """Leading utterances until the duration budget is reached (overshoot < one utterance)."""
    subset, total = [], 0.0
    for utt in utterances:
        if total >= seconds:
            break
        subset.append(utt)
        total += utt.duration
    if total < seconds:
        logger.warning(f"Only {total:.1f}s available for a {seconds:.1f}s cloning subset")
    return subset


def build_protocol_corpora(cfg: ExperimentConfig) -> ProtocolCorpora:
    c = cfg.corpus
    inventory = PhoneInventory.from_list(c.phones)
    multi = build_corpus(c.n_singers, c.songs_per_singer, c.validation_songs, c.seed,
                         mel_config=cfg.mel, inventory=inventory, song_seconds=c.song_seconds,
                         first_singer_id=0, n_jobs=c.n_jobs)
    target = build_corpus(1, c.target_songs, 1, c.seed, mel_config=cfg.mel, inventory=inventory,
                          song_seconds=c.song_seconds, first_singer_id=c.n_singers, n_jobs=c.n_jobs)
    return ProtocolCorpora(multi=multi, target=target, clone=cloning_subset(target.train, c.clone_seconds))


def corpus_fingerprint(utterances: List[Utterance]) -> str:
    h = hashlib.sha256()
    for utt in utterances:
        h.update(utt.name.encode("utf-8"))
        h.update(np.int64(utt.singer_id).tobytes())
        h.update(utt.mel.values.tobytes())
    return h.hexdigest()[:16]
