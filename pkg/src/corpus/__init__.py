from src.corpus.container import load_features, read_container, save_features, write_container
from src.corpus.dataset import (Corpus, ProtocolCorpora, build_corpus, build_protocol_corpora, cloning_subset,
                                corpus_fingerprint)
from src.corpus.inventory import LinguisticFrames, PhoneInventory
from src.corpus.labels import load_recording, read_f0_file, read_phone_timing
from src.corpus.segments import SegmentBatch, segment_iterator, system_context
from src.corpus.singer import SingerSpec, generate_singer
from src.corpus.synth import Utterance, random_song, synthesize_utterance

__all__ = [
    "load_features", "read_container", "save_features", "write_container",
    "Corpus", "ProtocolCorpora", "build_corpus", "build_protocol_corpora", "cloning_subset", "corpus_fingerprint",
    "LinguisticFrames", "PhoneInventory",
    "load_recording", "read_f0_file", "read_phone_timing",
    "SegmentBatch", "segment_iterator", "system_context",
    "SingerSpec", "generate_singer",
    "Utterance", "random_song", "synthesize_utterance",
]
