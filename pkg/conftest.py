import json
from pathlib import Path

import numpy as np
import pytest
import torch

from src.config import (CorpusConfig, ExperimentConfig, MelConfig, ModelConfig, StackConfig, TrainConfig,
                        load_config)
from src.corpus.inventory import PhoneInventory
from src.corpus.singer import generate_singer
from src.corpus.synth import synthesize_utterance
from src.dsp.audio import AudioClip

CONFIG_DIR = Path(__file__).parent / "config"


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run long oracle tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running training oracle, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def mel_config():
    return MelConfig()


@pytest.fixture
def inventory():
    return PhoneInventory()


@pytest.fixture
def micro_model_config():
    """Tiny channels and depths for exact / finite-difference checks."""
    return ModelConfig(
        n_mels=6, n_phones=4, n_speakers=3, speaker_dim=3, embed_dim=5,
        encoder=StackConfig(n_layers=3, kernel_size=3, dilations=[1, 2, 1], residual_channels=4,
                            skip_channels=4, hidden_channels=5),
        long_decoder=StackConfig(n_layers=2, kernel_size=3, dilations=[1, 2], residual_channels=4,
                                 skip_channels=4, hidden_channels=5),
        short_decoder=StackConfig(n_layers=3, kernel_size=2, dilations=[1, 2, 4], residual_channels=4,
                                  skip_channels=4, hidden_channels=5, causal=True),
    )


@pytest.fixture
def toy_config():
    """Full-size features, small corpus, channels scaled down to a tenth."""
    model = ModelConfig().scaled(0.1)
    return ExperimentConfig(
        corpus=CorpusConfig(n_singers=2, songs_per_singer=2, validation_songs=1, song_seconds=3.0,
                            target_songs=3, clone_seconds=4.0, seed=7),
        model=model.model_copy(update={"n_speakers": 4}),
        train=TrainConfig(batch_size=2, valid_seconds=0.5, max_steps=4, adapt_steps=3, clone_steps=3,
                          warmup_steps=2, log_every=1, checkpoint_every=2, seed=3),
    )


@pytest.fixture
def thresholds():
    """Pass marks of the long training runs."""
    with open(CONFIG_DIR / "thresholds.json") as f:
        return json.load(f)


@pytest.fixture
def acceptance_config():
    return load_config(CONFIG_DIR / "acceptance.json", use_env=False)


@pytest.fixture
def sung_utterance(mel_config, inventory):
    """Two seconds of /s a sil/ on one note."""
    spec = generate_singer(11, inventory, singer_id=1)
    f0 = spec.f0_min * 1.2
    phones = [("sil", 0.3), ("s", 0.2), ("a", 1.2), ("sil", 0.3)]
    return synthesize_utterance(spec, phones, [(f0, 2.0)], seed=5, config=mel_config, inventory=inventory)


def make_tone(freq: float, seconds: float = 0.5, sample_rate: int = 32000, amplitude: float = 0.5) -> AudioClip:
    t = np.arange(int(seconds * sample_rate)) / sample_rate
    return AudioClip(amplitude * np.sin(2 * np.pi * freq * t), sample_rate)


@pytest.fixture
def tone():
    return make_tone


@pytest.fixture(autouse=True)
def _single_thread_torch():
    torch.set_num_threads(1)
    yield
