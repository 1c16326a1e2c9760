import numpy as np
import pytest

from accentlab.audio import AudioClip
from accentlab.phones import default_inventory
from accentlab.toydata import make_toy_corpus


@pytest.fixture(scope="session")
def inventory():
    return default_inventory()


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """2 accents x 2 speakers x 3 utts; shared by the fast unit tests."""
    root = tmp_path_factory.mktemp("toy_small")
    entries = make_toy_corpus(2, 2, 3, np.random.default_rng(123), root)
    return root, entries


@pytest.fixture()
def tone_clip():
    t = np.arange(16000) / 16000.0
    return AudioClip(0.5 * np.sin(2 * np.pi * 440.0 * t), 16000)


@pytest.fixture()
def noise_clip():
    rng = np.random.default_rng(7)
    return AudioClip(0.2 * rng.standard_normal(16000), 16000)
