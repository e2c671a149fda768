import numpy as np
import pytest

from lpwavenet.audio import AudioBuffer
from lpwavenet.net import desk_config
from lpwavenet.synthetic import synthetic_utterance


def micro_config(head="wn_lp", **overrides):
    """Smallest config that exercises every code path."""
    base = dict(dilation_cycle=(1, 2), repeats=1, residual_channels=4,
                skip_channels=4, lpc_order=4, hop_samples=8, mixture_count=2)
    base.update(overrides)
    return desk_config(head, **base)


@pytest.fixture(scope="session")
def utterance_1s():
    return synthetic_utterance(duration_s=1.0, seed=11)


@pytest.fixture(scope="session")
def utterance_short():
    return synthetic_utterance(duration_s=0.25, seed=12)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def sine_buffer(freq=200.0, duration=1.0, sr=16000, amp=0.5):
    t = np.arange(int(duration * sr)) / sr
    return AudioBuffer(amp * np.sin(2 * np.pi * freq * t), sr)
