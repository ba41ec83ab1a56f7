"""
Fixtures shared by the unit and functional tests: signals, small transform and encoder configurations,
and a test case base class which restores the application configuration after each test.
"""
import os, shutil, tempfile
from unittest import TestCase

import numpy as np

from service.core import app
from service.encoder import EncoderConfig, Encoder, SpeakerEncoder
from service.models import AudioBuffer, StftParams, Ufp
from service.synth import Voice, synthesise_utterance
from service.ufptools import make_rng

SR = 16000

# small transform used wherever the default 1024/256 would only make the test slower
TOY_STFT = StftParams(256, 64)

TOY_OVERRIDES = ["stft.n_fft=256", "stft.hop=64", "ufp.frame_len=8", "encoder.n_mels=20", "encoder.dim=16",
                 "train.iterations=3", "train.aug_jitter_max=64", "eval.n_trials=20"]


def tone(freq, seconds, sr=SR, amp=0.5, phase=0.0):
    t = np.arange(int(round(seconds * sr))) / float(sr)
    return AudioBuffer(amp * np.sin(2.0 * np.pi * freq * t + phase), sr)


def noise(seconds, sr=SR, std=0.1, seed=0):
    n = int(round(seconds * sr))
    return AudioBuffer(std * make_rng(seed, "test-noise").standard_normal(n), sr)


def speech(seconds, speaker=0, utterance=0, sr=SR, seed=1234):
    """
    A synthetic utterance of one of the seeded voices
    """
    voice = Voice.draw(seed, speaker)
    return AudioBuffer(synthesise_utterance(voice, seconds, sr, make_rng(seed, "test-utterance", speaker, utterance)), sr)


def toy_ufp(frame_len=4, noise_level=0.4, smoother_k=3, seed=0, stft=TOY_STFT):
    return Ufp.random(stft, frame_len, noise_level, smoother_k, make_rng(seed, "test-ufp"))


def toy_encoder_config(stft=TOY_STFT):
    return EncoderConfig(n_mels=20, dim=16, projection_seed=7, stft=stft, sample_rate=SR)


def toy_encoder(stft=TOY_STFT):
    return Encoder(toy_encoder_config(stft))


class VectorEncoder(SpeakerEncoder):
    """
    Encoder which takes the samples of a buffer as its embedding, so tests can place embeddings exactly
    """

    @property
    def dim(self):
        return 2

    def embed(self, x):
        return x.samples.copy()

    def embed_adjoint(self, x, upstream):
        return np.asarray(upstream, dtype=np.float64).copy()


def vec(a, b):
    return AudioBuffer([a, b], SR)


def relative_error(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


class UfpTestCase(TestCase):
    """
    Snapshots app.config and gives each test a scratch directory, both restored in tearDown
    """

    def setUp(self):
        super(UfpTestCase, self).setUp()
        self._config = dict(app.config)
        self._saved_threads = os.environ.pop("UFP_THREADS", None)
        self.tmp = tempfile.mkdtemp(prefix="ufp-test-")

    def tearDown(self):
        app.config.clear()
        app.config.update(self._config)
        if self._saved_threads is not None:
            os.environ["UFP_THREADS"] = self._saved_threads
        else:
            os.environ.pop("UFP_THREADS", None)
        shutil.rmtree(self.tmp, ignore_errors=True)
        super(UfpTestCase, self).tearDown()

    def path(self, *parts):
        return os.path.join(self.tmp, *parts)
