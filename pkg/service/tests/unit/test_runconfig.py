import os

import numpy as np

from service.core import app, set_option
from service.runconfig import RunConfig
from service.tests.fixtures import UfpTestCase, TOY_OVERRIDES
from service.ufptools import ConfigurationException


class TestRunConfig(UfpTestCase):

    def _broken(self, name, value):
        app.config[name] = value
        with self.assertRaises(ConfigurationException) as cm:
            RunConfig.from_config(app.config)
        app.config[name] = self._config[name]
        return str(cm.exception)

    def test_01_defaults(self):
        run = RunConfig.from_config(app.config)
        assert run.stft.n_fft == 1024 and run.stft.hop == 256
        assert run.frame_len == 120
        assert run.noise_level == 0.4
        assert run.smoother_k == 5
        assert run.encoder.n_mels == 40 and run.encoder.dim == 64
        assert run.train.iterations == 300
        assert run.threshold is None
        assert run.threads >= 1

    def test_02_echo(self):
        run = RunConfig.from_config(app.config)
        echo = " ".join(u"{k}={v}".format(k=k, v=v) for k, v in run.echo())
        assert echo.startswith("eta=0.4 frame_len=120 train_ratio=0.7 iterations=300")
        assert echo.endswith("n_fft=1024 hop=256 seed=1234")

    def test_03_overrides(self):
        for option in TOY_OVERRIDES:
            set_option(option)
        run = RunConfig.from_config(app.config)
        assert run.stft.n_fft == 256 and run.stft.hop == 64
        assert run.encoder.stft == run.stft
        assert run.encoder.dim == 16
        assert run.train.iterations == 3
        assert run.n_trials == 20

    def test_04_threads(self):
        os.environ["UFP_THREADS"] = "3"
        assert RunConfig.from_config(app.config).threads == 3

    def test_05_invalid_settings_named(self):
        cases = [
            ("STFT_HOP", 300), ("STFT_WINDOW", "hamming"), ("AUDIO_SAMPLE_RATE", 0), ("ENCODER_DIM", 200),
            ("TRAIN_ITERATIONS", 0), ("TRAIN_MASK_RATIO", 1.5), ("UFP_FRAME_LEN", 0), ("UFP_NOISE_LEVEL", -0.1),
            ("UFP_SMOOTHER_K", 4), ("TRAIN_RATIO", 1.0), ("EVAL_N_TRIALS", 1), ("EVAL_SEG_FRAME_MS", 0),
            ("EVAL_BENCH_DURATIONS", []), ("EVAL_BENCH_REPEATS", 2)
        ]
        for name, value in cases:
            message = self._broken(name, value)
            assert name.split("_")[0] in message, (name, message)

    def test_06_mask_thresholds(self):
        app.config["TRAIN_MASK_THRESHOLDS"] = [1.0, 2.0]
        with self.assertRaises(ConfigurationException):
            RunConfig.from_config(app.config)
        app.config["TRAIN_MASK_THRESHOLDS"] = list(np.zeros(513))
        with self.assertRaises(ConfigurationException):
            RunConfig.from_config(app.config)
        app.config["TRAIN_MASK_THRESHOLDS"] = list(np.full(513, 0.5))
        assert RunConfig.from_config(app.config).train.mask_thresholds.shape == (513,)
