"""
Fully resolved, validated configuration for one command.

RunConfig.from_config() turns the flat app.config settings into the typed objects the modules take, so
that nothing is read from configuration half way through a run and every invalid setting is reported
up front, by key.
"""
import numpy as np

from service.encoder import EncoderConfig
from service.models import StftParams
from service.optim import TrainConfig
from service.ufptools import ConfigurationException, PreconditionException, thread_count


class RunConfig(object):
    """
    Typed view of the configuration
    """

    def __init__(self, stft, encoder, train, frame_len, noise_level, smoother_k, sample_rate, seed, threads,
                 train_ratio, threshold, n_trials, seg_frame_ms, bench_durations, bench_repeats):
        self.stft = stft
        self.encoder = encoder
        self.train = train
        self.frame_len = frame_len
        self.noise_level = noise_level
        self.smoother_k = smoother_k
        self.sample_rate = sample_rate
        self.seed = seed
        self.threads = threads
        self.train_ratio = train_ratio
        self.threshold = threshold
        self.n_trials = n_trials
        self.seg_frame_ms = seg_frame_ms
        self.bench_durations = bench_durations
        self.bench_repeats = bench_repeats

    @classmethod
    def from_config(cls, config):
        """
        Resolve and validate

        :param config: app.config or any mapping of setting names
        :return: RunConfig
        """
        try:
            stft = StftParams(config.get("STFT_N_FFT"), config.get("STFT_HOP"), config.get("STFT_WINDOW"))
        except PreconditionException as e:
            raise ConfigurationException(u"STFT_N_FFT/STFT_HOP/STFT_WINDOW: {x}".format(x=e))

        sample_rate = config.get("AUDIO_SAMPLE_RATE")
        if sample_rate <= 0:
            raise ConfigurationException(u"AUDIO_SAMPLE_RATE: must be positive, got {x}".format(x=sample_rate))

        encoder = EncoderConfig(config.get("ENCODER_N_MELS"), config.get("ENCODER_DIM"),
                                config.get("ENCODER_PROJECTION_SEED"), stft, sample_rate)
        train = TrainConfig.from_config(config)
        if train.mask_thresholds is not None:
            if train.mask_thresholds.shape != (stft.bins,):
                raise ConfigurationException(u"TRAIN_MASK_THRESHOLDS: expected {b} caps, got {x}".format(
                    b=stft.bins, x=train.mask_thresholds.shape[0] if train.mask_thresholds.ndim else 1))
            if np.any(train.mask_thresholds <= 0):
                raise ConfigurationException(u"TRAIN_MASK_THRESHOLDS: caps must be positive")

        frame_len = config.get("UFP_FRAME_LEN")
        if frame_len < 1:
            raise ConfigurationException(u"UFP_FRAME_LEN: must be at least 1, got {x}".format(x=frame_len))
        noise_level = config.get("UFP_NOISE_LEVEL")
        if noise_level < 0:
            raise ConfigurationException(u"UFP_NOISE_LEVEL: must be non-negative, got {x}".format(x=noise_level))
        smoother_k = config.get("UFP_SMOOTHER_K")
        if smoother_k < 1 or smoother_k % 2 != 1:
            raise ConfigurationException(u"UFP_SMOOTHER_K: must be odd and at least 1, got {x}".format(x=smoother_k))

        train_ratio = config.get("TRAIN_RATIO")
        if not 0.0 < train_ratio < 1.0:
            raise ConfigurationException(u"TRAIN_RATIO: must lie in (0, 1), got {x}".format(x=train_ratio))
        n_trials = config.get("EVAL_N_TRIALS")
        if n_trials < 2:
            raise ConfigurationException(u"EVAL_N_TRIALS: must be at least 2, got {x}".format(x=n_trials))
        seg_frame_ms = config.get("EVAL_SEG_FRAME_MS")
        if seg_frame_ms <= 0:
            raise ConfigurationException(u"EVAL_SEG_FRAME_MS: must be positive, got {x}".format(x=seg_frame_ms))
        durations = list(config.get("EVAL_BENCH_DURATIONS"))
        if not durations or any(d <= 0 for d in durations):
            raise ConfigurationException(u"EVAL_BENCH_DURATIONS: must be a non-empty list of positive seconds")
        repeats = config.get("EVAL_BENCH_REPEATS")
        if repeats < 5:
            raise ConfigurationException(u"EVAL_BENCH_REPEATS: must be at least 5, got {x}".format(x=repeats))

        return cls(stft, encoder, train, int(frame_len), float(noise_level), int(smoother_k), int(sample_rate),
                   int(config.get("SEED")), thread_count(config.get("THREADS", 0)), float(train_ratio),
                   config.get("EVAL_THRESHOLD"), int(n_trials), seg_frame_ms, durations, int(repeats))

    def echo(self):
        """
        The settings a training run depends on, as name/value pairs for the console
        """
        return [("eta", self.noise_level), ("frame_len", self.frame_len), ("train_ratio", self.train_ratio),
                ("iterations", self.train.iterations), ("lambda", self.train.lam),
                ("learning_rate", self.train.learning_rate), ("n_fft", self.stft.n_fft), ("hop", self.stft.hop),
                ("seed", self.seed)]
