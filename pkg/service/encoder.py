"""
The surrogate speaker encoder and cosine similarity.

An embedding is computed from the log-mel spectrogram of the audio:

::

    P   = |STFT(x)|^2
    M   = F P                       mel energies, F the triangular filterbank
    Lg  = log(M + 1e-6)
    A   = Lg - bandmean(Lg)         each frame shifted to zero mean over the bands
    f   = [mean_t(A), std_t(A)]     pooled over frames, std = sqrt(var + 1e-8)
    q   = W f                       W a fixed seeded projection with orthonormal rows
    e   = q / |q|

Removing the per-frame band mean makes the embedding independent of the playback gain.  Every step
has a closed-form derivative, and Encoder.backward() walks them in reverse, finishing with the STFT
adjoint, so the gradient of any function of the embedding can be taken with respect to the samples.

Embeddings are plain 1-d numpy arrays of length dim.
"""
from functools import lru_cache

import numpy as np

from service.core import app
from service.dsp import stft_array, stft_adjoint_array, mel_filterbank
from service.models import StftParams
from service.ufptools import ServiceException, ShapeMismatchException, ConfigurationException, make_rng, stable_hash

LOG_FLOOR = 1e-6
STD_EPS = 1e-8


class SimilarityException(ServiceException):
    """
    Exception class for similarities which are undefined, i.e. involving a zero vector
    """
    tag = "similarity"


class EncoderConfig(object):
    """
    Settings of the surrogate encoder: mel bands, embedding dimension, projection seed, and the transform
    and sample rate it analyses with
    """

    def __init__(self, n_mels=40, dim=64, projection_seed=7, stft=None, sample_rate=16000):
        stft = stft or StftParams()
        if n_mels < 2:
            raise ConfigurationException(u"ENCODER_N_MELS: must be at least 2, got {x}".format(x=n_mels))
        if dim < 1 or dim > 2 * n_mels:
            raise ConfigurationException(u"ENCODER_DIM: must be between 1 and 2 * ENCODER_N_MELS = {m}, got {x}".format(
                m=2 * n_mels, x=dim))
        self.n_mels = int(n_mels)
        self.dim = int(dim)
        self.projection_seed = int(projection_seed)
        self.stft = stft
        self.sample_rate = int(sample_rate)

    def as_dict(self):
        return {"n_mels": self.n_mels, "dim": self.dim, "projection_seed": self.projection_seed,
                "stft": self.stft.as_dict(), "sample_rate": self.sample_rate}

    def __eq__(self, other):
        return isinstance(other, EncoderConfig) and self.as_dict() == other.as_dict()

    def __ne__(self, other):
        return not self.__eq__(other)

    def __hash__(self):
        return hash(config_hash(self))


def config_hash(cfg):
    """
    Stable hash of an encoder configuration, used in cache keys

    :param cfg: EncoderConfig
    :return: hex string
    """
    return stable_hash(cfg.as_dict())


class SpeakerEncoder(object):
    """
    Base class for speaker encoders.  The optimiser and the metrics only use this contract, so any
    encoder providing it can be substituted for the surrogate.
    """

    @property
    def dim(self):
        raise NotImplementedError()

    def embed(self, x):
        """
        Embed an audio buffer

        :param x: AudioBuffer
        :return: 1-d unit-norm array
        """
        raise NotImplementedError()

    def embed_adjoint(self, x, upstream):
        """
        Gradient over the samples of x given a gradient over its embedding

        :param x: AudioBuffer
        :param upstream: 1-d gradient over the embedding
        :return: 1-d gradient over the samples
        """
        raise NotImplementedError()


class EncoderTape(object):
    """
    Intermediate values of one forward pass, kept for the backward pass
    """

    def __init__(self, n_samples, spec, mel, level, mean, std, projected, embedding):
        self.n_samples = n_samples
        self.spec = spec
        self.mel = mel
        self.level = level
        self.mean = mean
        self.std = std
        self.projected = projected
        self.embedding = embedding


class Encoder(SpeakerEncoder):
    """
    The log-mel mean/std surrogate encoder.  The filterbank and projection are built once per instance
    and never modified, so an instance can be shared between threads.
    """

    def __init__(self, cfg=None):
        self.cfg = cfg or EncoderConfig()
        self.filterbank = mel_filterbank(self.cfg.stft, self.cfg.n_mels, self.cfg.sample_rate)
        self.filterbank.setflags(write=False)
        self.projection = projection_matrix(self.cfg.dim, 2 * self.cfg.n_mels, self.cfg.projection_seed)

    @property
    def dim(self):
        return self.cfg.dim

    @property
    def hash(self):
        return config_hash(self.cfg)

    def forward(self, x):
        """
        Embed and keep the intermediate values

        :param x: AudioBuffer of at least one window
        :return: EncoderTape
        """
        samples = x.samples if hasattr(x, "samples") else np.asarray(x, dtype=np.float64)
        spec = stft_array(samples, self.cfg.stft)
        power = spec.real ** 2 + spec.imag ** 2
        mel = self.filterbank.dot(power) + LOG_FLOOR
        logmel = np.log(mel)
        level = logmel - logmel.mean(axis=0, keepdims=True)
        mean = level.mean(axis=1)
        std = np.sqrt(np.mean((level - mean[:, None]) ** 2, axis=1) + STD_EPS)
        projected = self.projection.dot(np.concatenate([mean, std]))
        norm = np.linalg.norm(projected)
        if norm == 0.0:
            raise SimilarityException(u"projected features vanish; the embedding is undefined")
        return EncoderTape(samples.shape[0], spec, mel, level, mean, std, projected, projected / norm)

    def backward(self, tape, upstream):
        """
        Reverse pass of forward()

        :param tape: EncoderTape from forward()
        :param upstream: 1-d gradient over the embedding
        :return: 1-d gradient over the samples
        """
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != (self.dim,):
            raise ShapeMismatchException(u"embedding gradient must have shape ({d},), got {x}".format(
                d=self.dim, x=upstream.shape))
        e = tape.embedding
        g_q = (upstream - e * e.dot(upstream)) / np.linalg.norm(tape.projected)
        g_f = self.projection.T.dot(g_q)
        n_mels = self.cfg.n_mels
        g_mean, g_std = g_f[:n_mels], g_f[n_mels:]

        n_frames = tape.level.shape[1]
        centred = tape.level - tape.mean[:, None]
        g_level = (g_mean[:, None] + g_std[:, None] * centred / tape.std[:, None]) / n_frames
        g_logmel = g_level - g_level.mean(axis=0, keepdims=True)
        g_power = self.filterbank.T.dot(g_logmel / tape.mel)
        return stft_adjoint_array(2.0 * tape.spec * g_power, self.cfg.stft, tape.n_samples)

    def embed(self, x):
        return self.forward(x).embedding

    def embed_adjoint(self, x, upstream):
        return self.backward(self.forward(x), upstream)


def projection_matrix(dim, n_features, seed):
    """
    A dim x n_features matrix with orthonormal rows, drawn from the seeded generator

    :param dim: output dimension
    :param n_features: input dimension, at least dim
    :param seed: projection seed
    :return: read-only array
    """
    rng = make_rng(seed, "encoder-projection")
    q, r = np.linalg.qr(rng.standard_normal((n_features, dim)))
    # fix the signs so the factorisation is unique
    q = q * np.sign(np.diag(r))[None, :]
    w = np.ascontiguousarray(q.T)
    w.setflags(write=False)
    return w


@lru_cache(maxsize=8)
def get_encoder(cfg):
    """
    Shared Encoder instance for a configuration

    :param cfg: EncoderConfig
    :return: Encoder
    """
    app.logger.debug(u"Building surrogate encoder {x}".format(x=cfg.as_dict()))
    return Encoder(cfg)


def as_encoder(encoder):
    """
    Accept either an encoder or an encoder configuration

    :param encoder: SpeakerEncoder, EncoderConfig or None for the defaults
    :return: SpeakerEncoder
    """
    if isinstance(encoder, SpeakerEncoder):
        return encoder
    return get_encoder(encoder or EncoderConfig())


def embed(x, cfg=None):
    """
    Embed an audio buffer with the surrogate encoder

    :param x: AudioBuffer
    :param cfg: EncoderConfig; defaults apply when None
    :return: 1-d unit-norm array
    """
    return as_encoder(cfg).embed(x)


def embed_adjoint(x, upstream, cfg=None):
    """
    Gradient over the samples of x given a gradient over embed(x, cfg)

    :param x: AudioBuffer
    :param upstream: 1-d gradient over the embedding
    :param cfg: EncoderConfig
    :return: 1-d array
    """
    return as_encoder(cfg).embed_adjoint(x, upstream)


def cosine_similarity(a, b):
    """
    e1 . e2 / (|e1| |e2|)

    :param a: 1-d array
    :param b: 1-d array of the same length
    :return: float in [-1, 1]
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchException(u"cannot compare embeddings of shape {x} and {y}".format(x=a.shape, y=b.shape))
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise SimilarityException(u"cosine similarity is undefined for a zero vector")
    # exact at the extremes, which rounding would otherwise miss by an ulp
    if np.array_equal(a, b):
        return 1.0
    if np.array_equal(a, -b):
        return -1.0
    return float(np.clip(a.dot(b) / (na * nb), -1.0, 1.0))
