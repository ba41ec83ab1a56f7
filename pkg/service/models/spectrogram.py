"""
Model objects for short-time Fourier transform parameters and spectrograms
"""
import numpy as np

from service.ufptools import PreconditionException, ShapeMismatchException


class StftParams(object):
    """
    Transform parameters: window size, hop and window kind.  The hop must divide the window size, and
    the transform is onesided with n_fft / 2 + 1 bins.
    """

    def __init__(self, n_fft=1024, hop=256, window="hann"):
        if n_fft < 2 or n_fft % 2 != 0:
            raise PreconditionException(u"n_fft must be an even number of at least 2, got {x}".format(x=n_fft))
        if hop < 1 or n_fft % hop != 0:
            raise PreconditionException(u"hop {h} must divide n_fft {n}".format(h=hop, n=n_fft))
        if window != "hann":
            raise PreconditionException(u"unsupported window kind {x}".format(x=window))
        self.n_fft = int(n_fft)
        self.hop = int(hop)
        self.window = window

    @property
    def bins(self):
        """
        Number of onesided frequency bins B

        :return: n_fft / 2 + 1
        """
        return self.n_fft // 2 + 1

    @property
    def overlap(self):
        """
        How many frames cover each interior sample

        :return: n_fft / hop
        """
        return self.n_fft // self.hop

    def as_dict(self):
        return {"n_fft": self.n_fft, "hop": self.hop, "window": self.window}

    def __eq__(self, other):
        return isinstance(other, StftParams) and self.as_dict() == other.as_dict()

    def __ne__(self, other):
        return not self.__eq__(other)

    def __hash__(self):
        return hash((self.n_fft, self.hop, self.window))

    def __repr__(self):
        return u"StftParams(n_fft={n}, hop={h}, window={w})".format(n=self.n_fft, h=self.hop, w=self.window)


class Spectrogram(object):
    """
    Complex B x L matrix held as separate real and imaginary planes, together with the parameters of
    the transform which produced it
    """

    def __init__(self, re, im, params, sample_rate=None):
        re = np.asarray(re, dtype=np.float64)
        im = np.asarray(im, dtype=np.float64)
        if re.shape != im.shape or re.ndim != 2:
            raise ShapeMismatchException(u"real and imaginary planes differ: {x} vs {y}".format(x=re.shape, y=im.shape))
        if re.shape[0] != params.bins:
            raise ShapeMismatchException(u"expected {b} bins, got {x}".format(b=params.bins, x=re.shape[0]))
        self.re = re
        self.im = im
        self.params = params
        self.sample_rate = sample_rate

    @property
    def shape(self):
        return self.re.shape

    @property
    def n_frames(self):
        return self.re.shape[1]

    @classmethod
    def from_complex(cls, z, params, sample_rate=None):
        return cls(np.real(z), np.imag(z), params, sample_rate)

    @classmethod
    def zeros(cls, n_frames, params, sample_rate=None):
        return cls(np.zeros((params.bins, n_frames)), np.zeros((params.bins, n_frames)), params, sample_rate)

    def to_complex(self):
        return self.re + 1j * self.im

    def power(self):
        """
        Squared magnitude |S|^2

        :return: B x L real array
        """
        return self.re * self.re + self.im * self.im

    def inner(self, other):
        """
        Real inner product treating the spectrogram as a vector of (re, im) pairs

        :param other: Spectrogram of the same shape
        :return: float
        """
        if self.shape != other.shape:
            raise ShapeMismatchException(u"cannot take the inner product of {x} and {y}".format(x=self.shape, y=other.shape))
        return float(np.sum(self.re * other.re) + np.sum(self.im * other.im))

    def __add__(self, other):
        return Spectrogram(self.re + other.re, self.im + other.im, self.params, self.sample_rate)

    def __sub__(self, other):
        return Spectrogram(self.re - other.re, self.im - other.im, self.params, self.sample_rate)

    def scale(self, c):
        return Spectrogram(self.re * c, self.im * c, self.params, self.sample_rate)
