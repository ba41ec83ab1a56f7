"""
Model object for mono audio held in memory
"""
import numpy as np

from service.ufptools import PreconditionException


class AudioBuffer(object):
    """
    Mono waveform samples at a declared sample rate.  This is the unit of all audio i/o and the input
    and output of every waveform transform.
    """

    def __init__(self, samples, sample_rate):
        """
        Create a new buffer

        :param samples: sequence of real amplitudes, nominally in [-1, 1]
        :param sample_rate: samples per second
        :return:
        """
        if sample_rate is None or int(sample_rate) <= 0:
            raise PreconditionException(u"sample rate must be positive, got {x}".format(x=sample_rate))
        self.samples = np.asarray(samples, dtype=np.float64).reshape(-1)
        self.sample_rate = int(sample_rate)

    def __len__(self):
        return self.samples.shape[0]

    def __repr__(self):
        return u"AudioBuffer(n={n}, sample_rate={r})".format(n=len(self), r=self.sample_rate)

    @property
    def duration(self):
        """
        Length of the buffer in seconds

        :return: float seconds
        """
        return len(self) / float(self.sample_rate)

    def require_samples(self):
        """
        Raise if the buffer is empty - downstream operations need at least one sample

        :return: self, for chaining
        """
        if len(self) == 0:
            raise PreconditionException(u"audio buffer is empty")
        return self

    def replace(self, samples):
        """
        New buffer with the same sample rate and different samples

        :param samples: the new samples
        :return: AudioBuffer
        """
        return AudioBuffer(samples, self.sample_rate)

    def fit_length(self, n):
        """
        Trim or zero-pad the buffer to exactly n samples

        :param n: the required length
        :return: AudioBuffer
        """
        return self.replace(fit_length(self.samples, n))


def fit_length(samples, n):
    """
    Trim or zero-pad a sample array to exactly n samples

    :param samples: 1-d array
    :param n: the required length
    :return: new 1-d array of length n
    """
    out = np.zeros(n, dtype=np.float64)
    m = min(n, samples.shape[0])
    out[:m] = samples[:m]
    return out
