"""
Model objects for the universal frequential perturbation and the tiling augmentation, and the UFP1
binary container they are stored in.

The UFP1 layout, all little-endian:

::

    4 bytes   magic "UFP1"
    5 x u32   B, L_u, n_fft, hop, smoother_k
    1 x f64   noise level
    B*L_u f64 delta_re, row major
    B*L_u f64 delta_im, row major
"""
import struct

import numpy as np

from service.models.spectrogram import StftParams
from service.ufptools import ServiceException, PreconditionException, ShapeMismatchException

MAGIC = b"UFP1"
HEADER = struct.Struct("<4s5Id")


class UfpFormatException(ServiceException):
    """
    Exception class for files which are not valid UFP1 containers
    """
    tag = "ufp-format"


class Ufp(object):
    """
    The learnable perturbation: real and imaginary planes of shape B x L_u, the noise level that scales
    it at application time, the transform parameters it was learned under and the smoother width.
    """

    def __init__(self, delta_re, delta_im, noise_level, stft, smoother_k=5):
        delta_re = np.array(delta_re, dtype=np.float64)
        delta_im = np.array(delta_im, dtype=np.float64)
        if delta_re.ndim != 2 or delta_re.shape != delta_im.shape:
            raise ShapeMismatchException(u"perturbation planes must share a 2-d shape, got {x} and {y}".format(
                x=delta_re.shape, y=delta_im.shape))
        if delta_re.shape[0] != stft.bins:
            raise ShapeMismatchException(u"perturbation has {x} bins, transform has {y}".format(x=delta_re.shape[0], y=stft.bins))
        if delta_re.shape[1] < 1:
            raise PreconditionException(u"frame length must be at least 1")
        if noise_level < 0:
            raise PreconditionException(u"noise level must be non-negative, got {x}".format(x=noise_level))
        if smoother_k < 1 or smoother_k % 2 != 1:
            raise PreconditionException(u"smoother width must be odd and at least 1, got {x}".format(x=smoother_k))
        self.delta_re = delta_re
        self.delta_im = delta_im
        self.noise_level = float(noise_level)
        self.stft = stft
        self.smoother_k = int(smoother_k)

    @classmethod
    def random(cls, stft, frame_len, noise_level, smoother_k, rng):
        """
        Initialise both planes i.i.d. standard normal

        :param stft: StftParams
        :param frame_len: L_u
        :param noise_level: eta
        :param smoother_k: smoother width
        :param rng: numpy Generator
        :return: Ufp
        """
        shape = (stft.bins, int(frame_len))
        return cls(rng.standard_normal(shape), rng.standard_normal(shape), noise_level, stft, smoother_k)

    @classmethod
    def zeros(cls, stft, frame_len, noise_level, smoother_k=5):
        shape = (stft.bins, int(frame_len))
        return cls(np.zeros(shape), np.zeros(shape), noise_level, stft, smoother_k)

    @property
    def bins(self):
        return self.delta_re.shape[0]

    @property
    def frame_len(self):
        return self.delta_re.shape[1]

    @property
    def n_params(self):
        """
        Number of learnable parameters, 2 * B * L_u

        :return: int
        """
        return 2 * self.bins * self.frame_len

    def with_planes(self, delta_re, delta_im):
        return Ufp(delta_re, delta_im, self.noise_level, self.stft, self.smoother_k)

    def with_noise_level(self, noise_level):
        return Ufp(self.delta_re, self.delta_im, noise_level, self.stft, self.smoother_k)

    def copy(self):
        return self.with_planes(self.delta_re.copy(), self.delta_im.copy())

    def norm(self):
        return float(np.sqrt(np.sum(self.delta_re ** 2) + np.sum(self.delta_im ** 2)))

    def to_bytes(self):
        """
        Serialise into the UFP1 container

        :return: bytes
        """
        head = HEADER.pack(MAGIC, self.bins, self.frame_len, self.stft.n_fft, self.stft.hop, self.smoother_k,
                           self.noise_level)
        body = self.delta_re.astype("<f8").tobytes(order="C") + self.delta_im.astype("<f8").tobytes(order="C")
        return head + body

    @classmethod
    def from_bytes(cls, data):
        """
        Parse a UFP1 container

        :param data: bytes
        :return: Ufp
        """
        if len(data) < HEADER.size:
            raise UfpFormatException(u"UFP data too short for a header ({x} bytes)".format(x=len(data)))
        magic, bins, frame_len, n_fft, hop, smoother_k, noise_level = HEADER.unpack(data[:HEADER.size])
        if magic != MAGIC:
            raise UfpFormatException(u"bad magic {x}, expected {y}".format(x=magic, y=MAGIC))
        n = bins * frame_len
        if len(data) != HEADER.size + 16 * n:
            raise UfpFormatException(u"expected {x} bytes of UFP data, found {y}".format(x=HEADER.size + 16 * n, y=len(data)))
        try:
            stft = StftParams(n_fft, hop)
        except PreconditionException as e:
            raise UfpFormatException(u"invalid transform parameters in header: {x}".format(x=e))
        if stft.bins != bins:
            raise UfpFormatException(u"header declares {x} bins but n_fft {y} gives {z}".format(x=bins, y=n_fft, z=stft.bins))
        planes = np.frombuffer(data, dtype="<f8", offset=HEADER.size).astype(np.float64)
        re = planes[:n].reshape(bins, frame_len)
        im = planes[n:].reshape(bins, frame_len)
        return cls(re, im, noise_level, stft, smoother_k)


class TileAugment(object):
    """
    Settings for the tiler: whether the optimisation-time augmentation is enabled, the segment drop
    ratio r, the shift (a frame count, or "random") and the seed of the draws
    """

    def __init__(self, enabled=False, mask_ratio=0.0, shift="random", rng_seed=0):
        if not 0.0 <= mask_ratio <= 1.0:
            raise PreconditionException(u"mask ratio must be in [0, 1], got {x}".format(x=mask_ratio))
        if shift != "random" and (int(shift) < 0):
            raise PreconditionException(u"shift must be non-negative or 'random', got {x}".format(x=shift))
        self.enabled = bool(enabled)
        self.mask_ratio = float(mask_ratio)
        self.shift = shift
        self.rng_seed = rng_seed

    @classmethod
    def deploy(cls):
        return cls(enabled=False)


class RealisedAugment(object):
    """
    The shift and segment mask actually used by one tiler call, recorded so that the adjoint can replay
    exactly the same linear map
    """

    def __init__(self, shift, mask, n_frames, frame_len):
        self.shift = int(shift)
        self.mask = np.asarray(mask, dtype=bool)
        self.n_frames = int(n_frames)
        self.frame_len = int(frame_len)

    def segments(self):
        """
        Start frames of the segments which receive the perturbation: kept by the mask and lying entirely
        inside the spectrogram after the shift

        :return: list of start frame indices
        """
        starts = []
        for i, keep in enumerate(self.mask):
            start = self.shift + i * self.frame_len
            if keep and start + self.frame_len <= self.n_frames:
                starts.append(start)
        return starts
