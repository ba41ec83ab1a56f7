"""
The tiler: applies a universal frequential perturbation to audio of any length.

The spectrogram of the input is cut into floor(L / L_u) segments of L_u frames.  In deployment every
segment receives eta * delta, where delta is the smoothed complex perturbation; the trailing L mod L_u
frames are left alone.  During optimisation the segments are first shifted by eps frames, drawn from
[0, L_u], and each segment is kept with probability 1 - r; segments that would run past the last frame
after the shift are skipped.

For a fixed shift and mask the tiler is affine in delta:

::

    x~ = x + iSTFT(S~ - S)

which equals iSTFT(S~) on the reconstructable interior and leaves every sample that no perturbation
reaches exactly as it was.  tiler_adjoint() is the transpose of the linear part.
"""
import numpy as np
from scipy.ndimage import uniform_filter1d

from service.core import app
from service.dsp import frame_count, istft_array, istft_adjoint_array, TooShortException
from service.models import Spectrogram, RealisedAugment, TileAugment, Ufp, UfpFormatException
from service.models.audio import fit_length
from service.ufptools import ServiceException, make_rng


class AugmentationMismatchException(ServiceException):
    """
    Exception class for an adjoint call whose recorded augmentation doesn't fit its input
    """
    tag = "augmentation"


class IncompatibleUfpException(ServiceException):
    """
    Exception class for a UFP learned under transform parameters other than the ones in use
    """
    tag = "incompatible"


def check_compatible(u, p):
    """
    Check that a UFP can be applied with the given transform parameters

    :param u: Ufp
    :param p: StftParams in use
    :return:
    """
    if u.stft != p:
        raise IncompatibleUfpException(u"UFP was learned with {x} but the audio is analysed with {y}".format(x=u.stft, y=p))


def smooth_plane(plane, k):
    """
    Average each row of a plane along the frame axis with a length-k box kernel and floor(k/2) zeros of
    padding.  The operator is symmetric, so it is its own adjoint.

    :param plane: B x L_u array
    :param k: odd kernel width
    :return: B x L_u array
    """
    if k == 1:
        return plane.copy()
    return uniform_filter1d(plane, size=k, axis=1, mode="constant", cval=0.0)


def freq_smoother(u):
    """
    Smooth the real and imaginary planes of a UFP and combine them into the complex perturbation

    :param u: Ufp
    :return: complex B x L_u array
    """
    return smooth_plane(u.delta_re, u.smoother_k) + 1j * smooth_plane(u.delta_im, u.smoother_k)


def minimum_samples(u):
    """
    Shortest input, in samples, which yields L_u frames

    :param u: Ufp
    :return: int
    """
    return (u.frame_len - 1) * u.stft.hop + u.stft.n_fft


def realise_augment(aug, n_frames, frame_len):
    """
    Draw the shift and segment mask for one tiler call.  In deployment (or with aug None) the shift is 0
    and every segment is kept.

    :param aug: TileAugment or None
    :param n_frames: L
    :param frame_len: L_u
    :return: RealisedAugment
    """
    n_segments = n_frames // frame_len
    if aug is None or not aug.enabled:
        return RealisedAugment(0, np.ones(n_segments, dtype=bool), n_frames, frame_len)
    rng = make_rng(aug.rng_seed, "tile-augment")
    if aug.shift == "random":
        shift = int(rng.integers(0, frame_len + 1))
    else:
        shift = int(aug.shift)
    mask = rng.random(n_segments) < (1.0 - aug.mask_ratio)
    return RealisedAugment(shift, mask, n_frames, frame_len)


def _scaled_planes(u):
    return u.noise_level * smooth_plane(u.delta_re, u.smoother_k), u.noise_level * smooth_plane(u.delta_im, u.smoother_k)


def perturbed_spectrogram(s, u, realised):
    """
    Add the tiled perturbation to a spectrogram

    :param s: Spectrogram with L frames
    :param u: Ufp
    :param realised: RealisedAugment for L frames
    :return: the perturbed Spectrogram
    """
    _check_realised(realised, s.n_frames, u)
    re, im = s.re.copy(), s.im.copy()
    d_re, d_im = _scaled_planes(u)
    for start in realised.segments():
        re[:, start:start + u.frame_len] += d_re
        im[:, start:start + u.frame_len] += d_im
    return Spectrogram(re, im, s.params, s.sample_rate)


def perturbation_array(u, realised):
    """
    The tiled perturbation on its own, as a complex B x L array

    :param u: Ufp
    :param realised: RealisedAugment
    :return: complex array
    """
    out = np.zeros((u.bins, realised.n_frames), dtype=np.complex128)
    segments = realised.segments()
    if len(segments) == 0:
        return out
    d_re, d_im = _scaled_planes(u)
    delta = d_re + 1j * d_im
    for start in segments:
        out[:, start:start + u.frame_len] = delta
    return out


def _check_realised(realised, n_frames, u):
    if realised.n_frames != n_frames or realised.frame_len != u.frame_len or \
            realised.mask.shape[0] != n_frames // u.frame_len:
        raise AugmentationMismatchException(
            u"recorded augmentation is for {x} frames in segments of {y}, input has {z} frames in segments of {w}".format(
                x=realised.n_frames, y=realised.frame_len, z=n_frames, w=u.frame_len))


def _frames_for(x, u):
    n_frames = frame_count(len(x), u.stft)
    if n_frames < u.frame_len:
        need = minimum_samples(u)
        raise TooShortException(u"audio of {x:.3f}s is too short: a UFP of {l} frames needs at least {n} samples "
                                u"({s:.3f}s)".format(x=x.duration, l=u.frame_len, n=need, s=need / float(x.sample_rate)))
    return n_frames


def tile_realised(x, u, realised):
    """
    The tiler at a fixed shift and mask

    :param x: AudioBuffer
    :param u: Ufp
    :param realised: RealisedAugment recorded for this input
    :return: the protected AudioBuffer, same length and rate as x
    """
    n_frames = _frames_for(x, u)
    _check_realised(realised, n_frames, u)
    if len(realised.segments()) == 0 or u.noise_level == 0.0:
        return x.replace(x.samples.copy())
    delta_x = istft_array(perturbation_array(u, realised), u.stft)
    return x.replace(x.samples + fit_length(delta_x, len(x)))


def tiler(x, u, aug=None):
    """
    Apply a UFP to audio.  With aug None or disabled this is the deployment tiler: deterministic,
    no shift and no mask.

    :param x: AudioBuffer long enough for L_u frames
    :param u: Ufp
    :param aug: optional TileAugment
    :return: AudioBuffer
    """
    n_frames = _frames_for(x, u)
    realised = realise_augment(aug, n_frames, u.frame_len)
    return tile_realised(x, u, realised)


def tiler_adjoint(x_grad, x, u, realised):
    """
    Gradient over the UFP planes given a gradient over the tiler output: the iSTFT adjoint, a gather-sum
    over the kept segments, the noise level and the smoother adjoint, in that order.

    :param x_grad: 1-d gradient over the protected samples
    :param x: the AudioBuffer the forward call was made on
    :param u: the Ufp of the forward call
    :param realised: the RealisedAugment of the forward call
    :return: tuple of (gradient over delta_re, gradient over delta_im)
    """
    n_frames = _frames_for(x, u)
    _check_realised(realised, n_frames, u)
    g_re = np.zeros((u.bins, u.frame_len))
    g_im = np.zeros((u.bins, u.frame_len))
    segments = realised.segments()
    if len(segments) == 0 or u.noise_level == 0.0:
        return g_re, g_im
    z = istft_adjoint_array(np.asarray(x_grad, dtype=np.float64), u.stft, n_frames)
    for start in segments:
        g_re += z[:, start:start + u.frame_len].real
        g_im += z[:, start:start + u.frame_len].imag
    g_re = u.noise_level * smooth_plane(g_re, u.smoother_k)
    g_im = u.noise_level * smooth_plane(g_im, u.smoother_k)
    return g_re, g_im


def protect(x, u):
    """
    Deployment entry point used by the command line: the deterministic full-frame tiler, with a
    debug line per buffer

    :param x: AudioBuffer
    :param u: Ufp
    :return: AudioBuffer
    """
    out = tiler(x, u, TileAugment.deploy())
    app.logger.debug(u"Protected {n} samples with a {b}x{l} UFP at eta={e}".format(
        n=len(x), b=u.bins, l=u.frame_len, e=u.noise_level))
    return out


def save_ufp(u, path):
    """
    Write a UFP to disk in the UFP1 container

    :param u: Ufp
    :param path: destination path
    :return: number of bytes written
    """
    data = u.to_bytes()
    try:
        with open(path, "wb") as f:
            f.write(data)
    except (IOError, OSError) as e:
        raise UfpFormatException(u"unable to write UFP to {x}: {y}".format(x=path, y=e))
    app.logger.info(u"Wrote UFP ({b}x{l}, {n} bytes) to {x}".format(b=u.bins, l=u.frame_len, n=len(data), x=path))
    return len(data)


def load_ufp(path, stft=None):
    """
    Read a UFP1 container, optionally checking it against the transform parameters in use

    :param path: path to the file
    :param stft: optional StftParams the UFP will be applied with
    :return: Ufp
    """
    try:
        with open(path, "rb") as f:
            data = f.read()
    except (IOError, OSError) as e:
        raise UfpFormatException(u"unable to read UFP from {x}: {y}".format(x=path, y=e))
    u = Ufp.from_bytes(data)
    if stft is not None:
        check_compatible(u, stft)
    return u
