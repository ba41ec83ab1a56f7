"""
Short-time Fourier analysis and synthesis, their adjoints, and the mel filterbank.

Framing is padding free: frame m covers samples [m * hop, m * hop + n_fft), so a signal of T samples
has L = 1 + floor((T - n_fft) / hop) frames.  Synthesis is weighted overlap-add with the analysis
window, normalised by the window-square overlap sum.  That sum is constant over the interior (the
samples covered by all n_fft / hop frames), where istft(stft(x)) reproduces x; towards the edges it is
floored at a tenth of its peak, so the edges stay bounded instead of being exact.

The *_array functions work on plain numpy arrays and complex B x L matrices and are what the tiler and
the encoder call in their inner loops; stft/istft/stft_adjoint/istft_adjoint wrap them for the model
objects.
"""
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import fft as sp_fft
from scipy.signal import get_window

from service.models import AudioBuffer, Spectrogram, StftParams
from service.ufptools import ServiceException, ShapeMismatchException, PreconditionException, ConfigurationException

NOLA_FLOOR = 0.1


class TooShortException(ServiceException):
    """
    Exception class for signals shorter than one analysis window
    """
    tag = "too-short"


@lru_cache(maxsize=16)
def analysis_window(n_fft, kind="hann"):
    """
    The periodic analysis window, cached and read-only

    :param n_fft: window length
    :param kind: window kind
    :return: 1-d array
    """
    w = get_window(kind, n_fft, fftbins=True).astype(np.float64)
    w.setflags(write=False)
    return w


def frame_count(n_samples, p):
    """
    Number of frames the padding free analysis produces for a signal

    :param n_samples: signal length T
    :param p: StftParams
    :return: L, zero when the signal is shorter than one window
    """
    if n_samples < p.n_fft:
        return 0
    return 1 + (n_samples - p.n_fft) // p.hop


def synthesis_length(n_frames, p):
    return (n_frames - 1) * p.hop + p.n_fft


def interior_slice(n_samples, p):
    """
    The samples covered by all n_fft / hop overlapping frames, where reconstruction is exact

    :param n_samples: signal length T
    :param p: StftParams
    :return: slice
    """
    return slice(p.n_fft - p.hop, frame_count(n_samples, p) * p.hop)


def overlap_add(frames, hop):
    """
    Sum L frames of length n_fft into a signal, frame m starting at m * hop.  hop must divide n_fft.

    :param frames: L x n_fft array
    :param hop: hop size
    :return: 1-d array of (L - 1) * hop + n_fft samples
    """
    n_frames, n_fft = frames.shape
    r = n_fft // hop
    blocks = np.zeros((n_frames + r - 1, hop))
    split = frames.reshape(n_frames, r, hop)
    for i in range(r):
        blocks[i:i + n_frames] += split[:, i, :]
    return blocks.reshape(-1)


def frame_signal(samples, p, n_frames=None):
    """
    View a signal as its L analysis frames (unwindowed)

    :param samples: 1-d array
    :param p: StftParams
    :param n_frames: optionally only the first n_frames frames
    :return: L x n_fft read-only view
    """
    view = sliding_window_view(samples, p.n_fft)[::p.hop]
    if n_frames is not None:
        view = view[:n_frames]
    return view


@lru_cache(maxsize=8)
def _synthesis_norm(n_frames, n_fft, hop):
    w = analysis_window(n_fft)
    wss = overlap_add(np.tile(w * w, (n_frames, 1)), hop)
    norm = np.maximum(wss, NOLA_FLOOR * wss.max())
    norm.setflags(write=False)
    return norm


def window_square_sum(n_frames, p):
    """
    The window-square overlap sum for L frames

    :param n_frames: L
    :param p: StftParams
    :return: 1-d array of (L - 1) * hop + n_fft samples
    """
    w = analysis_window(p.n_fft, p.window)
    return overlap_add(np.tile(w * w, (n_frames, 1)), p.hop)


def _bin_weights(p):
    c = np.full(p.bins, 2.0)
    c[0] = 1.0
    c[-1] = 1.0
    return c


def stft_array(samples, p):
    """
    Analysis of a plain sample array

    :param samples: 1-d array of at least n_fft samples
    :param p: StftParams
    :return: complex B x L array
    """
    if samples.shape[0] < p.n_fft:
        raise TooShortException(u"signal of {x} samples is shorter than one {n} sample window".format(
            x=samples.shape[0], n=p.n_fft))
    frames = frame_signal(samples, p) * analysis_window(p.n_fft, p.window)
    return sp_fft.rfft(frames, axis=1).T


def istft_array(z, p):
    """
    Synthesis of a complex B x L array

    :param z: complex B x L array
    :param p: StftParams
    :return: 1-d array of (L - 1) * hop + n_fft samples
    """
    if z.shape[0] != p.bins:
        raise ShapeMismatchException(u"expected {b} bins, got {x}".format(b=p.bins, x=z.shape[0]))
    n_frames = z.shape[1]
    frames = sp_fft.irfft(z.T, n=p.n_fft, axis=1) * analysis_window(p.n_fft, p.window)
    return overlap_add(frames, p.hop) / _synthesis_norm(n_frames, p.n_fft, p.hop)


def stft_adjoint_array(g, p, n_samples):
    """
    Vector-Jacobian product of stft_array

    :param g: complex B x L upstream gradient (real part for re, imaginary part for im)
    :param p: StftParams
    :param n_samples: length of the analysed signal
    :return: 1-d gradient over the n_samples input samples
    """
    n_frames = frame_count(n_samples, p)
    if g.shape != (p.bins, n_frames):
        raise ShapeMismatchException(u"gradient shape {x} does not match {b} x {l}".format(x=g.shape, b=p.bins, l=n_frames))
    frames = p.n_fft * sp_fft.irfft(g.T / _bin_weights(p), n=p.n_fft, axis=1)
    frames *= analysis_window(p.n_fft, p.window)
    out = np.zeros(n_samples)
    summed = overlap_add(frames, p.hop)
    out[:summed.shape[0]] = summed
    return out


def istft_adjoint_array(g, p, n_frames):
    """
    Vector-Jacobian product of istft_array

    :param g: 1-d upstream gradient over the synthesised samples; trimmed or zero padded to
        (L - 1) * hop + n_fft
    :param p: StftParams
    :param n_frames: L
    :return: complex B x L gradient
    """
    n = synthesis_length(n_frames, p)
    h = np.zeros(n)
    m = min(n, g.shape[0])
    h[:m] = g[:m]
    h /= _synthesis_norm(n_frames, p.n_fft, p.hop)
    frames = frame_signal(h, p, n_frames) * analysis_window(p.n_fft, p.window)
    z = sp_fft.rfft(frames, axis=1) * (_bin_weights(p) / p.n_fft)
    z[:, 0] = z[:, 0].real
    z[:, -1] = z[:, -1].real
    return z.T


def stft(x, p):
    """
    Short-time Fourier transform of a buffer

    :param x: AudioBuffer of at least n_fft samples
    :param p: StftParams
    :return: Spectrogram
    """
    return Spectrogram.from_complex(stft_array(x.samples, p), p, x.sample_rate)


def istft(s, sample_rate=None):
    """
    Inverse transform by weighted overlap-add

    :param s: Spectrogram
    :param sample_rate: rate of the result; defaults to the spectrogram's own
    :return: AudioBuffer of (L - 1) * hop + n_fft samples
    """
    rate = sample_rate or s.sample_rate or 16000
    return AudioBuffer(istft_array(s.to_complex(), s.params), rate)


def stft_adjoint(s_grad, p, n_samples):
    """
    Vector-Jacobian product of stft: the gradient over the input samples given a gradient over the
    spectrogram

    :param s_grad: Spectrogram of upstream gradients
    :param p: StftParams
    :param n_samples: length of the analysed signal
    :return: 1-d array
    """
    return stft_adjoint_array(s_grad.to_complex(), p, n_samples)


def istft_adjoint(x_grad, p, n_frames):
    """
    Vector-Jacobian product of istft: the gradient over the spectrogram given a gradient over the
    synthesised samples

    :param x_grad: 1-d array
    :param p: StftParams
    :param n_frames: L
    :return: Spectrogram
    """
    return Spectrogram.from_complex(istft_adjoint_array(np.asarray(x_grad, dtype=np.float64), p, n_frames), p)


def hz_to_mel(f):
    """
    HTK mel scale, mel(f) = 2595 log10(1 + f / 700)
    """
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(p, n_mels, sr):
    """
    Triangular filters on the HTK mel scale covering [0, sr / 2].  Each triangle peaks at 1 and
    neighbouring triangles cross at 1/2, so no column sums to more than 1.

    :param p: StftParams
    :param n_mels: number of filters, at least 2
    :param sr: sample rate
    :return: n_mels x B array
    :raises ConfigurationException: when a filter is too narrow to cover any FFT bin
    """
    if n_mels < 2:
        raise PreconditionException(u"n_mels must be at least 2, got {x}".format(x=n_mels))
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sr / 2.0), n_mels + 2))
    freqs = np.arange(p.bins) * (sr / float(p.n_fft))
    lower = (freqs[None, :] - edges[:-2, None]) / (edges[1:-1, None] - edges[:-2, None])
    upper = (edges[2:, None] - freqs[None, :]) / (edges[2:, None] - edges[1:-1, None])
    fb = np.maximum(0.0, np.minimum(lower, upper))
    empty = np.flatnonzero(fb.sum(axis=1) <= 0.0)
    if empty.size:
        raise ConfigurationException(u"{m} mel bands are too many for n_fft={n} at {r} Hz: "
                                     u"{k} band(s) cover no FFT bin, the first at {f:.1f} Hz".format(
                                         m=n_mels, n=p.n_fft, r=sr, k=empty.size, f=edges[empty[0] + 1]))
    return fb
