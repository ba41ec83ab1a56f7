"""
Reading, writing and resampling of PCM WAV audio.

All audio enters the application through read_wav() / load_audio() and is canonicalised to a mono
float buffer in [-1, 1].  Only 16 bit PCM and 32 bit IEEE float are decoded; only 16 bit PCM is
written.
"""
import os, struct
from math import gcd

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from service.core import app
from service.models import AudioBuffer
from service.models.audio import fit_length
from service.ufptools import ServiceException, PreconditionException

PCM_SCALE = 32768.0

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


class AudioFormatException(ServiceException):
    """
    Exception class for files which are not well formed RIFF/WAVE
    """
    tag = "format"


class UnsupportedEncodingException(ServiceException):
    """
    Exception class for well formed WAVE files in an encoding we don't decode
    """
    tag = "unsupported-encoding"


class AudioWriteException(ServiceException):
    """
    Exception class for failures writing audio to disk
    """
    tag = "write"


def inspect_wav(path):
    """
    Walk the RIFF chunks of a file and check that it is something we can decode.

    :param path: path to the file
    :return: tuple of (format tag, bits per sample, channels, sample rate)
    """
    try:
        with open(path, "rb") as f:
            data = f.read()
    except (IOError, OSError) as e:
        raise AudioFormatException(u"unable to read {x}: {y}".format(x=path, y=e))

    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise AudioFormatException(u"{x} is not a RIFF/WAVE file".format(x=path))
    riff_size = struct.unpack("<I", data[4:8])[0]
    if riff_size + 8 > len(data):
        raise AudioFormatException(u"{x}: RIFF chunk truncated ({y} bytes declared, {z} present)".format(
            x=path, y=riff_size + 8, z=len(data)))

    fmt = None
    has_data = False
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        size = struct.unpack("<I", data[pos + 4:pos + 8])[0]
        body = pos + 8
        if body + size > len(data):
            raise AudioFormatException(u"{x}: chunk {y} truncated".format(x=path, y=chunk_id))
        if chunk_id == b"fmt ":
            if size < 16:
                raise AudioFormatException(u"{x}: fmt chunk too short".format(x=path))
            tag, channels, rate, _, _, bits = struct.unpack("<HHIIHH", data[body:body + 16])
            if tag == WAVE_FORMAT_EXTENSIBLE and size >= 26:
                tag = struct.unpack("<H", data[body + 24:body + 26])[0]
            fmt = (tag, bits, channels, rate)
        elif chunk_id == b"data":
            has_data = True
        pos = body + size + (size % 2)

    if fmt is None or not has_data:
        raise AudioFormatException(u"{x}: missing fmt or data chunk".format(x=path))

    tag, bits, channels, rate = fmt
    if channels < 1 or rate < 1:
        raise AudioFormatException(u"{x}: invalid channel count or sample rate".format(x=path))
    if not ((tag == WAVE_FORMAT_PCM and bits == 16) or (tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32)):
        raise UnsupportedEncodingException(u"{x}: format tag {t} with {b} bits is not supported; "
                                           u"use 16 bit PCM or 32 bit float".format(x=path, t=tag, b=bits))
    return fmt


def clip(samples):
    """
    Clip samples to [-1, 1]

    :param samples: array of samples
    :return: tuple of (clipped array, number of samples that were out of range)
    """
    over = int(np.count_nonzero(np.abs(samples) > 1.0))
    return np.clip(samples, -1.0, 1.0), over


def read_wav(path):
    """
    Read a WAV file into a mono buffer.  Integer samples are scaled by 1/32768, multi-channel audio is
    mixed down by the arithmetic mean of the channels, and anything out of [-1, 1] is clipped.

    :param path: path to the file
    :return: AudioBuffer
    """
    inspect_wav(path)
    try:
        rate, data = wavfile.read(path)
    except ValueError as e:
        raise AudioFormatException(u"{x}: {y}".format(x=path, y=e))

    if data.dtype == np.int16:
        samples = data.astype(np.float64) / PCM_SCALE
    else:
        samples = data.astype(np.float64)
    if samples.ndim == 2:
        samples = samples.mean(axis=1)

    samples, over = clip(samples)
    if over > 0:
        app.logger.warning(u"Clipped {n} sample(s) while decoding {x}".format(n=over, x=path))
    return AudioBuffer(samples, rate)


def write_wav(buf, path):
    """
    Write a buffer as a 16 bit PCM mono file.  Out of range samples are clipped, and the clip count is
    reported.

    :param buf: AudioBuffer
    :param path: destination path
    :return: the number of samples which had to be clipped
    """
    buf.require_samples()
    samples, over = clip(buf.samples)
    if over > 0:
        app.logger.warning(u"Clipped {n} sample(s) while encoding {x}".format(n=over, x=path))
    pcm = np.clip(np.round(samples * PCM_SCALE), -PCM_SCALE, PCM_SCALE - 1).astype(np.int16)
    try:
        wavfile.write(path, buf.sample_rate, pcm)
    except (IOError, OSError) as e:
        raise AudioWriteException(u"unable to write {x}: {y}".format(x=path, y=e))
    return over


def resample(buf, target_rate):
    """
    Band-limited polyphase resampling with a windowed-sinc filter.  The output has
    round(len * target / source) samples.

    :param buf: AudioBuffer
    :param target_rate: the new sample rate
    :return: AudioBuffer at target_rate
    """
    if target_rate is None or int(target_rate) <= 0:
        raise PreconditionException(u"target rate must be positive, got {x}".format(x=target_rate))
    target_rate = int(target_rate)
    if target_rate == buf.sample_rate:
        return AudioBuffer(buf.samples.copy(), target_rate)

    g = gcd(target_rate, buf.sample_rate)
    up, down = target_rate // g, buf.sample_rate // g
    out = resample_poly(buf.samples, up, down)
    n = int(round(len(buf) * target_rate / float(buf.sample_rate)))
    return AudioBuffer(fit_length(out, n), target_rate)


def load_audio(path, sample_rate=None):
    """
    Read a WAV file and resample it to the working rate

    :param path: path to the file
    :param sample_rate: working rate; defaults to AUDIO_SAMPLE_RATE
    :return: AudioBuffer
    """
    sample_rate = sample_rate or app.config.get("AUDIO_SAMPLE_RATE", 16000)
    buf = read_wav(path)
    if buf.sample_rate != sample_rate:
        app.logger.debug(u"Resampling {x} from {y} Hz to {z} Hz".format(x=path, y=buf.sample_rate, z=sample_rate))
        buf = resample(buf, sample_rate)
    return buf.require_samples()


def list_audio_files(path):
    """
    List the WAV files a path refers to: the file itself, or the .wav files of a directory in name order

    :param path: file or directory
    :return: list of file paths
    """
    if os.path.isdir(path):
        return [os.path.join(path, n) for n in sorted(os.listdir(path)) if n.lower().endswith(".wav")]
    return [path]
