"""
Synthetic multi-speaker corpus.

Each speaker is a parametric voice drawn from a seeded stream: a fundamental frequency, four formant
resonances with their bandwidths and gains, a spectral tilt and a vibrato.  Each utterance varies the
voice a little: the F0 contour wanders, the formants shift by a few percent and a syllable-rate
envelope opens and closes the voice.  Harmonics are synthesised by phase accumulation, weighted by the
speaker's spectral envelope at their instantaneous frequency, and the result is peak normalised and
written as 16 bit PCM.

The corpus directory holds one sub-directory per speaker and a manifest.txt with one line per file:

::

    spk00/utt000.wav spk00
"""
import os

import numpy as np

from service.audio import write_wav
from service.core import app
from service.models import AudioBuffer
from service.ufptools import ServiceException, make_rng

MANIFEST = "manifest.txt"

PEAK = 0.9
NOISE_FLOOR_DB = -50.0
ENVELOPE_FLOOR = 0.3
MAX_HARMONIC_HZ = 7600.0

FORMANT_RANGES = [(300.0, 850.0), (900.0, 2300.0), (2300.0, 3200.0), (3300.0, 4300.0)]


class CorpusException(ServiceException):
    """
    Exception class for corpora which can't be generated or used: too few speakers or files, or a bad
    manifest
    """
    tag = "corpus"


class Voice(object):
    """
    The per-speaker parameters of a synthetic voice
    """

    def __init__(self, f0, formants, bandwidths, gains_db, tilt_db, vibrato_rate, vibrato_depth):
        self.f0 = f0
        self.formants = np.asarray(formants)
        self.bandwidths = np.asarray(bandwidths)
        self.gains_db = np.asarray(gains_db)
        self.tilt_db = tilt_db
        self.vibrato_rate = vibrato_rate
        self.vibrato_depth = vibrato_depth

    @classmethod
    def draw(cls, seed, speaker):
        rng = make_rng(seed, "speaker", speaker)
        f0 = rng.uniform(90.0, 240.0)
        formants = [rng.uniform(lo, hi) for lo, hi in FORMANT_RANGES]
        bandwidths = rng.uniform(60.0, 200.0, size=4)
        gains_db = rng.uniform(20.0, 30.0, size=4)
        tilt_db = rng.uniform(-12.0, -4.0)
        return cls(f0, formants, bandwidths, gains_db, tilt_db, rng.uniform(4.0, 7.0), rng.uniform(0.005, 0.02))

    def envelope(self, freqs, formants):
        """
        Amplitude of the spectral envelope: a tilt in dB per octave above 100 Hz, times a sum of Lorentzian
        formant peaks

        :param freqs: array of frequencies in Hz
        :param formants: the formant centres to use
        :return: array of amplitudes
        """
        octaves = np.log2(np.maximum(freqs, 1.0) / 100.0)
        tilt = 10.0 ** (self.tilt_db * octaves / 20.0)
        peaks = np.ones_like(freqs)
        for centre, width, gain in zip(formants, self.bandwidths, self.gains_db):
            peaks += (10.0 ** (gain / 20.0)) / (1.0 + ((freqs - centre) / (width / 2.0)) ** 2)
        return tilt * peaks


def synthesise_utterance(voice, duration, sample_rate, rng):
    """
    Render one utterance of a voice

    :param voice: Voice
    :param duration: seconds
    :param sample_rate: samples per second
    :param rng: numpy Generator for the per-utterance variation
    :return: 1-d array peak normalised to PEAK
    """
    n = int(round(duration * sample_rate))
    t = np.arange(n) / float(sample_rate)

    # F0 contour: a random walk through knots every quarter second, within 8% of the speaker's F0
    knots = np.arange(0.0, duration + 0.25, 0.25)
    walk = np.clip(np.cumsum(rng.uniform(-0.03, 0.03, size=knots.shape[0])), -0.08, 0.08)
    contour = voice.f0 * (1.0 + np.interp(t, knots, walk))
    vibrato_phase = rng.uniform(0.0, 2.0 * np.pi)
    f0 = contour * (1.0 + voice.vibrato_depth * np.sin(2.0 * np.pi * voice.vibrato_rate * t + vibrato_phase))
    phase = 2.0 * np.pi * np.cumsum(f0) / sample_rate

    formants = voice.formants * (1.0 + rng.uniform(-0.03, 0.03, size=voice.formants.shape[0]))
    signal = np.zeros(n)
    for h in range(1, int(MAX_HARMONIC_HZ // voice.f0 * 1.1) + 1):
        freqs = h * f0
        amp = np.where(freqs < MAX_HARMONIC_HZ, voice.envelope(freqs, formants), 0.0)
        signal += amp * np.sin(h * phase + rng.uniform(0.0, 2.0 * np.pi))

    rate = rng.uniform(3.0, 6.0)
    syllables = 0.5 * (1.0 - np.cos(2.0 * np.pi * rate * t + rng.uniform(0.0, 2.0 * np.pi)))
    signal *= ENVELOPE_FLOOR + (1.0 - ENVELOPE_FLOOR) * syllables

    peak = np.max(np.abs(signal))
    if peak > 0:
        signal /= peak
    signal += (10.0 ** (NOISE_FLOOR_DB / 20.0)) * rng.standard_normal(n)
    return PEAK * signal / np.max(np.abs(signal))


def generate_synthetic_corpus(out_dir, n_speakers=4, utts_per_speaker=30, duration_s=3.0, seed=1234,
                              sample_rate=16000):
    """
    Write a synthetic corpus and its manifest

    :param out_dir: directory to write to; created if missing
    :param n_speakers: at least 2
    :param utts_per_speaker: at least 1
    :param duration_s: seconds per utterance
    :param seed: corpus seed
    :param sample_rate: rate of the files
    :return: list of (path, speaker id), in manifest order
    """
    if n_speakers < 2:
        raise CorpusException(u"a corpus needs at least 2 speakers, got {x}".format(x=n_speakers))
    if utts_per_speaker < 1:
        raise CorpusException(u"a corpus needs at least 1 utterance per speaker, got {x}".format(x=utts_per_speaker))
    if duration_s <= 0:
        raise CorpusException(u"utterance duration must be positive, got {x}".format(x=duration_s))

    app.logger.info(u"Generating {n} speaker(s) x {u} utterance(s) of {d}s into {x}".format(
        n=n_speakers, u=utts_per_speaker, d=duration_s, x=out_dir))
    entries = []
    for s in range(n_speakers):
        voice = Voice.draw(seed, s)
        speaker = u"spk{s:02d}".format(s=s)
        os.makedirs(os.path.join(out_dir, speaker), exist_ok=True)
        for k in range(utts_per_speaker):
            samples = synthesise_utterance(voice, duration_s, sample_rate, make_rng(seed, "utterance", s, k))
            rel = u"{s}/utt{k:03d}.wav".format(s=speaker, k=k)
            write_wav(AudioBuffer(samples, sample_rate), os.path.join(out_dir, rel))
            entries.append((rel, speaker))
        app.logger.debug(u"Speaker {s}: f0={f:.1f}Hz formants={x}".format(
            s=speaker, f=voice.f0, x=", ".join(u"{y:.0f}".format(y=y) for y in voice.formants)))

    with open(os.path.join(out_dir, MANIFEST), "w") as f:
        for rel, speaker in entries:
            f.write(u"{r} {s}\n".format(r=rel, s=speaker))
    return [(os.path.join(out_dir, rel), speaker) for rel, speaker in entries]


def read_manifest(path):
    """
    Read a corpus manifest

    :param path: the manifest file, or the corpus directory holding it
    :return: list of (absolute path, speaker id)
    """
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST)
    try:
        with open(path) as f:
            lines = f.read().splitlines()
    except (IOError, OSError) as e:
        raise CorpusException(u"unable to read manifest {x}: {y}".format(x=path, y=e))
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    for i, line in enumerate(lines):
        line = line.strip()
        if line == "" or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise CorpusException(u"{x} line {n}: expected 'path speaker', got '{l}'".format(x=path, n=i + 1, l=line))
        entries.append((os.path.join(base, parts[0]), parts[1]))
    return entries


def has_manifest(path):
    return os.path.isfile(os.path.join(path, MANIFEST)) if os.path.isdir(path) else False
