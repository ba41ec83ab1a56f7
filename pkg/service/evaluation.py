"""
Speaker verification metrics, trial lists and benchmarks.

Verification compares two embeddings by cosine similarity and accepts the pair as the same speaker when
the similarity reaches the threshold tau.  tau is the equal error rate operating point of a trial list:
with the trials sorted by score, rejecting the first k gives

::

    FNR(k) = sum_{i < k} w_i [y_i = 1] / sum_i w_i [y_i = 1]
    FPR(k) = sum_{i >= k} w_i [y_i = 0] / sum_i w_i [y_i = 0]

and the threshold is the score boundary minimising |FNR - FPR|.

The rates over aligned lists of audio (SPR, DPR, match rate, evasion rate) all reduce to counting
verification decisions, and are independent of the order of the lists.
"""
import os, threading, time
from collections import OrderedDict

import numpy as np

from service.audio import load_audio
from service.core import app
from service.encoder import as_encoder, cosine_similarity
from service.models import AudioBuffer, EvalReport, AttackTable, Trial
from service.synth import CorpusException, read_manifest
from service.tiler import tiler, minimum_samples
from service.ufptools import (ServiceException, PreconditionException, ShapeMismatchException, make_rng,
                              parallel_map)


class AlignmentException(ServiceException):
    """
    Exception class for lists of audio which should pair up one to one but don't
    """
    tag = "alignment"


class SnrException(ServiceException):
    """
    Exception class for a segmental SNR with no non-silent frames
    """
    tag = "snr"


##################################################
# equal error rate

def compute_eer_threshold(trials):
    """
    Threshold and equal error rate of a scored trial list

    :param trials: list of (score, label, weight) or (score, label)
    :return: tuple of (tau, eer)
    """
    rows = [t if len(t) == 3 else (t[0], t[1], 1.0) for t in trials]
    scores = np.array([r[0] for r in rows], dtype=np.float64)
    labels = np.array([int(r[1]) for r in rows])
    weights = np.array([r[2] for r in rows], dtype=np.float64)
    if np.any(weights < 0):
        raise PreconditionException(u"trial weights must be non-negative")

    order = np.argsort(scores, kind="stable")
    scores, labels, weights = scores[order], labels[order], weights[order]
    pos = np.where(labels == 1, weights, 0.0)
    neg = np.where(labels == 0, weights, 0.0)
    total_pos, total_neg = pos.sum(), neg.sum()
    if total_pos <= 0 or total_neg <= 0:
        raise PreconditionException(u"the trial list needs weighted trials of both classes")

    n = scores.shape[0]
    fnr = np.concatenate([[0.0], np.cumsum(pos)]) / total_pos
    fpr = 1.0 - np.concatenate([[0.0], np.cumsum(neg)]) / total_neg

    # a threshold can only fall at the ends or between two different scores
    k = np.arange(n + 1)
    valid = np.ones(n + 1, dtype=bool)
    valid[1:n] = scores[1:] > scores[:-1]
    candidates = k[valid]
    gap = np.abs(fnr[candidates] - fpr[candidates])
    best = int(candidates[int(np.argmin(gap))])

    if best == 0:
        tau = float(scores[0])
    elif best == n:
        tau = float(np.nextafter(scores[-1], np.inf))
    else:
        tau = float((scores[best - 1] + scores[best]) / 2.0)
    return tau, float((fnr[best] + fpr[best]) / 2.0)


def error_rates(trials, tau):
    """
    Weighted false negative and false positive rates of a scored trial list at a threshold

    :param trials: list of (score, label, weight)
    :param tau: threshold; scores >= tau are accepted
    :return: tuple of (fnr, fpr)
    """
    fn = fp = pos = neg = 0.0
    for score, label, weight in trials:
        if label == 1:
            pos += weight
            if score < tau:
                fn += weight
        else:
            neg += weight
            if score >= tau:
                fp += weight
    return fn / pos, fp / neg


##################################################
# decisions and rates

def _embeddings(items, encoder, threads=None):
    return parallel_map(encoder.embed, items, threads)


def sv_decide(x1, x2, tau, encoder=None):
    """
    Same-speaker decision: cosine similarity of the embeddings at least tau

    :param x1: AudioBuffer
    :param x2: AudioBuffer
    :param tau: threshold
    :param encoder: SpeakerEncoder or EncoderConfig
    :return: bool
    """
    encoder = as_encoder(encoder)
    return cosine_similarity(encoder.embed(x1), encoder.embed(x2)) >= tau


def _decisions(a, b, tau, encoder, threads=None):
    if len(a) != len(b):
        raise AlignmentException(u"expected aligned lists, got {x} and {y} items".format(x=len(a), y=len(b)))
    if len(a) == 0:
        raise PreconditionException(u"cannot compute a rate over no pairs")
    encoder = as_encoder(encoder)
    ea = _embeddings(a, encoder, threads)
    eb = _embeddings(b, encoder, threads)
    return [cosine_similarity(x, y) >= tau for x, y in zip(ea, eb)]


def _rejected_fraction(decisions):
    return sum(1 for d in decisions if not d) / float(len(decisions))


def spr(protected, cloned, tau, encoder=None, threads=None):
    """
    Shallow protection rate: the fraction of clones which fail verification against the protected audio
    they were conditioned on

    :param protected: list of AudioBuffer
    :param cloned: list of AudioBuffer, cloned[i] made from protected[i]
    :param tau: threshold
    :param encoder: SpeakerEncoder or EncoderConfig
    :return: rate in [0, 1]
    """
    return _rejected_fraction(_decisions(protected, cloned, tau, encoder, threads))


def dpr(originals, cloned, tau, encoder=None, threads=None):
    """
    Deep protection rate: the fraction of clones which fail verification against the unprotected
    originals

    :param originals: list of AudioBuffer
    :param cloned: list of AudioBuffer, aligned with originals
    :param tau: threshold
    :param encoder: SpeakerEncoder or EncoderConfig
    :return: rate in [0, 1]
    """
    return _rejected_fraction(_decisions(originals, cloned, tau, encoder, threads))


def match_rate(sources, fakes, tau, encoder=None, threads=None):
    """
    Fraction of fakes which pass verification against their source.  Computed as the complement of the
    rejected fraction, so that it is exactly 1 - dpr on the same input.

    :param sources: list of AudioBuffer
    :param fakes: list of AudioBuffer, aligned with sources
    :param tau: threshold
    :param encoder: SpeakerEncoder or EncoderConfig
    :return: rate in [0, 1]
    """
    return 1.0 - _rejected_fraction(_decisions(sources, fakes, tau, encoder, threads))


def pair_evasion_rate(originals, protected, tau, encoder=None, threads=None):
    """
    Fraction of protected files which no longer verify as their own original

    :param originals: list of AudioBuffer
    :param protected: list of AudioBuffer, aligned with originals
    :param tau: threshold
    :param encoder: SpeakerEncoder or EncoderConfig
    :return: rate in [0, 1]
    """
    return _rejected_fraction(_decisions(originals, protected, tau, encoder, threads))


def evasion_rate(originals, u, tau, encoder=None, threads=None):
    """
    Protect every original with the deployment tiler and measure the pair evasion rate

    :param originals: list of AudioBuffer
    :param u: Ufp
    :param tau: threshold
    :param encoder: SpeakerEncoder or EncoderConfig
    :return: rate in [0, 1]
    """
    protected = parallel_map(lambda x: tiler(x, u), originals, threads)
    return pair_evasion_rate(originals, protected, tau, encoder, threads)


##################################################
# quality and speed

def segmental_snr(x, x_tilde, frame_ms=30, floor_db=-10.0, ceiling_db=35.0, silence=1e-10):
    """
    Mean over non-overlapping frames of 10 log10(|x_f|^2 / |x_f - x~_f|^2), each frame clamped to
    [floor_db, ceiling_db].  Frames of x with energy below silence are skipped, as is a trailing partial
    frame.

    :param x: reference AudioBuffer
    :param x_tilde: AudioBuffer of the same length
    :param frame_ms: frame length in milliseconds
    :return: dB
    """
    if len(x) != len(x_tilde):
        raise ShapeMismatchException(u"segmental SNR needs equal lengths, got {x} and {y}".format(x=len(x), y=len(x_tilde)))
    size = int(round(x.sample_rate * frame_ms / 1000.0))
    n = len(x) // size
    if n == 0:
        raise SnrException(u"audio of {x} samples is shorter than one {m}ms frame".format(x=len(x), m=frame_ms))
    ref = x.samples[:n * size].reshape(n, size)
    err = ref - x_tilde.samples[:n * size].reshape(n, size)
    energy = np.sum(ref * ref, axis=1)
    noise = np.sum(err * err, axis=1)
    voiced = energy >= silence
    if not np.any(voiced):
        raise SnrException(u"every frame is silent; segmental SNR is undefined")
    with np.errstate(divide="ignore"):
        snr = 10.0 * np.log10(energy[voiced] / noise[voiced])
    return float(np.mean(np.clip(snr, floor_db, ceiling_db)))


def mean_segmental_snr(originals, processed, frame_ms=30):
    """
    Segmental SNR averaged over aligned lists; pairs whose SNR is undefined are left out

    :return: dB, or None when no pair has one
    """
    if len(originals) != len(processed):
        raise AlignmentException(u"expected aligned lists, got {x} and {y} items".format(x=len(originals), y=len(processed)))
    values = []
    for x, y in zip(originals, processed):
        try:
            values.append(segmental_snr(x, y.fit_length(len(x)), frame_ms))
        except SnrException:
            app.logger.warning(u"Skipping a silent file in the segmental SNR")
    return float(np.mean(values)) if values else None


def rtc_benchmark(durations, u, sample_rate=16000, repeats=5, seed=0):
    """
    Real-time coefficient of the deployment tiler: the median processing time over the repeats divided by
    the audio duration.  Durations too short for one tile of the UFP are zero padded to the shortest
    usable input and still divided by the requested duration.

    :param durations: seconds, each positive
    :param u: Ufp
    :param sample_rate: rate of the generated audio
    :param repeats: timings per duration, at least 5
    :param seed: noise seed
    :return: list of (duration, rtc)
    """
    if repeats < 5:
        raise PreconditionException(u"at least 5 repetitions are needed, got {x}".format(x=repeats))
    out = []
    for i, duration in enumerate(durations):
        if duration <= 0:
            raise PreconditionException(u"benchmark durations must be positive, got {x}".format(x=duration))
        n = int(round(duration * sample_rate))
        if n < minimum_samples(u):
            app.logger.warning(u"{d}s is shorter than one UFP tile; padding to {m} samples".format(
                d=duration, m=minimum_samples(u)))
            n = minimum_samples(u)
        x = AudioBuffer(0.1 * make_rng(seed, "bench", i).standard_normal(n), sample_rate)
        timings = []
        for _ in range(repeats):
            started = time.perf_counter()
            tiler(x, u)
            timings.append(time.perf_counter() - started)
        rtc = float(np.median(timings)) / duration
        app.logger.debug(u"RTC at {d}s: {r:.6f}".format(d=duration, r=rtc))
        out.append((float(duration), rtc))
    return out


class ParamEfficiency(object):
    """
    Parameter count of a frequency-domain UFP, 2 B L_u, against that of a time-domain perturbation
    covering the same audio, one parameter per sample
    """

    def __init__(self, bins, frame_len, audio_seconds, sample_rate):
        self.bins = bins
        self.frame_len = frame_len
        self.audio_seconds = audio_seconds
        self.sample_rate = sample_rate
        self.p_freq = 2 * bins * frame_len
        self.p_time = int(round(audio_seconds * sample_rate))
        self.ratio = self.p_freq / float(self.p_time)

    def lines(self):
        return [
            u"P_freq = 2 x {b} x {l} = {p:,}".format(b=self.bins, l=self.frame_len, p=self.p_freq),
            u"P_time = {s:g} s x {r} Hz = {p:,}".format(s=self.audio_seconds, r=self.sample_rate, p=self.p_time),
            u"P_freq / P_time = {x:.4f}".format(x=self.ratio)
        ]

    def __str__(self):
        return u"\n".join(self.lines())


def param_efficiency_report(stft, frame_len, audio_seconds, sample_rate=16000):
    """
    :param stft: StftParams
    :param frame_len: L_u, positive
    :param audio_seconds: length of the audio a time-domain perturbation would cover, positive
    :param sample_rate: rate of that audio
    :return: ParamEfficiency
    """
    if frame_len <= 0:
        raise PreconditionException(u"frame length must be positive, got {x}".format(x=frame_len))
    if audio_seconds <= 0:
        raise PreconditionException(u"audio duration must be positive, got {x}".format(x=audio_seconds))
    return ParamEfficiency(stft.bins, int(frame_len), audio_seconds, sample_rate)


##################################################
# trial lists and corpora

class EmbeddingCache(object):
    """
    Embeddings of audio files keyed by absolute path and encoder hash.  Safe to share between threads;
    two threads asking for the same new file may both compute it, with the same result.
    """

    def __init__(self, encoder=None, sample_rate=None):
        self.encoder = as_encoder(encoder)
        self.sample_rate = sample_rate
        self._store = {}
        self._lock = threading.Lock()

    def _key(self, path):
        return os.path.abspath(path), getattr(self.encoder, "hash", id(self.encoder))

    def get(self, path):
        key = self._key(path)
        with self._lock:
            if key in self._store:
                return self._store[key]
        value = self.encoder.embed(load_audio(path, self.sample_rate))
        with self._lock:
            self._store.setdefault(key, value)
            return self._store[key]

    def __len__(self):
        with self._lock:
            return len(self._store)


def score_trials(trials, cache, threads=None):
    """
    Cosine score of every trial

    :param trials: list of Trial
    :param cache: EmbeddingCache
    :param threads: worker threads
    :return: list of (score, label, weight)
    """
    paths = list(OrderedDict.fromkeys([t.path_a for t in trials] + [t.path_b for t in trials]))
    parallel_map(cache.get, paths, threads)
    return [(cosine_similarity(cache.get(t.path_a), cache.get(t.path_b)), t.label, t.weight) for t in trials]


def make_trial_list(manifest, n_trials=500, seed=1234):
    """
    Balanced trial list from a corpus manifest: half same-speaker pairs of distinct files, half
    different-speaker pairs

    :param manifest: list of (path, speaker) or a path to read with read_manifest()
    :param n_trials: number of trials
    :param seed: run seed
    :return: list of Trial
    """
    entries = read_manifest(manifest) if isinstance(manifest, str) else list(manifest)
    speakers = OrderedDict()
    for path, speaker in entries:
        speakers.setdefault(speaker, []).append(path)
    names = list(speakers.keys())
    if len(names) < 2:
        raise CorpusException(u"a trial list needs at least 2 speakers, found {x}".format(x=len(names)))
    repeatable = [s for s in names if len(speakers[s]) >= 2]
    if not repeatable:
        raise CorpusException(u"a trial list needs a speaker with at least 2 files")

    rng = make_rng(seed, "trials")
    trials = []
    for i in range(n_trials):
        if i % 2 == 0:
            files = speakers[repeatable[int(rng.integers(len(repeatable)))]]
            a, b = rng.choice(len(files), size=2, replace=False)
            trials.append(Trial(files[int(a)], files[int(b)], 1))
        else:
            sa, sb = rng.choice(len(names), size=2, replace=False)
            fa, fb = speakers[names[int(sa)]], speakers[names[int(sb)]]
            trials.append(Trial(fa[int(rng.integers(len(fa)))], fb[int(rng.integers(len(fb)))], 0))
    return trials


def split_corpus(files, ratio=0.7, seed=1234):
    """
    Seeded shuffle of a file list into a training and a held-out part, both non-empty

    :param files: list of at least 2 items
    :param ratio: share for training
    :param seed: run seed
    :return: tuple of (train, heldout)
    """
    files = list(files)
    if len(files) < 2:
        raise CorpusException(u"need at least 2 files to split a corpus, got {x}".format(x=len(files)))
    if not 0.0 < ratio < 1.0:
        raise PreconditionException(u"train ratio must lie in (0, 1), got {x}".format(x=ratio))
    order = make_rng(seed, "split").permutation(len(files))
    n_train = min(len(files) - 1, max(1, int(round(ratio * len(files)))))
    return [files[i] for i in order[:n_train]], [files[i] for i in order[n_train:]]


def align_files(a_paths, b_paths):
    """
    Pair two file lists by base name

    :param a_paths: list of paths
    :param b_paths: list of paths
    :return: list of (a, b) in the order of a_paths
    """
    by_name = {os.path.basename(p): p for p in b_paths}
    names_a = {os.path.basename(p) for p in a_paths}
    unmatched = sorted(set(by_name.keys()).symmetric_difference(names_a))
    if unmatched:
        raise AlignmentException(u"files without a counterpart: {x}".format(x=", ".join(unmatched)))
    return [(p, by_name[os.path.basename(p)]) for p in a_paths]


##################################################
# reports

def evaluate_pairs(originals, protected, tau, encoder=None, eer=None, cloned=None, rtc=None, label="evaluation",
                   frame_ms=30, threads=None):
    """
    The metric suite over aligned originals and protected audio, and optionally clones of the protected
    audio

    :return: EvalReport
    """
    report = EvalReport(eer=eer, threshold=tau, rtc=rtc, label=label)
    report.evasion_rate = pair_evasion_rate(originals, protected, tau, encoder, threads)
    report.seg_snr_db = mean_segmental_snr(originals, protected, frame_ms)
    if cloned is not None:
        report.spr = spr(protected, cloned, tau, encoder, threads)
        report.dpr = dpr(originals, cloned, tau, encoder, threads)
        report.match_rate = match_rate(originals, cloned, tau, encoder, threads)
    return report


def noise_level_sweep(originals, u, etas, tau, encoder=None, frame_ms=30, threads=None):
    """
    Re-apply one trained UFP at several noise levels

    :param originals: list of AudioBuffer
    :param u: Ufp
    :param etas: noise levels
    :param tau: threshold
    :return: AttackTable keyed by eta
    """
    table = AttackTable(key="eta")
    for eta in etas:
        scaled = u.with_noise_level(eta)
        protected = parallel_map(lambda x: tiler(x, scaled), originals, threads)
        report = evaluate_pairs(originals, protected, tau, encoder, label=u"{x:g}".format(x=eta), frame_ms=frame_ms,
                                threads=threads)
        app.logger.info(u"eta={e:g}: evasion {r:.3f}, seg-SNR {s:.2f}dB".format(e=eta, r=report.evasion_rate,
                                                                              s=report.seg_snr_db))
        table.add(report)
    return table
