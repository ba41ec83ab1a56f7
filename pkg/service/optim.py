"""
Optimisation of a universal frequential perturbation.

The objective, averaged over the training utterances x_i with clean embeddings z_i, is

::

    J(delta) = mean_i [ -|z_i - E(aug(F(x_i, delta)))|^2 + lambda * |x_i - F(x_i, delta)|^2 / T_i ]

where F is the training-mode tiler and aug the noise-and-jitter augmentation.  The first term pushes
the protected embedding away from the clean one; the second keeps the protected waveform close to the
original.  Each iteration draws fresh tiler and augmentation realisations for every utterance from
seeded streams, evaluates J and its exact gradient over the real and imaginary planes, and takes one
Adam step, optionally followed by the per-bin box projection.
"""
import time

import numpy as np

from service.core import app
from service.dsp import frame_count, stft_array, TooShortException
from service.encoder import as_encoder
from service.models import Ufp, TileAugment, TrainReport, Spectrogram
from service.models.audio import fit_length
from service.tiler import (realise_augment, tile_realised, tiler_adjoint, perturbed_spectrogram, smooth_plane,
                           minimum_samples)
from service.ufptools import (ServiceException, ConfigurationException, PreconditionException, ShapeMismatchException,
                              make_rng, derive_seed, pairwise_sum, parallel_map)


class NonFiniteGradientException(ServiceException):
    """
    Exception class for a gradient containing NaN or infinity
    """
    tag = "non-finite"


class OptimisationDivergence(ServiceException):
    """
    Raised when the objective stops being finite.  Carries the last UFP for which it was finite and the
    report up to that iteration.
    """
    tag = "divergence"

    def __init__(self, message, ufp=None, report=None):
        super(OptimisationDivergence, self).__init__(message)
        self.ufp = ufp
        self.report = report


class TrainConfig(object):
    """
    Hyper-parameters of one optimisation run
    """

    def __init__(self, iterations=300, lam=0.1, learning_rate=0.05, adam_beta1=0.9, adam_beta2=0.999, adam_eps=1e-8,
                 mask_ratio=0.3, aug_noise_std=0.005, aug_jitter_max=256, seed=1234, mask_thresholds=None):
        if int(iterations) < 1:
            raise ConfigurationException(u"TRAIN_ITERATIONS: must be at least 1, got {x}".format(x=iterations))
        if lam < 0:
            raise ConfigurationException(u"TRAIN_LAMBDA: must be non-negative, got {x}".format(x=lam))
        if learning_rate <= 0:
            raise ConfigurationException(u"TRAIN_LEARNING_RATE: must be positive, got {x}".format(x=learning_rate))
        for name, beta in (("TRAIN_ADAM_BETA1", adam_beta1), ("TRAIN_ADAM_BETA2", adam_beta2)):
            if not 0.0 < beta < 1.0:
                raise ConfigurationException(u"{n}: must lie in (0, 1), got {x}".format(n=name, x=beta))
        if adam_eps <= 0:
            raise ConfigurationException(u"TRAIN_ADAM_EPS: must be positive, got {x}".format(x=adam_eps))
        if not 0.0 <= mask_ratio <= 1.0:
            raise ConfigurationException(u"TRAIN_MASK_RATIO: must lie in [0, 1], got {x}".format(x=mask_ratio))
        if aug_noise_std < 0:
            raise ConfigurationException(u"TRAIN_AUG_NOISE_STD: must be non-negative, got {x}".format(x=aug_noise_std))
        if int(aug_jitter_max) < 0:
            raise ConfigurationException(u"TRAIN_AUG_JITTER_MAX: must be non-negative, got {x}".format(x=aug_jitter_max))
        self.iterations = int(iterations)
        self.lam = float(lam)
        self.learning_rate = float(learning_rate)
        self.adam_beta1 = float(adam_beta1)
        self.adam_beta2 = float(adam_beta2)
        self.adam_eps = float(adam_eps)
        self.mask_ratio = float(mask_ratio)
        self.aug_noise_std = float(aug_noise_std)
        self.aug_jitter_max = int(aug_jitter_max)
        self.seed = int(seed)
        self.mask_thresholds = None if mask_thresholds is None else np.asarray(mask_thresholds, dtype=np.float64)

    @classmethod
    def from_config(cls, config):
        return cls(iterations=config.get("TRAIN_ITERATIONS"), lam=config.get("TRAIN_LAMBDA"),
                   learning_rate=config.get("TRAIN_LEARNING_RATE"), adam_beta1=config.get("TRAIN_ADAM_BETA1"),
                   adam_beta2=config.get("TRAIN_ADAM_BETA2"), adam_eps=config.get("TRAIN_ADAM_EPS"),
                   mask_ratio=config.get("TRAIN_MASK_RATIO"), aug_noise_std=config.get("TRAIN_AUG_NOISE_STD"),
                   aug_jitter_max=config.get("TRAIN_AUG_JITTER_MAX"), seed=config.get("SEED"),
                   mask_thresholds=config.get("TRAIN_MASK_THRESHOLDS"))


##################################################
# loss terms

def feature_loss(z, z_tilde):
    """
    Feature disruption loss -|z - z~|^2 and its gradient with respect to z~

    :param z: clean embedding
    :param z_tilde: protected embedding
    :return: tuple of (loss, gradient)
    """
    z = np.asarray(z, dtype=np.float64)
    z_tilde = np.asarray(z_tilde, dtype=np.float64)
    if z.shape != z_tilde.shape:
        raise ShapeMismatchException(u"embedding shapes differ: {x} and {y}".format(x=z.shape, y=z_tilde.shape))
    diff = z - z_tilde
    return -float(diff.dot(diff)), 2.0 * diff


def perception_loss(x, x_tilde):
    """
    Perception loss |x - x~|^2 / T and its gradient with respect to x~.  x~ is trimmed or padded to the
    length of x first.

    :param x: original AudioBuffer
    :param x_tilde: protected AudioBuffer
    :return: tuple of (loss, gradient over the fitted x~)
    """
    n = len(x)
    diff = fit_length(x_tilde.samples, n) - x.samples
    return float(diff.dot(diff)) / n, 2.0 * diff / n


##################################################
# temporal augmentation

class AugmentRecord(object):
    """
    The noise and circular shift drawn by one temporal_augmentation() call
    """

    def __init__(self, shift, noise):
        self.shift = int(shift)
        self.noise = noise


def draw_augmentation(n_samples, cfg, rng):
    """
    Draw the noise and shift for a signal of n_samples

    :param n_samples: signal length
    :param cfg: TrainConfig
    :param rng: numpy Generator
    :return: AugmentRecord
    """
    noise = None
    if cfg.aug_noise_std > 0:
        noise = cfg.aug_noise_std * rng.standard_normal(n_samples)
    shift = 0
    if cfg.aug_jitter_max > 0:
        shift = int(rng.integers(-cfg.aug_jitter_max, cfg.aug_jitter_max + 1))
    return AugmentRecord(shift, noise)


def apply_augmentation(x, record):
    samples = x.samples if record.noise is None else x.samples + record.noise
    if record.shift != 0:
        samples = np.roll(samples, record.shift)
    elif record.noise is None:
        samples = samples.copy()
    return x.replace(samples)


def augmentation_adjoint(grad, record):
    """
    Adjoint of apply_augmentation(): the inverse shift; the noise is additive and drops out

    :param grad: gradient over the augmented samples
    :param record: AugmentRecord of the forward call
    :return: gradient over the samples before augmentation
    """
    if record.shift == 0:
        return grad
    return np.roll(grad, -record.shift)


def temporal_augmentation(x, cfg, rng):
    """
    Add Gaussian noise and apply a random circular shift

    :param x: AudioBuffer
    :param cfg: TrainConfig
    :param rng: numpy Generator
    :return: tuple of (augmented AudioBuffer, AugmentRecord)
    """
    record = draw_augmentation(len(x), cfg, rng)
    return apply_augmentation(x, record), record


##################################################
# adam and the box projection

class AdamState(object):
    """
    First and second moment estimates for a list of parameter arrays, and the step count
    """

    def __init__(self, shapes):
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0


def adam_step(params, grads, state, lr, betas=(0.9, 0.999), eps=1e-8):
    """
    One Adam update with bias correction

    :param params: list of parameter arrays
    :param grads: list of gradient arrays, same shapes
    :param state: AdamState, updated in place
    :param lr: learning rate
    :param betas: (beta1, beta2)
    :param eps: denominator offset
    :return: list of updated parameter arrays
    """
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise ShapeMismatchException(u"parameter and gradient shapes differ")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientException(u"gradient has {n} non-finite entries at step {t}".format(
                n=int(np.count_nonzero(~np.isfinite(g))), t=state.t + 1))
    beta1, beta2 = betas
    state.t += 1
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g
        m_hat = state.m[i] / (1.0 - beta1 ** state.t)
        v_hat = state.v[i] / (1.0 - beta2 ** state.t)
        out.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
    return out


def project_mask_box(u, caps):
    """
    Rescale every (re, im) entry whose magnitude exceeds the cap of its bin back onto the cap

    :param u: Ufp
    :param caps: B positive per-bin magnitude caps
    :return: Ufp
    """
    caps = np.asarray(caps, dtype=np.float64).reshape(-1)
    if caps.shape[0] != u.bins:
        raise ShapeMismatchException(u"expected {b} caps, got {x}".format(b=u.bins, x=caps.shape[0]))
    if np.any(caps <= 0):
        raise PreconditionException(u"magnitude caps must be positive")
    mag = np.hypot(u.delta_re, u.delta_im)
    limit = caps[:, None]
    # entries already on the disk boundary up to rounding are left alone, so projecting twice is a no-op
    over = mag > limit * (1.0 + 1e-12)
    scale = np.where(over, limit / np.where(over, mag, 1.0), 1.0)
    return u.with_planes(u.delta_re * scale, u.delta_im * scale)


##################################################
# objective

class Realisation(object):
    """
    Everything random about one utterance in one iteration: the tiler shift and mask, and the temporal
    augmentation
    """

    def __init__(self, tile, augment):
        self.tile = tile
        self.augment = augment


def draw_realisations(samples, u, cfg, iteration):
    """
    Draw one Realisation per training utterance from streams derived from the run seed, the iteration
    and the utterance index

    :param samples: list of AudioBuffer
    :param u: Ufp
    :param cfg: TrainConfig
    :param iteration: iteration number, from 0
    :return: list of Realisation
    """
    out = []
    for i, x in enumerate(samples):
        aug = TileAugment(enabled=True, mask_ratio=cfg.mask_ratio, shift="random",
                          rng_seed=derive_seed(cfg.seed, "tile", iteration, i))
        tile = realise_augment(aug, frame_count(len(x), u.stft), u.frame_len)
        record = draw_augmentation(len(x), cfg, make_rng(cfg.seed, "augment", iteration, i))
        out.append(Realisation(tile, record))
    return out


def _sample_terms(x, z, u, realisation, lam, encoder):
    protected = tile_realised(x, u, realisation.tile)
    l_per, g_per = perception_loss(x, protected)
    augmented = apply_augmentation(protected, realisation.augment)
    tape = encoder.forward(augmented)
    l_fea, g_z = feature_loss(z, tape.embedding)
    g_x = augmentation_adjoint(encoder.backward(tape, g_z), realisation.augment) + lam * g_per
    g_re, g_im = tiler_adjoint(g_x, x, u, realisation.tile)
    return l_fea, l_per, g_re, g_im


def objective_and_gradient(u, samples, embeddings, realisations, lam, encoder, threads=None):
    """
    The objective at fixed realisations and its exact gradient over the UFP planes

    :param u: Ufp
    :param samples: list of AudioBuffer
    :param embeddings: clean embeddings of samples
    :param realisations: one Realisation per sample
    :param lam: perception loss weight
    :param encoder: SpeakerEncoder
    :param threads: worker threads
    :return: tuple of (total, feature, perception, gradient over delta_re, gradient over delta_im)
    """
    if not (len(samples) == len(embeddings) == len(realisations)) or len(samples) == 0:
        raise PreconditionException(u"need one embedding and one realisation for each of at least one sample")
    encoder = as_encoder(encoder)
    terms = parallel_map(lambda i: _sample_terms(samples[i], embeddings[i], u, realisations[i], lam, encoder),
                         range(len(samples)), threads)
    n = float(len(samples))
    feature = sum(t[0] for t in terms) / n
    perception = sum(t[1] for t in terms) / n
    g_re = pairwise_sum([t[2] for t in terms]) / n
    g_im = pairwise_sum([t[3] for t in terms]) / n
    return feature + lam * perception, feature, perception, g_re, g_im


def optimize_ufp(train_set, cfg, encoder, stft, frame_len, noise_level, smoother_k=5, threads=None):
    """
    Learn a UFP on a set of clean utterances

    :param train_set: non-empty list of AudioBuffer, each long enough for frame_len frames
    :param cfg: TrainConfig
    :param encoder: SpeakerEncoder or EncoderConfig
    :param stft: StftParams
    :param frame_len: L_u
    :param noise_level: eta
    :param smoother_k: smoother width
    :param threads: worker threads
    :return: tuple of (Ufp, TrainReport)
    """
    if len(train_set) == 0:
        raise PreconditionException(u"the training set is empty")
    encoder = as_encoder(encoder)
    started = time.perf_counter()

    u = Ufp.random(stft, frame_len, noise_level, smoother_k, make_rng(cfg.seed, "ufp-init"))
    need = minimum_samples(u)
    for x in train_set:
        if len(x) < need:
            raise TooShortException(u"training utterance of {d:.3f}s is shorter than the {m:.3f}s a UFP of {l} frames "
                                    u"needs".format(d=x.duration, m=need / float(x.sample_rate), l=frame_len))
    if cfg.mask_thresholds is not None and cfg.mask_thresholds.shape[0] != u.bins:
        raise ConfigurationException(u"TRAIN_MASK_THRESHOLDS: expected {b} caps, got {x}".format(
            b=u.bins, x=cfg.mask_thresholds.shape[0]))

    app.logger.info(u"Optimising a {b}x{l} UFP on {n} utterance(s) for {k} iteration(s)".format(
        b=u.bins, l=frame_len, n=len(train_set), k=cfg.iterations))
    embeddings = parallel_map(encoder.embed, train_set, threads)
    state = AdamState([u.delta_re.shape, u.delta_im.shape])
    report = TrainReport()

    for it in range(cfg.iterations):
        realisations = draw_realisations(train_set, u, cfg, it)
        total, feature, perception, g_re, g_im = objective_and_gradient(u, train_set, embeddings, realisations,
                                                                        cfg.lam, encoder, threads)
        if not np.isfinite(total):
            report.wall_time = time.perf_counter() - started
            app.logger.error(u"Objective became non-finite at iteration {i}".format(i=it + 1))
            raise OptimisationDivergence(u"objective is {x} at iteration {i}; "
                                         u"returning the UFP from iteration {j}".format(x=total, i=it + 1, j=it),
                                         u, report)
        report.append(total, feature, perception)
        try:
            re, im = adam_step([u.delta_re, u.delta_im], [g_re, g_im], state, cfg.learning_rate,
                               (cfg.adam_beta1, cfg.adam_beta2), cfg.adam_eps)
        except NonFiniteGradientException as e:
            report.wall_time = time.perf_counter() - started
            app.logger.error(u"Non-finite gradient at iteration {i}".format(i=it + 1))
            raise OptimisationDivergence(u"{x}; returning the UFP from iteration {j}".format(x=e, j=it), u, report)
        u = u.with_planes(re, im)
        if cfg.mask_thresholds is not None:
            u = project_mask_box(u, cfg.mask_thresholds)
        app.logger.debug(u"Iteration {i}: total={t:.6g} feature={f:.6g} perception={p:.6g}".format(
            i=it + 1, t=total, f=feature, p=perception))

    report.wall_time = time.perf_counter() - started
    app.logger.info(u"Optimisation finished in {s:.1f}s, final feature loss {f:.6g}".format(
        s=report.wall_time, f=report.feature[-1]))
    return u, report


##################################################
# diagnostics

def gradient_amplification(u, tiles=(1, 2, 4, 8), seed=0, sample_rate=16000, floor=1e-3):
    """
    Gradient norm of a surrogate objective, measured on white noise spanning increasing numbers of
    tiles.  The surrogate is a frame-additive log-spectral distance between the clean and perturbed
    power spectra, not the training objective of optimize_ufp, and needs no encoder.  It sums one term
    per frame, so each extra tile contributes its own local gradient to the same UFP entries.

    :param u: Ufp
    :param tiles: tile counts to measure
    :param seed: noise seed
    :param sample_rate: rate of the generated noise
    :param floor: constant inside the logarithm
    :return: list of (tiles, gradient norm)
    """
    out = []
    for n in tiles:
        n_samples = (n * u.frame_len - 1) * u.stft.hop + u.stft.n_fft
        noise = 0.1 * make_rng(seed, "amplification", n).standard_normal(n_samples)
        spec = stft_array(noise, u.stft)
        clean = Spectrogram.from_complex(spec, u.stft, sample_rate)
        realised = realise_augment(None, clean.n_frames, u.frame_len)
        perturbed = perturbed_spectrogram(clean, u, realised)
        p_clean = clean.power() + floor
        p_pert = perturbed.power() + floor
        diff = np.log(p_pert) - np.log(p_clean)
        g_power = 2.0 * diff / p_pert
        g_re_s = 2.0 * perturbed.re * g_power
        g_im_s = 2.0 * perturbed.im * g_power
        g_re = np.zeros((u.bins, u.frame_len))
        g_im = np.zeros((u.bins, u.frame_len))
        for start in realised.segments():
            g_re += g_re_s[:, start:start + u.frame_len]
            g_im += g_im_s[:, start:start + u.frame_len]
        g_re = u.noise_level * smooth_plane(g_re, u.smoother_k)
        g_im = u.noise_level * smooth_plane(g_im, u.smoother_k)
        norm = float(np.sqrt(np.sum(g_re ** 2) + np.sum(g_im ** 2)))
        app.logger.debug(u"Gradient norm over {n} tile(s): {g:.6g}".format(n=n, g=norm))
        out.append((n, norm))
    return out
