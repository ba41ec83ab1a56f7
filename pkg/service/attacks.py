"""
Adaptive attacks: waveform transforms an attacker might apply to protected audio to strip the
perturbation before cloning it.

Every attack keeps the sample rate and the length of its input and is deterministic.  The spectral
attacks resynthesise as x + iSTFT(S' - S), so samples outside the reconstructable interior are only
changed by what the attack changes.
"""
import numpy as np

from service.audio import resample
from service.core import app
from service.dsp import stft_array, istft_array, mel_filterbank
from service.evaluation import evaluate_pairs
from service.models import AttackTable, StftParams
from service.models.audio import fit_length
from service.tiler import tiler
from service.ufptools import ServiceException, parallel_map

QUANT_LEVELS = 256
MIN_WIENER_FRAMES = 10


class AttackException(ServiceException):
    """
    Exception class for attacks that can't be configured or applied
    """
    tag = "attack"


class AttackSpec(object):
    """
    An attack kind and its settings
    """

    KINDS = ["identity", "quantize", "resample", "mel_roundtrip", "denoise"]

    DEFAULTS = {
        "identity": {},
        "quantize": {},
        "resample": {"intermediate_rate": 8000, "expected_rate": 16000},
        "mel_roundtrip": {"n_mels": 40},
        "denoise": {"noise_quantile": 0.1}
    }

    def __init__(self, kind, params=None):
        if kind not in self.KINDS:
            raise AttackException(u"unknown attack {x}; expected one of {y}".format(x=kind, y=", ".join(self.KINDS)))
        merged = dict(self.DEFAULTS[kind])
        for key, value in (params or {}).items():
            if key not in merged:
                raise AttackException(u"attack {x} has no setting {y}".format(x=kind, y=key))
            merged[key] = value
        if kind == "resample" and (merged["intermediate_rate"] <= 0 or merged["intermediate_rate"] >= merged["expected_rate"]):
            raise AttackException(u"intermediate rate must lie below the input rate, got {x}".format(x=merged["intermediate_rate"]))
        if kind == "mel_roundtrip" and merged["n_mels"] < 2:
            raise AttackException(u"mel round trip needs at least 2 bands, got {x}".format(x=merged["n_mels"]))
        if kind == "denoise" and not 0.0 < merged["noise_quantile"] <= 1.0:
            raise AttackException(u"noise quantile must lie in (0, 1], got {x}".format(x=merged["noise_quantile"]))
        self.kind = kind
        self.params = merged

    @property
    def label(self):
        return self.kind

    @classmethod
    def suite(cls, config=None):
        """
        The identity attack followed by the four adaptive attacks, with settings from configuration

        :param config: app.config-like mapping, or None for the defaults
        :return: list of AttackSpec
        """
        config = config or {}
        return [
            cls("identity"),
            cls("quantize"),
            cls("resample", {"intermediate_rate": config.get("ATTACK_INTERMEDIATE_RATE", 8000),
                             "expected_rate": config.get("AUDIO_SAMPLE_RATE", 16000)}),
            cls("mel_roundtrip", {"n_mels": config.get("ATTACK_MEL_BANDS", 40)}),
            cls("denoise", {"noise_quantile": config.get("ATTACK_NOISE_QUANTILE", 0.1)})
        ]


def identity(x):
    return x.replace(x.samples.copy())


def quantize_8bit(x):
    """
    Uniform mid-rise quantisation to 256 levels over [-1, 1] and back

    :param x: AudioBuffer
    :return: AudioBuffer
    """
    step = 2.0 / QUANT_LEVELS
    index = np.clip(np.floor((x.samples + 1.0) / step), 0, QUANT_LEVELS - 1)
    return x.replace(-1.0 + (index + 0.5) * step)


def resample_attack(x, intermediate_rate=8000, expected_rate=16000):
    """
    Down to the intermediate rate and back up, trimmed or padded to the input length

    :param x: AudioBuffer at expected_rate
    :return: AudioBuffer
    """
    if x.sample_rate != expected_rate:
        raise AttackException(u"resample attack expects {e} Hz input, got {x} Hz".format(e=expected_rate, x=x.sample_rate))
    down = resample(x, intermediate_rate)
    up = resample(down, x.sample_rate)
    return x.replace(fit_length(up.samples, len(x)))


def _resynthesise(x, spec, changed, p):
    return x.replace(x.samples + fit_length(istft_array(changed - spec, p), len(x)))


def mel_roundtrip(x, n_mels=40, stft=None, filterbank=None):
    """
    Map the magnitude spectrogram to mel energies and back through the pseudo-inverse of the filterbank,
    keep the original phase and resynthesise

    :param x: AudioBuffer
    :param n_mels: mel bands, ignored when a filterbank is given
    :param stft: StftParams; defaults apply when None
    :param filterbank: optional explicit n x B filterbank
    :return: AudioBuffer
    """
    p = stft or StftParams()
    fb = mel_filterbank(p, n_mels, x.sample_rate) if filterbank is None else np.asarray(filterbank, dtype=np.float64)
    spec = stft_array(x.samples, p)
    magnitude = np.abs(spec)
    linear = np.maximum(np.linalg.pinv(fb).dot(fb.dot(magnitude)), 0.0)
    return _resynthesise(x, spec, linear * np.exp(1j * np.angle(spec)), p)


def wiener_denoise(x, stft=None, noise_quantile=0.1):
    """
    Spectral Wiener gain max(0, 1 - N / |S|^2), the noise spectrum N being the mean power of the
    lowest-energy frames

    :param x: AudioBuffer of at least 10 frames
    :param stft: StftParams; defaults apply when None
    :param noise_quantile: share of frames used for the noise estimate
    :return: AudioBuffer
    """
    p = stft or StftParams()
    spec = stft_array(x.samples, p) if len(x) >= p.n_fft else np.zeros((p.bins, 0))
    n_frames = spec.shape[1]
    if n_frames < MIN_WIENER_FRAMES:
        raise AttackException(u"wiener denoising needs at least {m} frames, got {x}".format(m=MIN_WIENER_FRAMES, x=n_frames))
    power = spec.real ** 2 + spec.imag ** 2
    quietest = np.argsort(power.sum(axis=0), kind="stable")[:int(np.ceil(noise_quantile * n_frames))]
    noise = power[:, quietest].mean(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(power > 0, np.maximum(0.0, 1.0 - noise / power), 0.0)
    return _resynthesise(x, spec, gain * spec, p)


def apply_attack(spec, x, stft=None):
    """
    Apply the attack an AttackSpec describes

    :param spec: AttackSpec
    :param x: AudioBuffer
    :param stft: StftParams for the spectral attacks
    :return: AudioBuffer
    """
    if spec.kind == "identity":
        return identity(x)
    if spec.kind == "quantize":
        return quantize_8bit(x)
    if spec.kind == "resample":
        return resample_attack(x, spec.params["intermediate_rate"], spec.params["expected_rate"])
    if spec.kind == "mel_roundtrip":
        return mel_roundtrip(x, spec.params["n_mels"], stft)
    return wiener_denoise(x, stft, spec.params["noise_quantile"])


def run_attack_suite(protected, originals, u, tau, encoder=None, cloned=None, specs=None, stft=None, eer=None,
                     threads=None):
    """
    Apply each attack to each protected file and evaluate the attacked audio against the originals

    :param protected: list of AudioBuffer, or None to protect the originals with u
    :param originals: list of AudioBuffer, aligned with protected
    :param u: Ufp
    :param tau: threshold
    :param encoder: SpeakerEncoder or EncoderConfig
    :param cloned: optional list of clones of the protected audio
    :param specs: attacks to run; the identity and the four adaptive attacks when None
    :return: AttackTable with one row per attack
    """
    if protected is None:
        protected = parallel_map(lambda x: tiler(x, u), originals, threads)
    specs = specs or AttackSpec.suite()
    table = AttackTable(key="attack")
    for spec in specs:
        attacked = parallel_map(lambda x: apply_attack(spec, x, stft), protected, threads)
        report = evaluate_pairs(originals, attacked, tau, encoder, eer=eer, cloned=cloned, label=spec.label,
                                threads=threads)
        app.logger.info(u"Attack {a}: evasion rate {r:.3f}".format(a=spec.label, r=report.evasion_rate))
        table.add(report)
    return table
