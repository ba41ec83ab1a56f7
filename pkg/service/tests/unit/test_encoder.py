import itertools

import numpy as np

from service.dsp import TooShortException
from service.encoder import (EncoderConfig, Encoder, get_encoder, as_encoder, embed, embed_adjoint, projection_matrix,
                             cosine_similarity, config_hash, SimilarityException)
from service.models import AudioBuffer
from service.tests.fixtures import UfpTestCase, TOY_STFT, toy_encoder, toy_encoder_config, speech, noise, tone
from service.ufptools import ConfigurationException, ShapeMismatchException, make_rng


def _fd_check(encoder, x, c, positions, h=1e-5, rtol=1e-4, atol=1e-7):
    analytic = encoder.embed_adjoint(x, c)
    assert analytic.shape == (len(x),)
    for n in positions:
        up = x.samples.copy()
        down = x.samples.copy()
        up[n] += h
        down[n] -= h
        fd = (c.dot(encoder.embed(x.replace(up))) - c.dot(encoder.embed(x.replace(down)))) / (2 * h)
        assert abs(fd - analytic[n]) <= rtol * abs(analytic[n]) + atol, (n, fd, analytic[n])


class TestConfig(UfpTestCase):

    def test_01_validation(self):
        with self.assertRaises(ConfigurationException):
            EncoderConfig(n_mels=1)
        with self.assertRaises(ConfigurationException):
            EncoderConfig(n_mels=20, dim=41)
        with self.assertRaises(ConfigurationException):
            EncoderConfig(dim=0)
        with self.assertRaises(ConfigurationException):
            Encoder(EncoderConfig(n_mels=513, dim=16, stft=TOY_STFT))

    def test_02_hash_and_cache(self):
        a = toy_encoder_config()
        b = toy_encoder_config()
        assert a == b and config_hash(a) == config_hash(b)
        assert config_hash(a) != config_hash(EncoderConfig())
        assert get_encoder(a) is get_encoder(b)
        enc = toy_encoder()
        assert as_encoder(enc) is enc
        assert as_encoder(None).dim == 64


class TestProjection(UfpTestCase):

    def test_01_orthonormal_rows(self):
        w = projection_matrix(64, 80, 7)
        assert w.shape == (64, 80)
        np.testing.assert_allclose(w.dot(w.T), np.eye(64), atol=1e-12)

    def test_02_seeded(self):
        np.testing.assert_array_equal(projection_matrix(16, 40, 7), projection_matrix(16, 40, 7))
        assert not np.array_equal(projection_matrix(16, 40, 7), projection_matrix(16, 40, 8))


class TestEmbedding(UfpTestCase):

    def test_01_unit_norm_and_deterministic(self):
        enc = toy_encoder()
        x = speech(0.5, speaker=1)
        e = enc.embed(x)
        assert e.shape == (16,)
        assert abs(np.linalg.norm(e) - 1.0) < 1e-12
        np.testing.assert_array_equal(e, enc.embed(x))

    def test_02_gain_invariant(self):
        x = speech(1.0, speaker=0)
        e1 = embed(x)
        e2 = embed(x.replace(0.5 * x.samples))
        assert cosine_similarity(e1, e2) > 0.999

    def test_03_too_short(self):
        with self.assertRaises(TooShortException):
            embed(AudioBuffer(np.zeros(500), 16000))

    def test_04_module_functions(self):
        cfg = toy_encoder_config()
        x = noise(0.3, seed=4)
        np.testing.assert_array_equal(embed(x, cfg), toy_encoder().embed(x))
        c = make_rng(0, "upstream").standard_normal(16)
        np.testing.assert_allclose(embed_adjoint(x, c, cfg), toy_encoder().embed_adjoint(x, c), atol=1e-15)

    def test_05_speakers_separate(self):
        embeddings = {}
        for s in range(2):
            embeddings[s] = [embed(speech(2.0, speaker=s, utterance=k)) for k in range(4)]
        within = [cosine_similarity(a, b) for s in range(2) for a, b in itertools.combinations(embeddings[s], 2)]
        cross = [cosine_similarity(a, b) for a in embeddings[0] for b in embeddings[1]]
        assert np.mean(within) > np.mean(cross)


class TestGradient(UfpTestCase):

    def test_01_finite_differences(self):
        enc = toy_encoder()
        x = noise(0.3, std=0.3, seed=5)
        x = x.replace(x.samples + tone(440, 0.3, amp=0.3).samples)
        c = make_rng(1, "direction").standard_normal(16)
        positions = make_rng(2, "positions").integers(0, len(x), size=20)
        _fd_check(enc, x, c, positions)

    def test_02_constant_signal(self):
        enc = toy_encoder()
        x = AudioBuffer(np.full(4800, 0.5), 16000)
        c = make_rng(3, "direction").standard_normal(16)
        positions = make_rng(4, "positions").integers(0, len(x), size=10)
        # the std sits at its floor here, so only a tiny step stays linear
        _fd_check(enc, x, c, positions, h=1e-7, rtol=1e-3, atol=2e-7)

    def test_03_zero_upstream(self):
        enc = toy_encoder()
        x = noise(0.3, seed=6)
        assert np.all(enc.embed_adjoint(x, np.zeros(16)) == 0.0)

    def test_04_radial_direction_has_no_gradient(self):
        enc = toy_encoder()
        x = speech(0.5, speaker=2)
        e = enc.embed(x)
        radial = enc.embed_adjoint(x, e)
        other = enc.embed_adjoint(x, make_rng(5, "direction").standard_normal(16))
        assert np.max(np.abs(radial)) < 1e-10 * max(np.max(np.abs(other)), 1.0)

    def test_05_bad_upstream(self):
        enc = toy_encoder()
        with self.assertRaises(ShapeMismatchException):
            enc.embed_adjoint(noise(0.3), np.zeros(15))


class TestCosine(UfpTestCase):

    def test_01_extremes(self):
        e = make_rng(6, "vector").standard_normal(64)
        assert cosine_similarity(e, e) == 1.0
        assert cosine_similarity(e, -e) == -1.0
        assert cosine_similarity(e, 3.0 * e) > 1.0 - 1e-12

    def test_02_symmetric_and_bounded(self):
        rng = make_rng(7, "vectors")
        for _ in range(20):
            a, b = rng.standard_normal(8), rng.standard_normal(8)
            s = cosine_similarity(a, b)
            assert s == cosine_similarity(b, a)
            assert -1.0 <= s <= 1.0

    def test_03_orthogonal(self):
        assert cosine_similarity([1.0, 0.0], [0.0, 2.0]) == 0.0

    def test_04_undefined(self):
        with self.assertRaises(SimilarityException):
            cosine_similarity([0.0, 0.0], [1.0, 0.0])
        with self.assertRaises(ShapeMismatchException):
            cosine_similarity([1.0, 0.0], [1.0, 0.0, 0.0])
