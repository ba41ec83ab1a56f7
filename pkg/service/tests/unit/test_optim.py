import numpy as np

from service.core import app
from service.dsp import TooShortException
from service.models import AudioBuffer, Ufp
from service.optim import (TrainConfig, feature_loss, perception_loss, temporal_augmentation, draw_augmentation,
                           apply_augmentation, augmentation_adjoint, AugmentRecord, AdamState, adam_step,
                           project_mask_box, draw_realisations, objective_and_gradient, optimize_ufp,
                           gradient_amplification, NonFiniteGradientException, OptimisationDivergence)
from service.tests.fixtures import UfpTestCase, TOY_STFT, toy_ufp, toy_encoder, speech, noise
from service.ufptools import ConfigurationException, PreconditionException, ShapeMismatchException, make_rng


def _quiet(**kwargs):
    settings = dict(aug_noise_std=0.0, aug_jitter_max=0)
    settings.update(kwargs)
    return TrainConfig(**settings)


class TestTrainConfig(UfpTestCase):

    def test_01_validation(self):
        for bad in [dict(iterations=0), dict(learning_rate=0.0), dict(lam=-1.0), dict(adam_beta1=1.0),
                    dict(adam_beta2=0.0), dict(adam_eps=0.0), dict(mask_ratio=1.5), dict(aug_noise_std=-0.1),
                    dict(aug_jitter_max=-1)]:
            with self.assertRaises(ConfigurationException):
                TrainConfig(**bad)

    def test_02_from_config(self):
        cfg = TrainConfig.from_config(app.config)
        assert cfg.iterations == 300
        assert cfg.lam == 0.1
        assert cfg.learning_rate == 0.05
        assert cfg.mask_ratio == 0.3
        assert cfg.mask_thresholds is None


class TestLosses(UfpTestCase):

    def test_01_feature_loss(self):
        loss, grad = feature_loss([1.0, 0.0], [0.0, 1.0])
        assert loss == -2.0
        np.testing.assert_array_equal(grad, [2.0, -2.0])
        loss, grad = feature_loss([0.6, 0.8], [0.6, 0.8])
        assert loss == 0.0 and np.all(grad == 0.0)
        with self.assertRaises(ShapeMismatchException):
            feature_loss([1.0, 0.0], [1.0])

    def test_02_perception_loss(self):
        x = AudioBuffer(np.zeros(4), 16000)
        loss, grad = perception_loss(x, x.replace(np.full(4, 0.1)))
        self.assertAlmostEqual(loss, 0.01, places=15)
        np.testing.assert_allclose(grad, np.full(4, 0.05))
        loss, _ = perception_loss(x, x)
        assert loss == 0.0

    def test_03_perception_fits_length(self):
        x = AudioBuffer(np.ones(4), 16000)
        loss, grad = perception_loss(x, AudioBuffer(np.ones(6), 16000))
        assert loss == 0.0 and grad.shape == (4,)
        loss, _ = perception_loss(x, AudioBuffer(np.ones(2), 16000))
        assert loss == 0.5


class TestAugmentation(UfpTestCase):

    def test_01_disabled_is_identity(self):
        x = noise(0.2, seed=1)
        y, record = temporal_augmentation(x, _quiet(), make_rng(0, "aug"))
        np.testing.assert_array_equal(y.samples, x.samples)
        assert record.shift == 0 and record.noise is None

    def test_02_jitter_preserves_energy(self):
        x = noise(0.2, seed=2)
        cfg = TrainConfig(aug_noise_std=0.0, aug_jitter_max=100)
        for i in range(10):
            y, record = temporal_augmentation(x, cfg, make_rng(i, "aug"))
            assert -100 <= record.shift <= 100
            assert abs(np.sum(y.samples ** 2) - np.sum(x.samples ** 2)) < 1e-9
            np.testing.assert_array_equal(y.samples, np.roll(x.samples, record.shift))

    def test_03_noise_level(self):
        x = AudioBuffer(np.zeros(20000), 16000)
        y, _ = temporal_augmentation(x, TrainConfig(aug_noise_std=0.01, aug_jitter_max=0), make_rng(3, "aug"))
        assert abs(np.std(y.samples) - 0.01) < 0.001

    def test_04_adjoint(self):
        rng = make_rng(4, "aug-adjoint")
        x = rng.standard_normal(500)
        g = rng.standard_normal(500)
        record = AugmentRecord(37, None)
        forward = apply_augmentation(AudioBuffer(x, 16000), record).samples
        assert abs(np.dot(forward, g) - np.dot(x, augmentation_adjoint(g, record))) < 1e-9

    def test_05_reproducible(self):
        cfg = TrainConfig(aug_noise_std=0.01, aug_jitter_max=50)
        a = draw_augmentation(100, cfg, make_rng(5, "aug"))
        b = draw_augmentation(100, cfg, make_rng(5, "aug"))
        assert a.shift == b.shift
        np.testing.assert_array_equal(a.noise, b.noise)


class TestAdam(UfpTestCase):

    def test_01_zero_gradient(self):
        p = np.arange(6.0).reshape(2, 3)
        state = AdamState([p.shape])
        out = adam_step([p], [np.zeros_like(p)], state, 0.1)
        np.testing.assert_array_equal(out[0], p)
        assert state.t == 1

    def test_02_constant_gradient_step_size(self):
        p = np.zeros(5)
        g = np.array([1.0, -2.0, 0.5, 3.0, -0.1])
        state = AdamState([p.shape])
        for _ in range(100):
            q = adam_step([p], [g], state, 0.01)[0]
            np.testing.assert_allclose(np.abs(q - p), 0.01, rtol=1e-5)
            p = q

    def test_03_matches_hand_trace(self):
        grads = [0.5, -1.0, 2.0, 0.25, -0.75]
        p, m, v = 1.0, 0.0, 0.0
        expected = []
        for t, g in enumerate(grads, start=1):
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            p = p - 0.05 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
            expected.append(p)
        param = np.array([1.0])
        state = AdamState([(1,)])
        for g, e in zip(grads, expected):
            param = adam_step([param], [np.array([g])], state, 0.05)[0]
            self.assertAlmostEqual(float(param[0]), e, places=14)

    def test_04_non_finite(self):
        p = np.zeros(3)
        with self.assertRaises(NonFiniteGradientException):
            adam_step([p], [np.array([0.0, np.nan, 1.0])], AdamState([p.shape]), 0.1)
        with self.assertRaises(NonFiniteGradientException):
            adam_step([p], [np.array([0.0, np.inf, 1.0])], AdamState([p.shape]), 0.1)

    def test_05_shapes(self):
        with self.assertRaises(ShapeMismatchException):
            adam_step([np.zeros(3)], [np.zeros(4)], AdamState([(3,)]), 0.1)


class TestProjection(UfpTestCase):

    def _ufp(self):
        re = np.zeros((129, 2))
        im = np.zeros((129, 2))
        re[0, 0], im[0, 0] = 3.0, 4.0
        re[5, 1], im[5, 1] = 0.3, -0.4
        return Ufp(re, im, 0.4, TOY_STFT)

    def test_01_rescales_onto_cap(self):
        u = project_mask_box(self._ufp(), np.full(129, 2.5))
        assert (u.delta_re[0, 0], u.delta_im[0, 0]) == (1.5, 2.0)
        assert (u.delta_re[5, 1], u.delta_im[5, 1]) == (0.3, -0.4)

    def test_02_idempotent(self):
        once = project_mask_box(self._ufp(), np.full(129, 2.5))
        twice = project_mask_box(once, np.full(129, 2.5))
        np.testing.assert_array_equal(once.delta_re, twice.delta_re)
        np.testing.assert_array_equal(once.delta_im, twice.delta_im)

    def test_03_large_caps_are_identity(self):
        u = self._ufp()
        v = project_mask_box(u, np.full(129, 1e6))
        np.testing.assert_array_equal(u.delta_re, v.delta_re)
        np.testing.assert_array_equal(u.delta_im, v.delta_im)

    def test_04_bad_caps(self):
        with self.assertRaises(ShapeMismatchException):
            project_mask_box(self._ufp(), np.ones(10))
        caps = np.ones(129)
        caps[3] = 0.0
        with self.assertRaises(PreconditionException):
            project_mask_box(self._ufp(), caps)


class TestObjective(UfpTestCase):

    def test_01_finite_differences(self):
        samples = [speech(1.0, speaker=0), speech(1.0, speaker=1)]
        encoder = toy_encoder()
        embeddings = [encoder.embed(x) for x in samples]
        u = toy_ufp(frame_len=8)
        cfg = TrainConfig(aug_jitter_max=64, seed=11)
        realisations = draw_realisations(samples, u, cfg, 0)
        total, feature, perception, g_re, g_im = objective_and_gradient(u, samples, embeddings, realisations, 0.1,
                                                                        encoder)
        assert abs(total - (feature + 0.1 * perception)) < 1e-12

        def objective(v):
            return objective_and_gradient(v, samples, embeddings, realisations, 0.1, encoder)[0]

        rng = make_rng(12, "fd-entries")
        h = 1e-4
        for _ in range(20):
            plane = int(rng.integers(2))
            b, l = int(rng.integers(u.bins)), int(rng.integers(u.frame_len))
            up, down = u.copy(), u.copy()
            (up.delta_re if plane == 0 else up.delta_im)[b, l] += h
            (down.delta_re if plane == 0 else down.delta_im)[b, l] -= h
            fd = (objective(up) - objective(down)) / (2 * h)
            an = (g_re if plane == 0 else g_im)[b, l]
            assert abs(fd - an) <= 1e-3 * abs(an) + 1e-7, (plane, b, l, fd, an)

    def test_02_thread_independent(self):
        samples = [speech(1.0, speaker=s, utterance=s) for s in range(3)]
        encoder = toy_encoder()
        embeddings = [encoder.embed(x) for x in samples]
        u = toy_ufp(frame_len=8)
        realisations = draw_realisations(samples, u, TrainConfig(seed=2), 4)
        one = objective_and_gradient(u, samples, embeddings, realisations, 0.1, encoder, threads=1)
        many = objective_and_gradient(u, samples, embeddings, realisations, 0.1, encoder, threads=4)
        assert one[0] == many[0]
        np.testing.assert_array_equal(one[3], many[3])
        np.testing.assert_array_equal(one[4], many[4])

    def test_03_needs_aligned_input(self):
        u = toy_ufp(frame_len=8)
        with self.assertRaises(PreconditionException):
            objective_and_gradient(u, [], [], [], 0.1, toy_encoder())


class TestOptimise(UfpTestCase):

    def test_01_zero_noise_level_is_flat(self):
        samples = [speech(1.0, speaker=0), speech(1.0, speaker=1)]
        cfg = _quiet(iterations=3, seed=5)
        u, report = optimize_ufp(samples, cfg, toy_encoder(), TOY_STFT, 8, 0.0, 3)
        assert report.total == [0.0, 0.0, 0.0]
        assert report.perception == [0.0, 0.0, 0.0]
        start = Ufp.random(TOY_STFT, 8, 0.0, 3, make_rng(5, "ufp-init"))
        np.testing.assert_array_equal(u.delta_re, start.delta_re)

    def test_02_heavy_perception_weight_shrinks(self):
        samples = [noise(1.0, std=0.5, seed=1), noise(1.0, std=0.5, seed=2)]
        encoder = toy_encoder()
        start = Ufp.random(TOY_STFT, 8, 0.4, 3, make_rng(9, "ufp-init"))
        norms = [start.norm()]
        for k in range(1, 11):
            u, _ = optimize_ufp(samples, _quiet(iterations=k, lam=1e6, learning_rate=0.01, seed=9), encoder, TOY_STFT,
                                8, 0.4, 3)
            norms.append(u.norm())
        assert all(b < a for a, b in zip(norms, norms[1:])), norms

    def test_03_feature_loss_improves(self):
        samples = [speech(1.5, speaker=0), speech(1.5, speaker=1)]
        cfg = _quiet(iterations=20, mask_ratio=0.0, seed=3)
        _, report = optimize_ufp(samples, cfg, toy_encoder(), TOY_STFT, 8, 0.4, 3)
        assert report.iterations == 20
        assert report.feature[-1] < report.feature[0]

    def test_04_reproducible(self):
        samples = [speech(1.0, speaker=0), speech(1.0, speaker=2)]
        cfg = TrainConfig(iterations=3, aug_jitter_max=64, seed=8)
        u1, r1 = optimize_ufp(samples, cfg, toy_encoder(), TOY_STFT, 8, 0.4, 3, threads=1)
        u2, r2 = optimize_ufp(samples, cfg, toy_encoder(), TOY_STFT, 8, 0.4, 3, threads=4)
        assert r1.losses() == r2.losses()
        assert u1.to_bytes() == u2.to_bytes()

    def test_05_box_projection_applied(self):
        samples = [speech(1.0, speaker=0), speech(1.0, speaker=1)]
        cfg = _quiet(iterations=2, mask_thresholds=np.full(129, 0.5), seed=4)
        u, _ = optimize_ufp(samples, cfg, toy_encoder(), TOY_STFT, 8, 0.4, 3)
        assert np.all(np.hypot(u.delta_re, u.delta_im) <= 0.5 * (1.0 + 1e-9))

    def test_06_divergence(self):
        bad = speech(1.0, speaker=0)
        samples = bad.samples.copy()
        samples[100] = np.nan
        with self.assertRaises(OptimisationDivergence) as cm:
            optimize_ufp([bad.replace(samples), speech(1.0, speaker=1)], _quiet(iterations=3), toy_encoder(),
                         TOY_STFT, 8, 0.4, 3)
        assert cm.exception.ufp is not None
        assert cm.exception.report.iterations == 0
        assert "returning the UFP from iteration 0" in str(cm.exception)
        assert np.all(np.isfinite(cm.exception.ufp.delta_re))

    def test_07_preconditions(self):
        with self.assertRaises(PreconditionException):
            optimize_ufp([], _quiet(iterations=1), toy_encoder(), TOY_STFT, 8, 0.4, 3)
        with self.assertRaises(TooShortException):
            optimize_ufp([AudioBuffer(np.zeros(600), 16000)], _quiet(iterations=1), toy_encoder(), TOY_STFT, 8, 0.4, 3)
        with self.assertRaises(ConfigurationException):
            optimize_ufp([speech(1.0)], _quiet(iterations=1, mask_thresholds=np.ones(10)), toy_encoder(), TOY_STFT,
                         8, 0.4, 3)


class TestAmplification(UfpTestCase):

    def test_01_norm_grows_with_tiles(self):
        result = gradient_amplification(toy_ufp(frame_len=4), tiles=(1, 2, 4, 8))
        assert [n for n, _ in result] == [1, 2, 4, 8]
        norms = [g for _, g in result]
        assert all(b > a for a, b in zip(norms, norms[1:])), norms
