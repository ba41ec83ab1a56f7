import os

import numpy as np

from service.models import AudioBuffer, StftParams, Spectrogram, Ufp, UfpFormatException, RealisedAugment, TileAugment
from service.models import TrainReport, EvalReport, AttackTable, BenchTable, Trial, TrialListException
from service.models.audio import fit_length
from service.models.trials import parse_trial_list, read_trial_list, write_trial_list
from service.models.ufp import HEADER
from service.tests.fixtures import UfpTestCase, TOY_STFT, toy_ufp
from service.ufptools import PreconditionException, ShapeMismatchException


class TestAudioBuffer(UfpTestCase):

    def test_01_basic(self):
        x = AudioBuffer([0.0, 0.5, -0.5, 1.0], 16000)
        assert len(x) == 4
        assert x.samples.dtype == np.float64
        assert x.duration == 4 / 16000.0

    def test_02_bad_rate(self):
        with self.assertRaises(PreconditionException):
            AudioBuffer([0.0], 0)
        with self.assertRaises(PreconditionException):
            AudioBuffer([0.0], None)

    def test_03_empty(self):
        with self.assertRaises(PreconditionException):
            AudioBuffer([], 16000).require_samples()

    def test_04_fit_length(self):
        np.testing.assert_array_equal(fit_length(np.array([1.0, 2.0, 3.0]), 2), [1.0, 2.0])
        np.testing.assert_array_equal(fit_length(np.array([1.0, 2.0]), 4), [1.0, 2.0, 0.0, 0.0])
        x = AudioBuffer([1.0, 2.0], 8000).fit_length(3)
        assert len(x) == 3 and x.sample_rate == 8000


class TestStftParams(UfpTestCase):

    def test_01_defaults(self):
        p = StftParams()
        assert p.bins == 513
        assert p.overlap == 4

    def test_02_validation(self):
        with self.assertRaises(PreconditionException):
            StftParams(1023, 256)
        with self.assertRaises(PreconditionException):
            StftParams(1024, 300)
        with self.assertRaises(PreconditionException):
            StftParams(1024, 256, "hamming")

    def test_03_equality(self):
        assert StftParams(256, 64) == TOY_STFT
        assert StftParams(256, 128) != TOY_STFT
        assert hash(StftParams(256, 64)) == hash(TOY_STFT)


class TestSpectrogram(UfpTestCase):

    def test_01_shape_checks(self):
        with self.assertRaises(ShapeMismatchException):
            Spectrogram(np.zeros((129, 3)), np.zeros((129, 4)), TOY_STFT)
        with self.assertRaises(ShapeMismatchException):
            Spectrogram(np.zeros((128, 3)), np.zeros((128, 3)), TOY_STFT)

    def test_02_inner_and_power(self):
        a = Spectrogram(np.ones((129, 2)), np.full((129, 2), 2.0), TOY_STFT)
        assert a.inner(a) == 129 * 2 * 5.0
        np.testing.assert_array_equal(a.power(), np.full((129, 2), 5.0))
        assert (a + a).inner(a) == 2 * a.inner(a)
        assert (a - a).inner(a) == 0.0


class TestUfp(UfpTestCase):

    def test_01_validation(self):
        with self.assertRaises(ShapeMismatchException):
            Ufp(np.zeros((129, 4)), np.zeros((129, 5)), 0.4, TOY_STFT)
        with self.assertRaises(ShapeMismatchException):
            Ufp(np.zeros((100, 4)), np.zeros((100, 4)), 0.4, TOY_STFT)
        with self.assertRaises(PreconditionException):
            Ufp(np.zeros((129, 4)), np.zeros((129, 4)), -0.1, TOY_STFT)
        with self.assertRaises(PreconditionException):
            Ufp(np.zeros((129, 4)), np.zeros((129, 4)), 0.4, TOY_STFT, smoother_k=4)

    def test_02_params(self):
        u = Ufp.zeros(StftParams(), 120, 0.4)
        assert u.n_params == 2 * 513 * 120 == 123120

    def test_03_bytes_round_trip(self):
        u = toy_ufp(frame_len=6, noise_level=0.25, smoother_k=5)
        v = Ufp.from_bytes(u.to_bytes())
        np.testing.assert_array_equal(u.delta_re, v.delta_re)
        np.testing.assert_array_equal(u.delta_im, v.delta_im)
        assert v.noise_level == 0.25
        assert v.smoother_k == 5
        assert v.stft == TOY_STFT

    def test_04_default_file_size(self):
        u = Ufp.zeros(StftParams(), 120, 0.4)
        data = u.to_bytes()
        assert len(data) == HEADER.size + 16 * 513 * 120
        assert len(data) < 2.1e6

    def test_05_bad_bytes(self):
        data = toy_ufp().to_bytes()
        with self.assertRaises(UfpFormatException):
            Ufp.from_bytes(b"XXXX" + data[4:])
        with self.assertRaises(UfpFormatException):
            Ufp.from_bytes(data[:-8])
        with self.assertRaises(UfpFormatException):
            Ufp.from_bytes(data[:10])

    def test_06_copy_independent(self):
        u = toy_ufp()
        v = u.copy()
        v.delta_re[0, 0] += 1.0
        assert u.delta_re[0, 0] != v.delta_re[0, 0]
        assert u.with_noise_level(0.0).noise_level == 0.0


class TestAugment(UfpTestCase):

    def test_01_tile_augment_validation(self):
        with self.assertRaises(PreconditionException):
            TileAugment(True, 1.5)
        with self.assertRaises(PreconditionException):
            TileAugment(True, 0.3, shift=-1)
        assert not TileAugment.deploy().enabled

    def test_02_segments(self):
        r = RealisedAugment(0, [True, True], 5, 2)
        assert r.segments() == [0, 2]
        r = RealisedAugment(1, [True, True], 5, 2)
        assert r.segments() == [1, 3]
        r = RealisedAugment(2, [True, True], 5, 2)
        assert r.segments() == [2]
        r = RealisedAugment(0, [False, True], 5, 2)
        assert r.segments() == [2]


class TestTrials(UfpTestCase):

    def test_01_parse(self):
        text = "# comment\nspk0/a.wav spk0/b.wav 1\n\nspk0/a.wav spk1/c.wav 0 0.5  # trailing\n"
        trials = parse_trial_list(text, "/corpus")
        assert len(trials) == 2
        assert trials[0].path_a == os.path.join("/corpus", "spk0/a.wav")
        assert trials[0].label == 1 and trials[0].weight == 1.0
        assert trials[1].label == 0 and trials[1].weight == 0.5

    def test_02_parse_errors(self):
        with self.assertRaises(TrialListException):
            parse_trial_list("a.wav b.wav\n")
        with self.assertRaises(TrialListException):
            parse_trial_list("a.wav b.wav 2\n")
        with self.assertRaises(TrialListException):
            parse_trial_list("a.wav b.wav 1 -1\n")
        with self.assertRaises(TrialListException):
            parse_trial_list("a.wav b.wav yes\n")

    def test_03_write_read(self):
        trials = [Trial(self.path("a.wav"), self.path("b.wav"), 1), Trial(self.path("a.wav"), self.path("c.wav"), 0, 2.0)]
        path = self.path("trials.txt")
        write_trial_list(trials, path)
        back = read_trial_list(path)
        assert [(t.path_a, t.path_b, t.label, t.weight) for t in back] == \
               [(t.path_a, t.path_b, t.label, t.weight) for t in trials]

    def test_04_missing_file(self):
        with self.assertRaises(TrialListException):
            read_trial_list(self.path("absent.txt"))


class TestReports(UfpTestCase):

    def test_01_train_report(self):
        r = TrainReport()
        r.append(-1.0, -1.5, 5.0)
        r.append(-2.0, -2.5, 5.0)
        assert r.iterations == 2
        assert r.rows()[1] == [2, -2.0, -2.5, 5.0]
        assert TrainReport.from_record(r.to_record()) == r

    def test_02_eval_report(self):
        r = EvalReport(eer=0.1, threshold=0.5, evasion_rate=0.75, seg_snr_db=12.0, label="x")
        assert r.columns()[0] == "label"
        assert r.rows()[0][0] == "x"
        assert EvalReport.from_record(r.to_record()) == r
        assert r != EvalReport(eer=0.2, threshold=0.5, evasion_rate=0.75, seg_snr_db=12.0, label="x")

    def test_03_attack_table(self):
        t = AttackTable(key="eta")
        t.add(EvalReport(evasion_rate=0.1, label="0.1"))
        t.add(EvalReport(evasion_rate=0.9, label="1"))
        assert t.labels() == ["0.1", "1"]
        assert t.get("1").evasion_rate == 0.9
        assert t.get("2") is None
        assert t.columns()[0] == "eta"
        assert AttackTable.from_record(t.to_record()) == t

    def test_04_bench_table(self):
        t = BenchTable([(1, 0.01), (5, 0.002)], 123120, 1024000)
        assert t.rows() == [[1.0, 0.01], [5.0, 0.002]]
        assert BenchTable.from_record(t.to_record()) == t
