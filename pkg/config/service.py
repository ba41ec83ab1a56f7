"""
Main configuration file for the application

On deployment, desired configuration can be overridden by the provision of a local.cfg file in the
project root, by a sectioned configuration file passed with --config, or by command line flags.

Every setting below can be reached from a sectioned file as [section] key, where the section is the
first word of the setting name, lower-cased.  So TRAIN_ITERATIONS is [train] iterations.
"""

##################################################
# general runtime settings

LOG_LEVEL = "INFO"
"""level for app.logger - DEBUG, INFO, WARNING or ERROR"""

SEED = 1234
"""single seed from which all randomness is derived"""

THREADS = 0
"""maximum worker threads; 0 means use the cpu count.  The UFP_THREADS environment variable wins over this"""

##################################################
# audio i/o

AUDIO_SAMPLE_RATE = 16000
"""canonical working rate; every input is resampled to this on load"""

##################################################
# short-time fourier transform

STFT_N_FFT = 1024
"""analysis window length in samples; gives 513 onesided bins"""

STFT_HOP = 256
"""hop size in samples - must divide STFT_N_FFT"""

STFT_WINDOW = "hann"
"""analysis/synthesis window kind"""

##################################################
# universal frequential perturbation

UFP_FRAME_LEN = 120
"""frame length L_u of the perturbation patch"""

UFP_NOISE_LEVEL = 0.4
"""noise level eta, an absolute multiplier on the smoothed perturbation"""

UFP_SMOOTHER_K = 5
"""width of the averaging kernel used by the frequency smoother (odd)"""

##################################################
# surrogate speaker encoder

ENCODER_N_MELS = 40
"""number of mel bands"""

ENCODER_DIM = 64
"""embedding dimension; must not exceed 2 * ENCODER_N_MELS"""

ENCODER_PROJECTION_SEED = 7
"""seed for the fixed orthonormal projection"""

##################################################
# UFP optimisation

TRAIN_ITERATIONS = 300
"""number of full-batch iterations K"""

TRAIN_LAMBDA = 0.1
"""weight of the perception loss"""

TRAIN_LEARNING_RATE = 0.05
"""adam learning rate"""

TRAIN_ADAM_BETA1 = 0.9

TRAIN_ADAM_BETA2 = 0.999

TRAIN_ADAM_EPS = 1e-8

TRAIN_MASK_RATIO = 0.3
"""probability that a segment is dropped by the training-mode tiler"""

TRAIN_AUG_NOISE_STD = 0.005
"""standard deviation of the additive noise augmentation"""

TRAIN_AUG_JITTER_MAX = 256
"""largest circular shift, in samples, of the jitter augmentation"""

TRAIN_MASK_THRESHOLDS = None
"""optional per-bin magnitude caps (list of STFT_N_FFT / 2 + 1 positive floats); None disables the box projection"""

TRAIN_RATIO = 0.7
"""share of the corpus used to optimise the UFP; the rest is held out"""

##################################################
# evaluation

EVAL_THRESHOLD = None
"""verification threshold tau; None means derive it from a trial list"""

EVAL_N_TRIALS = 500
"""size of the trial list built from a synthetic corpus manifest"""

EVAL_SEG_FRAME_MS = 30
"""frame length for segmental SNR"""

EVAL_BENCH_DURATIONS = [1, 5, 10, 30, 60, 100]
"""durations, in seconds, timed by the bench command"""

EVAL_BENCH_REPEATS = 5
"""repetitions per duration; the median is reported"""

##################################################
# adaptive attacks

ATTACK_MEL_BANDS = 40
"""mel bands used by the mel round-trip attack"""

ATTACK_INTERMEDIATE_RATE = 8000
"""intermediate rate of the resample attack"""

ATTACK_NOISE_QUANTILE = 0.1
"""share of lowest-energy frames used to estimate the wiener noise spectrum"""

##################################################
# synthetic corpus

SYNTH_N_SPEAKERS = 4

SYNTH_UTTERANCES = 30

SYNTH_DURATION = 3.0
"""utterance duration in seconds"""

##################################################
# output formats

REPORT_CROSSWALKS = {
    "text": "service.xwalks.TextTable",
    "json": "service.xwalks.JSONRecord"
}
"""crosswalks used to serialise reports; keyed by the format name used on the command line"""
