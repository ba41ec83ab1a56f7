"""
Command line entry point.

::

    ufp-guard synth corpus/
    ufp-guard train corpus/ me.ufp --speaker spk00
    ufp-guard protect recordings/ me.ufp protected/
    ufp-guard evaluate recordings/ protected/ --trials trials.txt
    ufp-guard attack protected/ recordings/ me.ufp --trials trials.txt
    ufp-guard bench

Configuration is layered: the defaults in config/service.py, then local.cfg, then --config FILE, then
--set section.key=value and the dedicated flags of each command.  Errors are printed to standard error as

::

    ufp-guard: error[<tag>]: <message>

and the exit status is 1.
"""
import os, sys, time

import click

from service import core
from service.core import app
from service.attacks import AttackSpec, run_attack_suite
from service.audio import load_audio, write_wav, list_audio_files
from service.encoder import get_encoder
from service.evaluation import (EmbeddingCache, compute_eer_threshold, score_trials, make_trial_list, split_corpus,
                                evasion_rate, evaluate_pairs, align_files, noise_level_sweep, rtc_benchmark,
                                param_efficiency_report)
from service.models import BenchTable, AttackTable, Ufp
from service.models.trials import read_trial_list
from service.optim import optimize_ufp, OptimisationDivergence
from service.runconfig import RunConfig
from service.synth import generate_synthetic_corpus, read_manifest, has_manifest, CorpusException
from service.tiler import protect as protect_buffer, save_ufp, load_ufp
from service.ufptools import ServiceException, ConfigurationException, make_rng
from service.xwalks import get_crosswalk, write_report

PROG = "ufp-guard"
MIN_CORPUS = 2


def _apply(settings):
    """
    Write dedicated flag values into the configuration, skipping the ones not given

    :param settings: dict of setting name to value or None
    """
    for name, value in settings.items():
        if value is not None:
            app.config[name] = value


def _resolve(**settings):
    _apply(settings)
    return RunConfig.from_config(app.config)


def _emit(report, fmt, out=None):
    click.echo(get_crosswalk(fmt).serialise(report), nl=False)
    if out:
        write_report(report, out)


##################################################
# corpus helpers

def _corpus_entries(corpus, speaker=None):
    """
    The files of a corpus directory, through its manifest when it has one

    :return: list of (path, speaker id or None)
    """
    if has_manifest(corpus):
        entries = read_manifest(corpus)
        if speaker is not None:
            entries = [e for e in entries if e[1] == speaker]
            if not entries:
                raise CorpusException(u"speaker {x} has no files in {y}".format(x=speaker, y=corpus))
        return entries
    if speaker is not None:
        raise CorpusException(u"--speaker needs a corpus with a manifest; {x} has none".format(x=corpus))
    if not os.path.exists(corpus):
        raise CorpusException(u"corpus {x} does not exist".format(x=corpus))
    return [(p, None) for p in list_audio_files(corpus)]


def _load_all(paths, run):
    return [load_audio(p, run.sample_rate) for p in paths]


def resolve_threshold(run, trials_path=None, manifest=None):
    """
    The verification threshold: EVAL_THRESHOLD when set, otherwise the equal error rate point of the
    given trial list, or of one built from a corpus manifest

    :return: tuple of (tau, eer); both None when there is nothing to derive tau from
    """
    if run.threshold is not None:
        return float(run.threshold), None
    if trials_path is not None:
        trials = read_trial_list(trials_path)
    elif manifest is not None:
        trials = make_trial_list(manifest, run.n_trials, run.seed)
    else:
        return None, None
    cache = EmbeddingCache(get_encoder(run.encoder), run.sample_rate)
    tau, eer = compute_eer_threshold(score_trials(trials, cache, run.threads))
    app.logger.info(u"Threshold {t:.6f} at EER {e:.4f} over {n} trial(s)".format(t=tau, e=eer, n=len(trials)))
    return tau, eer


##################################################
# commands

@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("-c", "--config", "config_file", type=click.Path(exists=True, dir_okay=False),
              help="sectioned key = value configuration file loaded over the defaults")
@click.option("--set", "overrides", multiple=True, metavar="SECTION.KEY=VALUE",
              help="override one setting, e.g. --set train.iterations=50 (repeatable)")
@click.option("--seed", type=int, help="run seed from which all randomness is derived [SEED]")
@click.option("--threads", type=int, help="worker threads [THREADS]; UFP_THREADS wins")
@click.option("-v", "--verbose", is_flag=True, help="log at DEBUG level")
@click.option("-q", "--quiet", is_flag=True, help="log at WARNING level")
def cli(config_file, overrides, seed, threads, verbose, quiet):
    """Learn and apply universal frequential perturbations against voice cloning."""
    if config_file:
        core.add_configuration(config_file)
    for option in overrides:
        core.set_option(option)
    _apply({"SEED": seed, "THREADS": threads})
    level = "DEBUG" if verbose else ("WARNING" if quiet else None)
    core.initialise(level)


@cli.command()
@click.argument("corpus", type=click.Path(exists=True))
@click.argument("out_ufp", type=click.Path(dir_okay=False))
@click.option("--speaker", help="train on one speaker of a corpus with a manifest")
@click.option("--trials", "trials_path", type=click.Path(exists=True, dir_okay=False),
              help="trial list from which to derive the threshold")
@click.option("--iterations", type=int, help="optimisation iterations [TRAIN_ITERATIONS]")
@click.option("--noise-level", type=float, help="noise level eta [UFP_NOISE_LEVEL]")
@click.option("--frame-len", type=int, help="UFP frame length L_u [UFP_FRAME_LEN]")
@click.option("--lambda", "lam", type=float, help="perception loss weight [TRAIN_LAMBDA]")
@click.option("--train-ratio", type=float, help="share of the corpus used for training [TRAIN_RATIO]")
@click.option("--report", "report_path", type=click.Path(dir_okay=False),
              help="write the training report here (.json for the structured record) [OUT_UFP.report.json]")
def train(corpus, out_ufp, speaker, trials_path, iterations, noise_level, frame_len, lam, train_ratio, report_path):
    """Optimise a UFP on the clean utterances in CORPUS and write it to OUT_UFP."""
    run = _resolve(TRAIN_ITERATIONS=iterations, UFP_NOISE_LEVEL=noise_level, UFP_FRAME_LEN=frame_len,
                   TRAIN_LAMBDA=lam, TRAIN_RATIO=train_ratio)
    click.echo(u" ".join(u"{k}={v}".format(k=k, v=v) for k, v in run.echo()))
    report_path = report_path or out_ufp + ".report.json"

    entries = _corpus_entries(corpus, speaker)
    if len(entries) < MIN_CORPUS:
        raise CorpusException(u"training needs at least {m} audio files, found {n} in {x}".format(
            m=MIN_CORPUS, n=len(entries), x=corpus))
    train_paths, heldout_paths = split_corpus([e[0] for e in entries], run.train_ratio, run.seed)
    train_set = _load_all(train_paths, run)
    heldout_set = _load_all(heldout_paths, run)
    encoder = get_encoder(run.encoder)

    try:
        u, report = optimize_ufp(train_set, run.train, encoder, run.stft, run.frame_len, run.noise_level,
                                 run.smoother_k, run.threads)
    except OptimisationDivergence as e:
        if e.ufp is not None:
            save_ufp(e.ufp, out_ufp + ".last")
            app.logger.error(u"Saved the UFP from before the divergence to {x}".format(x=out_ufp + ".last"))
        raise
    save_ufp(u, out_ufp)

    tau, _ = resolve_threshold(run, trials_path, corpus if has_manifest(corpus) else None)
    if tau is None:
        app.logger.warning(u"No threshold available (set EVAL_THRESHOLD or pass --trials); evasion rates skipped")
    else:
        report.train_evasion = evasion_rate(train_set, u, tau, encoder, run.threads)
        report.heldout_evasion = evasion_rate(heldout_set, u, tau, encoder, run.threads)
    write_report(report, report_path)
    click.echo(u"wrote {x}: {n} parameters, {k} iterations, wall time {s:.1f}s".format(
        x=out_ufp, n=u.n_params, k=report.iterations, s=report.wall_time))
    if report.heldout_evasion is not None:
        click.echo(u"held-out evasion rate: {r:.4f} (tau={t:.6f})".format(r=report.heldout_evasion, t=tau))


@cli.command()
@click.argument("source", type=click.Path(exists=True))
@click.argument("ufp_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("out", type=click.Path())
def protect(source, ufp_path, out):
    """Apply the UFP at UFP_PATH to SOURCE (a WAV file or directory) and write the result to OUT."""
    run = _resolve()
    u = load_ufp(ufp_path, run.stft)
    paths = list_audio_files(source)
    if os.path.isdir(source):
        os.makedirs(out, exist_ok=True)
        targets = [os.path.join(out, os.path.basename(p)) for p in paths]
    else:
        targets = [out]
    for path, target in zip(paths, targets):
        x = load_audio(path, run.sample_rate)
        started = time.perf_counter()
        y = protect_buffer(x, u)
        elapsed = time.perf_counter() - started
        write_wav(y, target)
        click.echo(u"{x}  {d:.3f}s  rtc={r:.6f}".format(x=os.path.basename(target), d=x.duration, r=elapsed / x.duration))
    app.logger.info(u"Protected {n} file(s) into {x}".format(n=len(paths), x=out))


@cli.command()
@click.argument("originals", type=click.Path(exists=True))
@click.argument("protected", type=click.Path(exists=True))
@click.option("--cloned", type=click.Path(exists=True), help="clones made from the protected audio")
@click.option("--trials", "trials_path", type=click.Path(exists=True, dir_okay=False),
              help="trial list from which to derive the threshold and EER")
@click.option("--format", "fmt", default="text", show_default=True, help="console format: text or json")
@click.option("--out", type=click.Path(dir_okay=False), help="also write the report here")
def evaluate(originals, protected, cloned, trials_path, fmt, out):
    """Score PROTECTED audio against the ORIGINALS it was made from."""
    run = _resolve()
    tau, eer = resolve_threshold(run, trials_path)
    if tau is None:
        raise ConfigurationException(u"EVAL_THRESHOLD: unset and no --trials given; cannot verify")
    pairs = align_files(list_audio_files(originals), list_audio_files(protected))
    orig = _load_all([a for a, _ in pairs], run)
    prot = [b.fit_length(len(a)) for a, b in zip(orig, _load_all([b for _, b in pairs], run))]
    clones = None
    if cloned is not None:
        clone_pairs = align_files([b for _, b in pairs], list_audio_files(cloned))
        clones = _load_all([c for _, c in clone_pairs], run)
    report = evaluate_pairs(orig, prot, tau, get_encoder(run.encoder), eer=eer, cloned=clones,
                            frame_ms=run.seg_frame_ms, threads=run.threads)
    _emit(report, fmt, out)


@cli.command()
@click.argument("protected", type=click.Path(exists=True))
@click.argument("originals", type=click.Path(exists=True))
@click.argument("ufp_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--cloned", type=click.Path(exists=True), help="clones made from the protected audio")
@click.option("--trials", "trials_path", type=click.Path(exists=True, dir_okay=False),
              help="trial list from which to derive the threshold and EER")
@click.option("--format", "fmt", default="text", show_default=True, help="console format: text or json")
@click.option("--out", type=click.Path(dir_okay=False), help="also write the table here")
def attack(protected, originals, ufp_path, cloned, trials_path, fmt, out):
    """Run the adaptive attacks on PROTECTED audio and evaluate against the ORIGINALS."""
    run = _resolve()
    u = load_ufp(ufp_path, run.stft)
    tau, eer = resolve_threshold(run, trials_path)
    if tau is None:
        raise ConfigurationException(u"EVAL_THRESHOLD: unset and no --trials given; cannot verify")
    pairs = align_files(list_audio_files(originals), list_audio_files(protected))
    orig = _load_all([a for a, _ in pairs], run)
    prot = [b.fit_length(len(a)) for a, b in zip(orig, _load_all([b for _, b in pairs], run))]
    clones = None
    if cloned is not None:
        clones = _load_all([c for _, c in align_files([b for _, b in pairs], list_audio_files(cloned))], run)
    table = run_attack_suite(prot, orig, u, tau, get_encoder(run.encoder), cloned=clones,
                             specs=AttackSpec.suite(app.config), stft=run.stft, eer=eer, threads=run.threads)
    _emit(table, fmt, out)


@cli.command()
@click.option("--ufp", "ufp_path", type=click.Path(exists=True, dir_okay=False),
              help="time this UFP instead of a seeded random one of the configured shape")
@click.option("--format", "fmt", default="text", show_default=True, help="console format: text or json")
@click.option("--out", type=click.Path(dir_okay=False), help="also write the table here")
def bench(ufp_path, fmt, out):
    """Time the deployment tiler over a range of durations and report parameter efficiency."""
    run = _resolve()
    if ufp_path:
        u = load_ufp(ufp_path, run.stft)
    else:
        u = Ufp.random(run.stft, run.frame_len, run.noise_level, run.smoother_k, make_rng(run.seed, "ufp-init"))
    timings = rtc_benchmark(run.bench_durations, u, run.sample_rate, run.bench_repeats, run.seed)
    efficiency = param_efficiency_report(run.stft, u.frame_len, max(run.bench_durations), run.sample_rate)
    _emit(BenchTable(timings, efficiency.p_freq, efficiency.p_time), fmt, out)
    click.echo(str(efficiency))


@cli.command()
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--speakers", type=int, help="number of speakers [SYNTH_N_SPEAKERS]")
@click.option("--utterances", type=int, help="utterances per speaker [SYNTH_UTTERANCES]")
@click.option("--duration", type=float, help="seconds per utterance [SYNTH_DURATION]")
def synth(out_dir, speakers, utterances, duration):
    """Generate a seeded synthetic multi-speaker corpus in OUT_DIR."""
    run = _resolve(SYNTH_N_SPEAKERS=speakers, SYNTH_UTTERANCES=utterances, SYNTH_DURATION=duration)
    entries = generate_synthetic_corpus(out_dir, app.config["SYNTH_N_SPEAKERS"], app.config["SYNTH_UTTERANCES"],
                                        app.config["SYNTH_DURATION"], run.seed, run.sample_rate)
    click.echo(u"wrote {n} file(s) and {x}".format(n=len(entries), x=os.path.join(out_dir, "manifest.txt")))


@cli.command()
@click.argument("corpus", type=click.Path(exists=True, file_okay=False))
@click.option("--param", type=click.Choice(["eta", "frame_len", "train_ratio"]), default="eta", show_default=True,
              help="the setting to vary")
@click.option("--values", required=True, help="comma separated values, e.g. 0.1,0.4,1.0")
@click.option("--speaker", help="train on one speaker of the corpus")
@click.option("--format", "fmt", default="text", show_default=True, help="console format: text or json")
@click.option("--out", type=click.Path(dir_okay=False), help="also write the table here")
def ablate(corpus, param, values, speaker, fmt, out):
    """Vary the noise level, frame length or train ratio and report evasion rate and quality per value.

    Noise levels reuse one trained UFP; frame lengths and train ratios retrain for each value."""
    run = _resolve()
    try:
        grid = [float(v) for v in values.split(",") if v.strip() != ""]
    except ValueError:
        raise ConfigurationException(u"--values: expected comma separated numbers, got {x}".format(x=values))
    entries = _corpus_entries(corpus, speaker)
    if len(entries) < MIN_CORPUS:
        raise CorpusException(u"ablation needs at least {m} audio files, found {n}".format(m=MIN_CORPUS, n=len(entries)))
    tau, eer = resolve_threshold(run, manifest=corpus if has_manifest(corpus) else None)
    if tau is None:
        raise ConfigurationException(u"EVAL_THRESHOLD: unset and the corpus has no manifest; cannot verify")
    encoder = get_encoder(run.encoder)

    def trained(frame_len, ratio):
        train_paths, heldout_paths = split_corpus([e[0] for e in entries], ratio, run.seed)
        u, _ = optimize_ufp(_load_all(train_paths, run), run.train, encoder, run.stft, frame_len, run.noise_level,
                            run.smoother_k, run.threads)
        return u, _load_all(heldout_paths, run)

    if param == "eta":
        u, heldout = trained(run.frame_len, run.train_ratio)
        table = noise_level_sweep(heldout, u, grid, tau, encoder, run.seg_frame_ms, run.threads)
    else:
        table = AttackTable(key=param)
        for value in grid:
            u, heldout = trained(int(value) if param == "frame_len" else run.frame_len,
                                 value if param == "train_ratio" else run.train_ratio)
            protected = [protect_buffer(x, u) for x in heldout]
            table.add(evaluate_pairs(heldout, protected, tau, encoder, eer=eer, label=u"{x:g}".format(x=value),
                                     frame_ms=run.seg_frame_ms, threads=run.threads))
    _emit(table, fmt, out)


def main(args=None):
    """
    Console script entry point: runs the command group and turns application errors into a tagged
    message and exit status 1
    """
    try:
        cli.main(args=args, prog_name=PROG, standalone_mode=False)
    except ServiceException as e:
        click.echo(u"{p}: error[{t}]: {m}".format(p=PROG, t=e.tag, m=e), err=True)
        sys.exit(1)
    except click.exceptions.Abort:
        click.echo(u"{p}: aborted".format(p=PROG), err=True)
        sys.exit(1)
    except click.ClickException as e:
        e.show()
        sys.exit(e.exit_code)
    sys.exit(0)


if __name__ == "__main__":
    main()
