"""
Model objects for verification trial lists.

A trial list file has one trial per line, whitespace separated:

::

    # path_a path_b label [weight]
    spk0/utt00.wav spk0/utt01.wav 1
    spk0/utt00.wav spk1/utt03.wav 0 0.5

Relative paths are resolved against the directory of the trial list file.
"""
import os

from service.ufptools import ServiceException


class TrialListException(ServiceException):
    """
    Exception class for malformed trial lists
    """
    tag = "trials"


class Trial(object):
    """
    A labelled pair of audio files: label 1 for same speaker, 0 for different, with an optional
    non-negative weight
    """

    def __init__(self, path_a, path_b, label, weight=1.0):
        if label not in (0, 1):
            raise TrialListException(u"trial label must be 0 or 1, got {x}".format(x=label))
        if weight < 0:
            raise TrialListException(u"trial weight must be non-negative, got {x}".format(x=weight))
        self.path_a = path_a
        self.path_b = path_b
        self.label = int(label)
        self.weight = float(weight)

    def __repr__(self):
        return u"Trial({a}, {b}, {l}, {w})".format(a=self.path_a, b=self.path_b, l=self.label, w=self.weight)


def parse_trial_list(text, base_dir=""):
    """
    Parse the text of a trial list

    :param text: file contents
    :param base_dir: directory against which relative paths are resolved
    :return: list of Trial
    """
    trials = []
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if line == "":
            continue
        parts = line.split()
        if len(parts) not in (3, 4):
            raise TrialListException(u"line {n}: expected 'path_a path_b label [weight]'".format(n=n))
        try:
            label = int(parts[2])
            weight = float(parts[3]) if len(parts) == 4 else 1.0
        except ValueError:
            raise TrialListException(u"line {n}: label must be an integer and weight a number".format(n=n))
        a, b = [p if os.path.isabs(p) else os.path.join(base_dir, p) for p in parts[:2]]
        trials.append(Trial(a, b, label, weight))
    return trials


def read_trial_list(path):
    """
    Read a trial list file

    :param path: path to the file
    :return: list of Trial
    """
    try:
        with open(path) as f:
            text = f.read()
    except (IOError, OSError) as e:
        raise TrialListException(u"unable to read trial list {x}: {y}".format(x=path, y=e))
    return parse_trial_list(text, os.path.dirname(os.path.abspath(path)))


def write_trial_list(trials, path):
    """
    Write trials to a file, with paths relative to the file's directory where possible

    :param trials: list of Trial
    :param path: destination
    :return:
    """
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "w") as f:
        f.write("# path_a path_b label weight\n")
        for t in trials:
            a = os.path.relpath(os.path.abspath(t.path_a), base)
            b = os.path.relpath(os.path.abspath(t.path_b), base)
            f.write(u"{a} {b} {l} {w!r}\n".format(a=a, b=b, l=t.label, w=t.weight))
