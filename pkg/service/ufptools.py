"""
A set of useful functions shared across the UFP modules: exceptions, seed derivation, deterministic
reduction and the worker pool.
"""
import hashlib, importlib, json, os
from concurrent.futures import ThreadPoolExecutor

import numpy as np


class ServiceException(Exception):
    """
    Base class for every error the application raises deliberately.  The tag is a short, stable name
    which the command line prints in front of the message.
    """
    tag = "error"


class ConfigurationException(ServiceException):
    """
    Exception class for invalid or unknown configuration keys
    """
    tag = "config"


class PreconditionException(ServiceException):
    """
    Exception class for a call made with arguments outside the documented domain
    """
    tag = "precondition"


class ShapeMismatchException(ServiceException):
    """
    Exception class for arrays whose shapes don't fit the operator they are passed to
    """
    tag = "shape"


def derive_seed(seed, purpose, *indices):
    """
    Derive a sub-seed from the run seed and a purpose string by stable hashing, so that every consumer
    of randomness gets its own stream regardless of the order in which work is scheduled

    :param seed: the run seed
    :param purpose: name of the consumer, e.g. "ufp-init"
    :param indices: further integers identifying the stream (iteration, sample index, ...)
    :return: a 128 bit integer
    """
    material = json.dumps([int(seed), str(purpose)] + [int(i) for i in indices])
    return int(hashlib.sha256(material.encode("utf-8")).hexdigest()[:32], 16)


def make_rng(seed, purpose, *indices):
    """
    Make a counter-based generator for the given stream

    :param seed: the run seed
    :param purpose: name of the consumer
    :param indices: further stream identifiers
    :return: numpy Generator backed by Philox
    """
    return np.random.Generator(np.random.Philox(key=derive_seed(seed, purpose, *indices)))


def pairwise_sum(arrays):
    """
    Sum a list of equally shaped arrays in a fixed pairwise order.  The result depends only on the
    order of the list, never on which thread produced which element.

    :param arrays: non-empty list of arrays
    :return: the summed array
    """
    if len(arrays) == 0:
        raise PreconditionException(u"cannot reduce an empty list")
    level = list(arrays)
    while len(level) > 1:
        paired = [level[i] + level[i + 1] for i in range(0, len(level) - 1, 2)]
        if len(level) % 2 == 1:
            paired.append(level[-1])
        level = paired
    return level[0]


def thread_count(configured=0):
    """
    How many worker threads may be used.  UFP_THREADS in the environment wins, then the configured
    value, then the cpu count.

    :param configured: the THREADS setting
    :return: positive integer
    """
    env = os.environ.get("UFP_THREADS")
    if env is not None:
        try:
            n = int(env)
        except ValueError:
            raise ConfigurationException(u"UFP_THREADS: expected an integer, got {x}".format(x=env))
        if n < 1:
            raise ConfigurationException(u"UFP_THREADS: must be at least 1")
        return n
    if configured and configured > 0:
        return int(configured)
    return os.cpu_count() or 1


def parallel_map(fn, items, threads=None):
    """
    Apply fn to every item using the worker pool, returning results in the order of items

    :param fn: the function
    :param items: iterable of arguments
    :param threads: pool size; defaults to thread_count()
    :return: list of results
    """
    items = list(items)
    threads = threads or thread_count()
    if threads == 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


def load_class(dotted):
    """
    Load a class from its dotted path, e.g. "service.xwalks.TextTable"

    :param dotted: module path and class name
    :return: the class
    """
    module_name, _, class_name = dotted.rpartition(".")
    try:
        module = importlib.import_module(module_name)
        return getattr(module, class_name)
    except (ImportError, AttributeError, ValueError):
        raise ConfigurationException(u"unable to load class {x}".format(x=dotted))


def stable_hash(obj):
    """
    Hex digest of a json-serialisable object, stable across processes

    :param obj: dict/list of plain values
    :return: hex string
    """
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode("utf-8")).hexdigest()
