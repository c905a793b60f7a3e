"""
Utility functions shared by the simulator, trainer and command-line tools
"""

import logging
import os
import random

from logging.handlers import TimedRotatingFileHandler

import numpy as np
import torch

# Default directory for run output, overridden by --out or the run config
BASE_DIRECTORY = os.path.join(os.getcwd(), "runs")

# Logs live in a subdirectory of the run output directory
LOG_SUBDIRECTORY = "logs"

# Environment variable capping the number of rollout/evaluation workers
THREADS_ENV_VAR = "ZMLLOCO_THREADS"

# Format for those logs
LOG_FORMAT = "%(asctime)s - %(name)s:%(lineno)d(%(funcName)s) " "%(levelname)s: %(message)s"

# Namespace for primary logger, additional namespaces should be defined by module user
ZML_LOGGER_PREFIX = "zml"

# Namespace for per-iteration and per-episode detail
DETAIL_LOGGER_PREFIX = "detail"

zlog = logging.getLogger(ZML_LOGGER_PREFIX + "." + __name__)


def configure_logging(
    log_file, logger_namespace=ZML_LOGGER_PREFIX, backup_count=0, log_dir=None
):
    """
    All logging related settings are set up by this function.

    `log_file` - the filename
    `logger_namespace` - the prefix used for all log events by this logger
    `backup_count` - if nonzero, at most backup_count files will be kept
    `log_dir` - directory for the log file, defaults to runs/logs
    """
    if log_dir is None:
        log_dir = os.path.join(BASE_DIRECTORY, LOG_SUBDIRECTORY)

    if not os.path.exists(log_dir):
        os.makedirs(log_dir)

    formatter = logging.Formatter((LOG_FORMAT))

    handler = TimedRotatingFileHandler(os.path.join(log_dir, log_file), backupCount=backup_count)
    handler.setFormatter(formatter)
    handler.setLevel(logging.INFO)

    log = logging.getLogger(logger_namespace)
    log.setLevel(logging.INFO)
    # Repeated commands in one process (ablations) must not stack handlers
    for existing in list(log.handlers):
        if getattr(existing, "baseFilename", None) == handler.baseFilename:
            log.removeHandler(existing)
            existing.close()
    log.addHandler(handler)
    return handler


def get_logger(prefix=ZML_LOGGER_PREFIX, module=None):
    if module is None:
        return logging.getLogger(prefix)
    else:
        return logging.getLogger(prefix + "." + module)


def get_worker_count(default=1):
    """
    Determine how many parallel workers rollouts and evaluations may use.

    The environment variable ZMLLOCO_THREADS sets the count, never above the CPU
    count. Invalid values raise ValueError rather than silently falling back.
    """
    cpu_count = os.cpu_count() or 1
    value = os.getenv(THREADS_ENV_VAR)
    if value is None:
        return max(1, min(default, cpu_count))

    try:
        count = int(value)
    except ValueError:
        count = None

    if count is None or count < 1:
        raise ValueError("Worker count not supported: {}".format(value))
    return min(count, cpu_count)


def set_global_seed(seed):
    """
    Seed every random number generator the stack touches.
    """
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)
    return seed


def derive_seeds(seed, count, stream=0):
    """
    Derive `count` independent integer seeds from a run seed. `stream` separates
    otherwise identical derivations (environments, evaluation episodes, ...).
    """
    sequence = np.random.SeedSequence([int(seed), int(stream)])
    return [int(child.generate_state(1)[0]) for child in sequence.spawn(count)]


def make_rng(seed, stream=0):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream)]))


def ensure_directory(path):
    """
    Create an output directory, surfacing permission problems immediately.
    """
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        zlog.error("Error creating output directory '{}'".format(path))
        zlog.error(str(e))
        raise
    return path
