"""Utility functions for the columnar_homog module"""

import json
import logging
import os
import time
from os.path import isfile
from typing import Any, Callable, Dict, Optional, Sequence

import click
import numpy as np

from columnar_homog.exceptions import ValidationError


LOG_FORMAT = '%(asctime)s (%(name)s %(lineno)s): %(message)s'
LOG_DATEFMT = '%m/%d/%Y %I:%M:%S %p'
OUT_DIR_ENV = 'COLUMNAR_HOMOG_OUT_DIR'
DEFAULT_OUT_DIR = 'columnar-homog-out'
SIGNIFICANT_DIGITS = 17
MKDIR_TRIES = 10


def init_logging(name: str, local_tmp_dir: Optional[str] = None) -> Optional[str]:
    """
    Configure the package loggers and, if a directory is given, set up
    a time-stamped log file under <local_tmp_dir>/log
    :param name: name to prefix the log file
    :param local_tmp_dir: local directory to write logs
    :return: path to the log file, or None
    """
    logging.basicConfig(format=LOG_FORMAT, datefmt=LOG_DATEFMT)
    logging.getLogger('columnar_homog').setLevel('INFO')
    if not local_tmp_dir:
        return None
    timestamp = time.strftime('%Y%m%d-%H%M')
    log_fpath = os.path.join(
        safe_mkdir(os.path.join(local_tmp_dir, 'log')), f'{name}-{timestamp}.log'
    )
    handler = logging.FileHandler(log_fpath)
    handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=LOG_DATEFMT))
    logging.getLogger('columnar_homog').addHandler(handler)
    return log_fpath


def default_out_dir() -> str:
    return os.environ.get(OUT_DIR_ENV) or DEFAULT_OUT_DIR


def get_validation_callback(
    ext: str = None,
    must_exist: bool = False,
) -> Callable:
    """
    Get callback for Click parameters validation
    :param ext: check that the path has the expected extension
    :param must_exist: check that the input file exists
    :return: a callback suitable for Click parameter initialization
    """

    def callback(_: click.Context, param: click.Option, value: Any):
        if value is None:
            return value
        if ext:
            assert isinstance(value, str), value
            if not value.endswith(f'.{ext}'):
                raise click.BadParameter(
                    f'The argument {param.name} is expected to have '
                    f'an extension .{ext}, got: {value}'
                )
        if must_exist:
            if not file_exists(value):
                raise click.BadParameter(f"{value} doesn't exist")
        return value

    return callback


def get_vector_callback(size: int) -> Callable:
    """
    Get callback that parses a comma-separated list of floats, like 0,0,1
    :param size: expected number of components
    """

    def callback(_: click.Context, param: click.Option, value: Any):
        if value is None:
            return value
        try:
            return parse_floats(value, size)
        except ValidationError as e:
            raise click.BadParameter(f'{param.name}: {e}')

    return callback


def parse_floats(value: Any, size: Optional[int] = None) -> tuple:
    """
    Parse '0.2,0.1' or a sequence of numbers into a tuple of floats
    """
    if isinstance(value, str):
        items = [item for item in value.replace(' ', '').split(',') if item]
    else:
        items = list(value)
    try:
        floats = tuple(float(item) for item in items)
    except (TypeError, ValueError):
        raise ValidationError(f'Cannot parse a list of numbers from {value!r}')
    if size is not None and len(floats) != size:
        raise ValidationError(f'Expected {size} numbers, got {len(floats)}: {value!r}')
    return floats


def file_exists(path: str) -> bool:
    """
    Check if the local file or directory exists
    :param path: path to the file/directory
    :return: True if the object exists
    """
    return os.path.exists(path)


def safe_mkdir(dirpath: str) -> str:
    """
    Create a directory with its parents, tolerating concurrent creation by
    worker processes
    :return: the directory path
    """
    if not dirpath:
        raise ValidationError('Output directory path is empty')
    if isfile(dirpath):
        raise ValidationError(f'Output directory {dirpath} is a file')
    for attempt in range(MKDIR_TRIES):
        try:
            os.makedirs(dirpath, exist_ok=True)
            break
        except OSError:
            if attempt == MKDIR_TRIES - 1:
                raise
            time.sleep(0.5)
    return dirpath


def fmt_float(value: float) -> str:
    """Render a float with 17 significant digits"""
    return f'{float(value):.{SIGNIFICANT_DIGITS}g}'


def fmt_matrix(matrix: Any) -> str:
    """One row per line, entries separated by single spaces"""
    rows = np.atleast_2d(np.asarray(matrix, dtype=float))
    return '\n'.join(' '.join(fmt_float(x) for x in row) for row in rows)


def to_jsonable(value: Any) -> Any:
    """
    Convert numpy values and nested containers into plain JSON values,
    non-finite floats as null
    """
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not np.isfinite(value):
            return None
        return value
    return value


def write_json(data: Dict, fpath: str) -> str:
    safe_mkdir(os.path.dirname(os.path.abspath(fpath)))
    with open(fpath, 'w') as fh:
        json.dump(to_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write('\n')
    return fpath


def relative_max_error(value: Any, reference: Any) -> float:
    """
    Max-entry error relative to the max-entry magnitude of the reference
    """
    value = np.asarray(value, dtype=float)
    reference = np.asarray(reference, dtype=float)
    scale = np.max(np.abs(reference))
    diff = np.max(np.abs(value - reference))
    if scale == 0:
        return float(diff)
    return float(diff / scale)


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> Optional[float]:
    """
    Least-squares slope of log(y) against log(x); None with fewer than three
    points or non-positive values
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 3 or np.any(xs <= 0) or np.any(ys <= 0):
        return None
    slope, _ = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(slope)
