import numpy as np
import os
import random
import time
import torch
from concurrent.futures import ThreadPoolExecutor
from os import path as osp


def set_random_seed(seed=123):
    """Set the global random seeds.

    Simulation noise never comes from the global generators (see ``pymfg.utils.rng``);
    this only pins down third-party code that might touch them.
    """
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


def get_time_str():
    return time.strftime('%Y%m%d_%H%M%S', time.localtime())


def make_run_dir(root, name):
    """Create a fresh run directory ``root/name``.

    An existing directory is never reused: on collision an index suffix is
    appended (``name_1``, ``name_2``, ...).

    Returns:
        str: Path of the created directory.
    """
    os.makedirs(root, exist_ok=True)
    path = osp.join(root, name)
    index = 0
    while True:
        try:
            os.makedirs(path)
            return path
        except FileExistsError:
            index += 1
            path = osp.join(root, f'{name}_{index}')


def scandir(dir_path, suffix=None, recursive=False, full_path=False):
    """Scan a directory to find the interested files.

    Args:
        dir_path (str): Path of the directory.
        suffix (str | tuple(str), optional): File suffix that we are
            interested in. Default: None.
        recursive (bool, optional): If set to True, recursively scan the
            directory. Default: False.
        full_path (bool, optional): If set to True, include the dir_path.
            Default: False.

    Returns:
        A generator for all the interested files with relative paths.
    """

    if (suffix is not None) and not isinstance(suffix, (str, tuple)):
        raise TypeError('"suffix" must be a string or tuple of strings')

    root = dir_path

    def _scandir(dir_path, suffix, recursive):
        for entry in sorted(os.scandir(dir_path), key=lambda e: e.name):
            if not entry.name.startswith('.') and entry.is_file():
                return_path = entry.path if full_path else osp.relpath(entry.path, root)
                if suffix is None or return_path.endswith(suffix):
                    yield return_path
            elif recursive:
                yield from _scandir(entry.path, suffix=suffix, recursive=recursive)

    return _scandir(dir_path, suffix=suffix, recursive=recursive)


def parallel_map(func, items, num_workers=1):
    """Ordered map over ``items``, threaded when ``num_workers > 1``.

    Results come back in input order, so they do not depend on the worker count.
    """
    items = list(items)
    if num_workers <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=num_workers) as pool:
        return list(pool.map(func, items))
