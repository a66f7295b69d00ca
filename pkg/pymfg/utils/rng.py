r"""Named counter-based random streams.

Every random draw in pymfg comes from a Philox generator keyed by the master seed,
a stream id and an integer key tuple. Draws are therefore reproducible regardless
of how work is split across threads, and two different streams never overlap.
"""
from collections import OrderedDict

import numpy as np
import torch

from .tensor_util import DTYPE

STREAM_IDS = OrderedDict([
    ('forward', 1),  # particle noise of a forward simulation, keyed by block
    ('phi', 2),  # particle noise inside the fixed-point map
    ('thin', 3),  # random thinning of empirical measures (d > 1), keyed by time index
    ('nplayer', 4),  # N-player noise, keyed by (N, replication, player)
    ('rate', 5),  # empirical-measure samples, keyed by (N, rep)
    ('rate_reference', 6),  # reference discretizations in rate experiments
    ('smp', 7),  # common noise of optimal and perturbed paths in SMP checks
    ('assumptions', 8),  # sample points of assumption checks
    ('fresh', 9),  # independent re-simulation after convergence
    ('perturbation', 10),  # random feedback perturbations
])

NOISE_BLOCK_SIZE = 1024


def make_generator(seed, stream, *key):
    """Build the generator of one stream.

    Args:
        seed (int): Master seed, a non-negative 64-bit integer.
        stream (str): Stream name, one of ``STREAM_IDS``.
        key (int): Additional integer keys (block, time index, replication, ...).

    Returns:
        numpy.random.Generator: A Philox generator.
    """
    if stream not in STREAM_IDS:
        raise KeyError(f'Unknown random stream {stream}, available: {list(STREAM_IDS)}')
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f'Seed must be an unsigned 64-bit integer, but got {seed}')
    spawn_key = (STREAM_IDS[stream], ) + tuple(int(k) for k in key)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=spawn_key)))


def gaussian_increments(seed, stream, n_steps, n_paths, dim, key=(), block_size=NOISE_BLOCK_SIZE):
    """Standard normal increments of shape (n_steps, n_paths, dim).

    Paths are drawn in fixed blocks with one stream per block, so the noise of a
    given path does not depend on how many paths are simulated after it.
    """
    blocks = []
    for block, start in enumerate(range(0, n_paths, block_size)):
        size = min(block_size, n_paths - start)
        rng = make_generator(seed, stream, *key, block)
        blocks.append(rng.standard_normal((size, n_steps, dim)).transpose(1, 0, 2))
    return torch.from_numpy(np.concatenate(blocks, axis=1)).to(DTYPE)


def player_increments(seed, N, replication, n_steps, dim):
    """Noise of an N-player replication, one stream per player.

    Returns:
        torch.Tensor: Increments of shape (n_steps, N, dim).
    """
    draws = [
        make_generator(seed, 'nplayer', N, replication, player).standard_normal((n_steps, dim))
        for player in range(N)
    ]
    return torch.from_numpy(np.stack(draws, axis=1)).to(DTYPE)
