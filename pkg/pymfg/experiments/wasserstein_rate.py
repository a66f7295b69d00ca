r"""Empirical-measure rate in W2.

For each sample size N the expected squared distance between an N-sample
empirical measure and a fixed fine reference of the law is estimated by
Monte Carlo. Sample ``rep`` of size ``N`` is drawn from the stream keyed
``('rate', N, rep)``, so results do not depend on how work is split.
"""
import math
from dataclasses import dataclass
from typing import List

import numpy as np
import pandas as pd
from tqdm import tqdm

from pymfg.data.measure import DiscreteMeasure
from pymfg.experiments.nplayer import fit_loglog_slope
from pymfg.metrics.wasserstein import MAX_LP_SIZE, sorted_quantiles, w2_exact, w2sq_sorted
from pymfg.utils.logger import get_root_logger
from pymfg.utils.misc import parallel_map
from pymfg.utils.rng import make_generator


@dataclass
class RateTable:
    Ns: List[int]
    dim: int
    mean_w2sq: np.ndarray
    stderr: np.ndarray
    reference_atoms: int
    reference_bias: float

    @property
    def exponent(self):
        return 2.0 / (self.dim + 4)

    @property
    def constant(self):
        """C such that the bound ``C N^(-2/(d+4))`` is tight at the smallest N."""
        return float(self.mean_w2sq[0] * self.Ns[0]**self.exponent)

    @property
    def bound(self):
        return self.constant * np.asarray(self.Ns, dtype=np.float64)**(-self.exponent)

    @property
    def slope(self):
        return fit_loglog_slope(self.Ns, self.mean_w2sq)

    @property
    def bound_holds(self):
        return bool(np.all(self.mean_w2sq <= self.bound + 1e-15))

    @property
    def slope_holds(self):
        slope = self.slope
        return bool(math.isnan(slope) or slope <= -self.exponent + 0.05)

    @property
    def bias_ok(self):
        smallest = float(np.min(self.mean_w2sq))
        return bool(self.reference_bias <= 0.05 * smallest) if smallest > 0 else self.reference_bias == 0

    def to_frame(self):
        return pd.DataFrame({
            'N': self.Ns,
            'mean_w2sq': self.mean_w2sq,
            'stderr': self.stderr,
            'bound_C_Npow': self.bound,
        })

    def summary(self):
        return {
            'Ns': self.Ns,
            'dim': self.dim,
            'exponent': self.exponent,
            'constant': self.constant,
            'slope': self.slope,
            'bound_holds': self.bound_holds,
            'slope_holds': self.slope_holds,
            'reference_atoms': self.reference_atoms,
            'reference_bias': self.reference_bias,
            'reference_bias_ok': self.bias_ok,
        }


def empirical_rate_experiment(sampler, Ns, reps, seed, reference_atoms=100000, num_workers=1, progress=False):
    """Estimate ``E W2^2(empirical_N, reference)`` for every N.

    Args:
        sampler (BaseSampler): Law to sample from.
        Ns (list[int]): Increasing sample sizes.
        reps (int): Monte Carlo repetitions per N, at least 2.
        reference_atoms (int): Size of the reference discretization. In d > 1 it is
            capped so that every transport problem stays within ``MAX_LP_SIZE``.

    Returns:
        RateTable: Mean, standard error and bound per N.
    """
    if reps < 2:
        raise ValueError(f'Need at least two repetitions, got reps = {reps}')
    Ns = [int(N) for N in Ns]
    if not Ns or any(N < 1 for N in Ns) or any(a >= b for a, b in zip(Ns, Ns[1:])):
        raise ValueError(f'Sample sizes must be positive and increasing, got {Ns}')
    logger = get_root_logger()
    dim = sampler.dim

    if dim == 1:
        reference = sampler.reference(reference_atoms)
        stratified = sampler.reference(reference_atoms, make_generator(seed, 'rate_reference'))
        ref_x, ref_c = sorted_quantiles(reference)
        reference_bias = w2sq_sorted(ref_x, ref_c, *sorted_quantiles(stratified))

        def distance(points):
            return w2sq_sorted(*sorted_quantiles(DiscreteMeasure(points)), ref_x, ref_c)
    else:
        cap = MAX_LP_SIZE // max(Ns)
        if reference_atoms > cap:
            logger.warning(f'Reference reduced from {reference_atoms} to {cap} atoms to fit the transport limit.')
            reference_atoms = cap
        reference = sampler.reference(reference_atoms, make_generator(seed, 'rate_reference'))
        other = sampler.reference(reference_atoms, make_generator(seed, 'rate_reference', 1))
        reference_bias = w2_exact(reference, other)**2

        def distance(points):
            return w2_exact(DiscreteMeasure(points), reference)**2

    means, stderrs = [], []
    for N in tqdm(Ns, desc='wasserstein-rate', disable=not progress):

        def run(rep):
            return distance(sampler.sample(make_generator(seed, 'rate', N, rep), N))

        values = np.asarray(parallel_map(run, range(reps), num_workers))
        means.append(float(values.mean()))
        stderrs.append(float(values.std(ddof=1) / math.sqrt(reps)))
        logger.info(f'N={N}: E W2^2 = {means[-1]:.4e} +- {stderrs[-1]:.2e}')

    table = RateTable(
        Ns=Ns,
        dim=dim,
        mean_w2sq=np.array(means),
        stderr=np.array(stderrs),
        reference_atoms=reference_atoms,
        reference_bias=float(reference_bias))
    if not table.bias_ok:
        logger.warning(f'Reference bias {table.reference_bias:.3e} exceeds 5% of the smallest estimate.')
    return table
