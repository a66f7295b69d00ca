import numpy as np
from scipy import stats

from pymfg.data.measure import DiscreteMeasure
from pymfg.utils.registry import SAMPLER_REGISTRY


class BaseSampler():
    """A probability law on R^d that can be sampled and discretized.

    Subclasses implement ``sample`` and, for d = 1 reference grids, ``ppf``.
    """

    def __init__(self, dim=1):
        assert dim >= 1, f'dim must be positive, but got {dim}'
        self.dim = dim

    def sample(self, rng, n):
        raise NotImplementedError

    def ppf(self, levels):
        raise NotImplementedError

    def reference(self, n_atoms, rng=None):
        """Discretization with ``n_atoms`` equally weighted atoms.

        In d = 1 atoms are quantiles at the midpoints ``(i + 1/2) / n``, or at stratified
        random levels ``(i + U_i) / n`` when ``rng`` is given. Otherwise the atoms are an
        i.i.d. sample drawn from ``rng``.
        """
        if self.dim == 1:
            offsets = 0.5 if rng is None else rng.uniform(size=n_atoms)
            levels = (np.arange(n_atoms) + offsets) / n_atoms
            atoms = np.sort(self.ppf(levels))
            return DiscreteMeasure(atoms.reshape(-1, 1))
        assert rng is not None, 'Sampled references in d > 1 need a generator'
        return DiscreteMeasure(self.sample(rng, n_atoms))


@SAMPLER_REGISTRY.register()
class GaussianSampler(BaseSampler):
    """Isotropic Gaussian N(mean, std^2 I)."""

    def __init__(self, mean=0.0, std=1.0, dim=1):
        super().__init__(dim)
        assert std > 0, f'std must be positive, but got {std}'
        self.mean = float(mean)
        self.std = float(std)

    def sample(self, rng, n):
        return self.mean + self.std * rng.standard_normal((n, self.dim))

    def ppf(self, levels):
        return stats.norm.ppf(levels, loc=self.mean, scale=self.std)


@SAMPLER_REGISTRY.register()
class UniformSampler(BaseSampler):
    """Uniform law on the cube [low, high]^d."""

    def __init__(self, low=0.0, high=1.0, dim=1):
        super().__init__(dim)
        assert high > low, f'Need low < high, but got [{low}, {high}]'
        self.low = float(low)
        self.high = float(high)

    def sample(self, rng, n):
        return rng.uniform(self.low, self.high, size=(n, self.dim))

    def ppf(self, levels):
        return self.low + (self.high - self.low) * np.asarray(levels)


@SAMPLER_REGISTRY.register()
class DiracSampler(BaseSampler):
    """Point mass; every empirical measure coincides with it."""

    def __init__(self, point=0.0, dim=1):
        super().__init__(dim)
        self.point = np.broadcast_to(np.asarray(point, dtype=np.float64), (dim, )).copy()

    def sample(self, rng, n):
        return np.tile(self.point, (n, 1))

    def ppf(self, levels):
        return np.full(np.shape(levels), self.point[0])

    def reference(self, n_atoms, rng=None):
        return DiscreteMeasure.dirac(self.point)
