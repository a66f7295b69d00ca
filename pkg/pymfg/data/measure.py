r"""Finitely supported probability measures and flows of them.

Atoms are stored as float64 tensors of shape (n, d) with weights of shape (n,).
"""
import numpy as np
import pandas as pd
import torch

from pymfg.utils.rng import make_generator
from pymfg.utils.tensor_util import DTYPE, to_tensor

WEIGHT_SUM_TOL = 1e-12


class DiscreteMeasure():
    """Weighted point cloud in R^d.

    Args:
        points (array-like): Atoms, shape (n, d). A 1-d input is read as n atoms in d = 1.
        weights (array-like, optional): Non-negative weights summing to one. Uniform by default.
        validate (bool): Check finiteness and the weight invariants. Default: True.
    """

    def __init__(self, points, weights=None, validate=True):
        points = to_tensor(points)
        if points.dim() == 1:
            points = points.unsqueeze(-1)
        if points.dim() != 2 or points.shape[0] == 0:
            raise ValueError(f'Atoms must have shape (n, d) with n >= 1, but got {tuple(points.shape)}')
        n = points.shape[0]
        if weights is None:
            weights = torch.full((n, ), 1.0 / n, dtype=DTYPE)
        else:
            weights = to_tensor(weights).reshape(-1)
        if weights.shape[0] != n:
            raise ValueError(f'Got {n} atoms but {weights.shape[0]} weights')
        if validate:
            if not torch.isfinite(points).all():
                raise ValueError('Atoms must be finite')
            if (weights < 0).any():
                raise ValueError('Weights must be non-negative')
            total = float(weights.sum())
            if abs(total - 1.0) > WEIGHT_SUM_TOL:
                raise ValueError(f'Weights must sum to one, but sum to {total!r}')
        self.points = points
        self.weights = weights

    @classmethod
    def dirac(cls, point):
        point = to_tensor(point).reshape(1, -1)
        return cls(point, torch.ones(1, dtype=DTYPE))

    @classmethod
    def from_samples(cls, samples):
        return cls(samples, validate=False)

    @property
    def n_atoms(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def mean(self):
        return self.weights @ self.points

    def second_moment(self):
        return float(self.weights @ (self.points**2).sum(-1))

    def scale(self, factor):
        """Push-forward under ``x -> factor * x``."""
        return DiscreteMeasure(self.points * factor, self.weights, validate=False)

    def shift(self, offset):
        return DiscreteMeasure(self.points + to_tensor(offset), self.weights, validate=False)

    def mixture(self, other, theta):
        """``(1 - theta) * self + theta * other``; atoms with zero weight are dropped."""
        if not 0.0 <= theta <= 1.0:
            raise ValueError(f'Mixture weight must lie in [0, 1], but got {theta}')
        if other.dim != self.dim:
            raise ValueError(f'Cannot mix measures in dimensions {self.dim} and {other.dim}')
        points = torch.cat([self.points, other.points])
        weights = torch.cat([(1.0 - theta) * self.weights, theta * other.weights])
        keep = weights > 0
        return DiscreteMeasure(points[keep], weights[keep] / weights[keep].sum())

    def thin(self, support_size, rng=None):
        """Reduce the support to ``support_size`` atoms with uniform weights.

        In d = 1 atoms are the quantiles at levels ``(i + 1/2) / support_size``, which is
        deterministic. Otherwise atoms are drawn with probability proportional to the
        weights, which needs ``rng``.
        """
        if support_size < 1:
            raise ValueError(f'support_size must be positive, but got {support_size}')
        if self.n_atoms <= support_size:
            return self
        points = self.points.numpy()
        weights = self.weights.numpy()
        if self.dim == 1:
            order = np.argsort(points[:, 0], kind='stable')
            cum = np.cumsum(weights[order])
            cum /= cum[-1]
            levels = (np.arange(support_size) + 0.5) / support_size
            idx = np.minimum(np.searchsorted(cum, levels, side='left'), self.n_atoms - 1)
            chosen = points[order[idx]]
        else:
            assert rng is not None, 'Random thinning in d > 1 needs a generator'
            uniform = np.all(weights == weights[0])
            if uniform:
                idx = np.sort(rng.choice(self.n_atoms, size=support_size, replace=False))
            else:
                idx = np.sort(rng.choice(self.n_atoms, size=support_size, replace=True, p=weights / weights.sum()))
            chosen = points[idx]
        return DiscreteMeasure(torch.from_numpy(np.ascontiguousarray(chosen)))

    def to_numpy(self):
        return self.points.numpy(), self.weights.numpy()

    def __repr__(self):
        return f'{self.__class__.__name__}(n_atoms={self.n_atoms}, dim={self.dim})'


class MeasureFlow():
    """One DiscreteMeasure per node of a TimeGrid."""

    def __init__(self, grid, measures):
        measures = list(measures)
        if len(measures) != len(grid):
            raise ValueError(f'A flow on {len(grid)} time nodes needs {len(grid)} measures, got {len(measures)}')
        dims = {mu.dim for mu in measures}
        if len(dims) != 1:
            raise ValueError(f'All measures of a flow must share one dimension, got {sorted(dims)}')
        self.grid = grid
        self.measures = measures

    @classmethod
    def dirac(cls, grid, point):
        mu = DiscreteMeasure.dirac(point)
        return cls(grid, [mu] * len(grid))

    @classmethod
    def dirac_path(cls, grid, points):
        """Flow of Diracs at ``points[j]`` (shape (n_steps + 1, d))."""
        return cls(grid, [DiscreteMeasure.dirac(p) for p in to_tensor(points)])

    @classmethod
    def from_paths(cls, grid, paths, support_size, seed=0):
        """Empirical flow of particle paths of shape (n_steps + 1, P, d), thinned per node."""
        measures = []
        for j in range(len(grid)):
            mu = DiscreteMeasure.from_samples(paths[j])
            rng = make_generator(seed, 'thin', j) if mu.dim > 1 else None
            measures.append(mu.thin(support_size, rng))
        return cls(grid, measures)

    def __getitem__(self, j):
        return self.measures[j]

    def __len__(self):
        return len(self.measures)

    def __iter__(self):
        return iter(self.measures)

    @property
    def dim(self):
        return self.measures[0].dim

    @property
    def support_size(self):
        return max(mu.n_atoms for mu in self.measures)

    def mean_path(self):
        return torch.stack([mu.mean() for mu in self.measures]).numpy()

    def mixture(self, other, theta, support_size, seed=0):
        """Node-wise ``(1 - theta) * self + theta * other``, thinned back to ``support_size``."""
        if other.grid != self.grid:
            raise ValueError('Cannot mix flows on different time grids')
        measures = []
        for j, (mu, nu) in enumerate(zip(self.measures, other.measures)):
            rng = make_generator(seed, 'thin', j) if mu.dim > 1 else None
            measures.append(mu.mixture(nu, theta).thin(support_size, rng))
        return MeasureFlow(self.grid, measures)

    def to_frame(self):
        """Long table with columns t, atom, weight, x0, ..., x{d-1}."""
        frames = []
        for j, mu in enumerate(self.measures):
            points, weights = mu.to_numpy()
            frame = pd.DataFrame({'t': self.grid.time(j), 'atom': np.arange(mu.n_atoms), 'weight': weights})
            for c in range(mu.dim):
                frame[f'x{c}'] = points[:, c]
            frames.append(frame)
        return pd.concat(frames, ignore_index=True)

    @classmethod
    def from_frame(cls, grid, frame):
        coords = [c for c in frame.columns if c.startswith('x')]
        measures = []
        for t in grid.nodes:
            rows = frame[np.isclose(frame['t'].to_numpy(), t, rtol=0, atol=1e-12)]
            weights = rows['weight'].to_numpy()
            measures.append(DiscreteMeasure(rows[coords].to_numpy(), weights / weights.sum()))
        return cls(grid, measures)
