from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time lattice ``t_j = j * T / n_steps`` on ``[0, T]``."""
    T: float
    n_steps: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f'Horizon T must be positive, but got {self.T}')
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f'n_steps must be a positive integer, but got {self.n_steps}')
        object.__setattr__(self, 'T', float(self.T))
        object.__setattr__(self, 'n_steps', int(self.n_steps))

    @property
    def dt(self):
        return self.T / self.n_steps

    def time(self, j):
        if j == self.n_steps:
            return self.T
        return j * self.dt

    @property
    def nodes(self):
        return np.array([self.time(j) for j in range(self.n_steps + 1)])

    def __len__(self):
        return self.n_steps + 1

    def refine(self, factor=2):
        return TimeGrid(self.T, self.n_steps * factor)
