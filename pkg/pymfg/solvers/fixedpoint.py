r"""Damped fixed-point iteration on population flows.

One application of the map solves the frozen FBSDE against the current flow,
simulates particles under the resulting feedback and returns their thinned
empirical flow. The iteration mixes the image into the current flow until the
sup-in-time W2 residual falls below the tolerance.
"""
import math
from dataclasses import dataclass, field, fields
from typing import List, Optional

import numpy as np
import pandas as pd
import torch

from pymfg.data.measure import MeasureFlow
from pymfg.data.time_grid import TimeGrid
from pymfg.metrics.wasserstein import sup_w2
from pymfg.models.base_model import check_model_assumptions
from pymfg.solvers.fbsde import (CostEstimate, DecouplingField, LatticeConfig, PathEnsemble, evaluate_cost,
                                 simulate_forward, solve_frozen_fbsde)
from pymfg.utils.logger import AvgTimer, IterationLogger, get_root_logger
from pymfg.utils.tensor_util import DTYPE

INIT_FLOWS = ('dirac', 'uncontrolled')
MIN_PARTICLES = 100


@dataclass
class FixedPointConfig:
    """Options of the damped fixed-point iteration.

    Args:
        n_steps (int): Time steps of the grid. Default: 100.
        damping (float): Weight ``theta`` of the new image in the mixture. Default: 0.5.
        tol (float): Residual tolerance on sup_t W2. Default: 0.01.
        max_iters (int): Iteration budget. Default: 50.
        n_particles (int): Particles per forward simulation. Default: 20000.
        support_size (int): Atoms per time node of every flow. Default: 512.
        divergence_window (int): Consecutive residual increases that count as divergence. Default: 5.
        init (str): Initial flow, ``dirac`` at x0 or ``uncontrolled`` (alpha = 0). Default: dirac.
        seed (int): Master seed. Default: 0.
        lattice (LatticeConfig): Backward solver options.
    """
    n_steps: int = 100
    damping: float = 0.5
    tol: float = 0.01
    max_iters: int = 50
    n_particles: int = 20000
    support_size: int = 512
    divergence_window: int = 5
    init: str = 'dirac'
    seed: int = 0
    lattice: LatticeConfig = field(default_factory=LatticeConfig)

    def __post_init__(self):
        if isinstance(self.lattice, dict):
            self.lattice = LatticeConfig.from_dict(self.lattice)
        if not 0.0 < self.damping <= 1.0:
            raise ValueError(f'damping must lie in (0, 1], but got {self.damping}')
        if not self.tol > 0:
            raise ValueError(f'tol must be positive, but got {self.tol}')
        if self.max_iters < 1 or self.support_size < 1 or self.n_steps < 1:
            raise ValueError('max_iters, support_size and n_steps must be positive')
        if self.n_particles < MIN_PARTICLES:
            raise ValueError(f'n_particles must be at least {MIN_PARTICLES}, but got {self.n_particles}')
        if self.init not in INIT_FLOWS:
            raise ValueError(f'init must be one of {INIT_FLOWS}, but got {self.init}')

    @classmethod
    def from_dict(cls, opt):
        names = {f.name for f in fields(cls)}
        unknown = [k for k in opt if k not in names]
        if unknown:
            raise ValueError(f'Unknown fixed-point options {unknown}, allowed: {sorted(names)}')
        return cls(**opt)


@dataclass(eq=False)
class MfgSolution:
    """Result of ``solve_mfg``.

    ``flow`` and ``field`` are consistent: the field was solved against the flow,
    and ``paths`` were simulated under that field.
    """
    flow: MeasureFlow
    field: DecouplingField
    paths: PathEnsemble
    cost: CostEstimate
    residual_history: List[float]
    converged: bool
    diverged: bool
    config: FixedPointConfig

    @property
    def iterations(self):
        return len(self.residual_history)

    def residual_frame(self):
        return pd.DataFrame({
            'iteration': np.arange(1, self.iterations + 1),
            'residual': np.asarray(self.residual_history)
        })


@dataclass
class RegularityReport:
    lipschitz: float
    growth: float
    cap: Optional[float]

    @property
    def violated(self):
        return self.cap is not None and max(self.lipschitz, self.growth) > self.cap

    def to_dict(self):
        return {'lipschitz': self.lipschitz, 'growth': self.growth, 'cap': self.cap, 'violated': self.violated}


def phi_map(model, flow, config, return_state=False):
    """One application of the fixed-point map.

    Returns:
        MeasureFlow | tuple: The thinned empirical flow of the optimally controlled
        particles; with ``return_state`` also the field and the paths.
    """
    field_ = solve_frozen_fbsde(model, flow, config.lattice)
    paths = simulate_forward(
        model, flow, field_, config.n_particles, config.seed, support_size=config.support_size, stream='phi')
    if return_state:
        return paths.flow, field_, paths
    return paths.flow


def initial_flow(model, grid, config):
    if config.init == 'dirac':
        return MeasureFlow.dirac(grid, model.x0)
    zero = torch.zeros(model.k, dtype=DTYPE)
    paths = simulate_forward(
        model,
        MeasureFlow.dirac(grid, model.x0),
        None,
        config.n_particles,
        config.seed,
        support_size=config.support_size,
        control=lambda j, t, x: zero.expand(x.shape[0], model.k),
        stream='phi')
    return paths.flow


def solve_mfg(model, config=None, init_flow=None, name='mfg'):
    """Damped fixed-point iteration ``mu <- (1 - theta) mu + theta Phi(mu)``.

    Non-convergence is reported through ``converged`` and ``diverged``, never raised.
    Games without an LQ spec first pass the sampled assumption checks; a blocking
    failure raises ``AssumptionViolation``.

    Returns:
        MfgSolution: Last flow, its field and paths, cost and residual history.
    """
    config = config or FixedPointConfig()
    logger = get_root_logger()
    if model.lq_spec is None:
        check_model_assumptions(model, seed=config.seed).require()
    grid = TimeGrid(model.T, config.n_steps)
    flow = init_flow if init_flow is not None else initial_flow(model, grid, config)
    if flow.grid != grid:
        raise ValueError('Initial flow lives on a different time grid')

    history = []
    converged = diverged = False
    increases = 0
    timer = AvgTimer()
    msg_logger = IterationLogger(name, config.max_iters)
    for it in range(1, config.max_iters + 1):
        image, field_, paths = phi_map(model, flow, config, return_state=True)
        residual = sup_w2(image, flow)
        increases = increases + 1 if history and residual > history[-1] else 0
        history.append(residual)
        timer.record()
        msg_logger({'iter': it, 'time': timer.get_current_time(), 'residual': residual})
        if residual <= config.tol:
            converged = True
            break
        if increases >= config.divergence_window:
            diverged = True
            logger.warning(f'Residual increased {increases} times in a row; stopping at iteration {it}.')
            break
        if it < config.max_iters:
            flow = flow.mixture(image, config.damping, config.support_size, config.seed + it)

    if not converged and not diverged:
        logger.warning(f'Fixed point not reached in {config.max_iters} iterations, residual {history[-1]:.4e}.')
    cost = evaluate_cost(model, paths, flow)
    logger.info(f'Equilibrium cost {cost.mean:.6f} +- {cost.stderr:.2e} after {len(history)} iterations.')
    return MfgSolution(
        flow=flow,
        field=field_,
        paths=paths,
        cost=cost,
        residual_history=history,
        converged=converged,
        diverged=diverged,
        config=config)


def check_value_function(field_, cap=None):
    """Lipschitz and linear-growth constants of a decoupling field over its lattice."""
    return RegularityReport(lipschitz=field_.lipschitz_constant(), growth=field_.growth_constant(), cap=cap)


def compare_solutions(solutions, tol):
    """Pairwise sup_t W2 between converged solutions.

    Returns:
        dict: ``distances`` matrix and ``distinct`` flag, set when two converged
        flows are farther apart than ``3 * tol``.
    """
    converged = [s for s in solutions if s.converged]
    size = len(converged)
    distances = np.zeros((size, size))
    for i in range(size):
        for j in range(i + 1, size):
            distances[i, j] = distances[j, i] = sup_w2(converged[i].flow, converged[j].flow)
    distinct = bool(size > 1 and distances.max() > 3 * tol)
    if distinct:
        get_root_logger().warning(f'Converged flows differ by up to {distances.max():.4e}; '
                                  'the equilibrium may not be unique.')
    return {'distances': distances, 'distinct': distinct, 'n_converged': size}


def fresh_matching_error(model, solution, n_particles=None, seed=None):
    """sup_t W2 between the solution flow and an independent re-simulation under its field."""
    config = solution.config
    seed = config.seed + 1 if seed is None else seed
    paths = simulate_forward(
        model,
        solution.flow,
        solution.field,
        n_particles or config.n_particles,
        seed,
        support_size=config.support_size,
        stream='fresh')
    return sup_w2(paths.flow, solution.flow)


def geometric_rate(history):
    """Average contraction factor of a residual history."""
    if len(history) < 2 or history[0] <= 0 or history[-1] <= 0:
        return math.nan
    return float((history[-1] / history[0])**(1.0 / (len(history) - 1)))
