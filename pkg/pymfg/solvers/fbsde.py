r"""Forward-backward system for a frozen population flow.

The backward half is solved on a spatial lattice with a one-step scheme
``y = E[u_{j+1}(x + b dt + sigma sqrt(dt) xi)] + dt (b1^T y + df/dx)``,
the expectation taken by tensor-product Gauss-Hermite quadrature and the
implicit dependence on ``y`` resolved by fixed-point iteration. The forward
half is an Euler scheme driven by the resulting feedback.
"""
import itertools
import json
import math
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np
import pandas as pd
import torch
from numpy.polynomial.hermite_e import hermegauss

from pymfg.data.measure import MeasureFlow
from pymfg.data.time_grid import TimeGrid
from pymfg.solvers.hamiltonian import minimize_hamiltonian
from pymfg.utils.logger import get_root_logger
from pymfg.utils.rng import gaussian_increments
from pymfg.utils.tensor_util import DTYPE, to_tensor

FIELD_FORMAT = 'pymfg-decoupling-field'


class FbsdeSolverError(RuntimeError):
    """The inner fixed point of a backward step did not converge."""

    def __init__(self, message, step=None, node=None, residual=None):
        super().__init__(message)
        self.step = step
        self.node = node
        self.residual = residual


@dataclass
class LatticeConfig:
    """Discretization of the backward solver.

    Args:
        h (float): Lattice spacing. Default: 0.02.
        radius (float, optional): Half-width of the lattice around x0. Defaults to
            ``max(6 |sigma| sqrt(T), 4 (1 + |x0|) exp(c_L T))``.
        quad_order (int): Gauss-Hermite nodes per noise dimension. Default: 8.
        inner_tol (float): Tolerance of the inner fixed point. Default: 1e-9.
        inner_max_iters (int): Budget of the inner fixed point. Default: 100.
        margin_factor (float): Quadrature points farther than ``margin_factor * radius``
            outside the lattice are counted as extrapolation hits. Default: 0.5.
    """
    h: float = 0.02
    radius: Optional[float] = None
    quad_order: int = 8
    inner_tol: float = 1e-9
    inner_max_iters: int = 100
    margin_factor: float = 0.5

    def __post_init__(self):
        assert self.h > 0, f'Lattice spacing must be positive, got {self.h}'
        assert self.radius is None or self.radius > 0, f'Lattice radius must be positive, got {self.radius}'
        assert self.quad_order >= 1, f'Quadrature order must be positive, got {self.quad_order}'
        assert self.inner_tol > 0 and self.inner_max_iters >= 1, 'Inner tolerance and budget must be positive'

    @classmethod
    def from_dict(cls, opt):
        names = {f.name for f in fields(cls)}
        unknown = [k for k in opt if k not in names]
        if unknown:
            raise ValueError(f'Unknown lattice options {unknown}, allowed: {sorted(names)}')
        return cls(**opt)


def gauss_hermite_rule(order, dim):
    """Tensor-product rule for E[phi(xi)] with xi standard normal in R^dim.

    Returns:
        tuple: Nodes (Q, dim) and weights (Q,) summing to one.
    """
    nodes, weights = hermegauss(order)
    weights = weights / weights.sum()
    grid = np.array(list(itertools.product(nodes, repeat=dim)))
    grid_weights = np.prod(np.array(list(itertools.product(weights, repeat=dim))), axis=1)
    return torch.from_numpy(grid).to(DTYPE), torch.from_numpy(grid_weights / grid_weights.sum()).to(DTYPE)


def lattice_radius(model, config):
    if config.radius is not None:
        return float(config.radius)
    sigma_norm = float(torch.linalg.matrix_norm(model.sigma, ord=2))
    return max(6.0 * sigma_norm * math.sqrt(model.T),
               4.0 * (1.0 + float(model.x0.norm())) * math.exp(model.c_L * model.T))


class DecouplingField():
    """Lattice values of the decoupling field ``u(t_j, x)``.

    Between nodes the field is multilinear; outside the lattice it is extended
    linearly with the slope of the boundary cell.

    Args:
        grid (TimeGrid): Time grid.
        lower (Tensor): Lower lattice corner, (d,).
        h (float): Lattice spacing.
        shape (tuple): Nodes per axis.
        values (Tensor): (n_steps + 1, *shape, d).
        extrapolation_hits (int): Quadrature points that fell beyond the margin.
    """

    def __init__(self, grid, lower, h, shape, values, extrapolation_hits=0):
        self.grid = grid
        self.lower = to_tensor(lower).reshape(-1)
        self.h = float(h)
        self.shape = tuple(int(n) for n in shape)
        self.values = values
        self.extrapolation_hits = int(extrapolation_hits)
        assert all(n >= 2 for n in self.shape), f'Each lattice axis needs two nodes, got {self.shape}'
        assert tuple(values.shape) == (len(grid), ) + self.shape + (self.d, ), (
            f'Values have shape {tuple(values.shape)}, expected {(len(grid), ) + self.shape + (self.d, )}')
        strides = [int(np.prod(self.shape[a + 1:])) for a in range(self.d)]
        self._strides = torch.tensor(strides, dtype=torch.long)

    @property
    def d(self):
        return self.lower.shape[0]

    @property
    def upper(self):
        return self.lower + self.h * (torch.tensor(self.shape, dtype=DTYPE) - 1)

    def lattice_axes(self):
        return [self.lower[a] + self.h * torch.arange(n, dtype=DTYPE) for a, n in enumerate(self.shape)]

    def lattice_points(self):
        mesh = torch.meshgrid(*self.lattice_axes(), indexing='ij')
        return torch.stack([c.reshape(-1) for c in mesh], dim=-1)

    def interpolate(self, table, x):
        """Multilinear interpolation of a (*shape, d) table at points (B, d)."""
        flat = table.reshape(-1, self.d)
        idx, frac = [], []
        for a, n in enumerate(self.shape):
            s = (x[:, a] - self.lower[a]) / self.h
            i = torch.floor(s).clamp(0, n - 2)
            idx.append(i.long())
            frac.append(s - i)
        out = torch.zeros(x.shape[0], self.d, dtype=DTYPE)
        for corner in itertools.product((0, 1), repeat=self.d):
            flat_idx = sum((idx[a] + c) * int(self._strides[a]) for a, c in enumerate(corner))
            weight = torch.ones(x.shape[0], dtype=DTYPE)
            for a, c in enumerate(corner):
                weight = weight * (frac[a] if c else 1.0 - frac[a])
            out = out + weight.unsqueeze(-1) * flat[flat_idx]
        return out

    def evaluate(self, j, x):
        """``u(t_j, x)`` at points (B, d)."""
        return self.interpolate(self.values[j], x)

    def z(self, j, x, sigma):
        """``Z = grad_x u(t_j, x) sigma`` from central differences, (B, d, m)."""
        cols = []
        for a in range(self.d):
            e = torch.zeros(self.d, dtype=DTYPE)
            e[a] = self.h
            cols.append((self.evaluate(j, x + e) - self.evaluate(j, x - e)) / (2 * self.h))
        return torch.stack(cols, dim=-1) @ sigma

    def axis_differences(self, j):
        """One-sided difference quotients along each axis, norms over components."""
        table = self.values[j]
        return [torch.diff(table, dim=a).norm(dim=-1) / self.h for a in range(self.d)]

    def growth_slope(self):
        """Largest boundary slope per time node, axis and side, shape (n_steps + 1, d, 2)."""
        out = torch.zeros(len(self.grid), self.d, 2, dtype=DTYPE)
        for j in range(len(self.grid)):
            for a, diff in enumerate(self.axis_differences(j)):
                out[j, a, 0] = diff.select(a, 0).max()
                out[j, a, 1] = diff.select(a, diff.shape[a] - 1).max()
        return out

    def lipschitz_constant(self):
        return max(float(diff.max()) for j in range(len(self.grid)) for diff in self.axis_differences(j))

    def growth_constant(self):
        """``max |u(t, x)| / (1 + |x|)`` over lattice nodes."""
        radial = 1.0 + self.lattice_points().norm(dim=-1)
        flat = self.values.reshape(len(self.grid), -1, self.d).norm(dim=-1)
        return float((flat / radial).max())

    def to_frame(self, j):
        points = self.lattice_points().numpy()
        values = self.values[j].reshape(-1, self.d).numpy()
        frame = pd.DataFrame({f'x{c}': points[:, c] for c in range(self.d)})
        for c in range(self.d):
            frame[f'u{c}'] = values[:, c]
        return frame

    def save(self, path):
        doc = {
            'header': {
                'format': FIELD_FORMAT,
                'layout': 'row-major: values[j][i_1]...[i_d][component], node i_a at lower[a] + i_a * h',
                'T': self.grid.T,
                'n_steps': self.grid.n_steps,
                'lower': self.lower.tolist(),
                'h': self.h,
                'shape': list(self.shape),
                'dim': self.d,
                'extrapolation_hits': self.extrapolation_hits,
            },
            'values': self.values.reshape(-1).tolist(),
        }
        with open(path, 'w') as f:
            json.dump(doc, f)

    @classmethod
    def load(cls, path):
        with open(path, 'r') as f:
            doc = json.load(f)
        header = doc['header']
        if header.get('format') != FIELD_FORMAT:
            raise ValueError(f'{path} is not a decoupling field artifact')
        grid = TimeGrid(header['T'], header['n_steps'])
        values = torch.tensor(doc['values'], dtype=DTYPE).reshape(len(grid), *header['shape'], header['dim'])
        return cls(grid, header['lower'], header['h'], header['shape'], values, header['extrapolation_hits'])


def solve_frozen_fbsde(model, flow, lattice_config=None):
    """Backward lattice sweep for the FBSDE with the population flow frozen.

    Args:
        model (MfgModel): The game, with ``d <= 2``.
        flow (MeasureFlow): Frozen population flow on the solver's time grid.
        lattice_config (LatticeConfig, optional): Discretization.

    Returns:
        DecouplingField: Lattice values of u.

    Raises:
        FbsdeSolverError: if an inner fixed point does not contract within budget.
    """
    if model.d > 2:
        raise ValueError(f'The lattice solver supports d <= 2, got d = {model.d}')
    if flow.dim != model.d:
        raise ValueError(f'Flow lives in dimension {flow.dim}, the game in {model.d}')
    config = lattice_config or LatticeConfig()
    logger = get_root_logger()
    grid = flow.grid
    dt = grid.dt

    radius = lattice_radius(model, config)
    lower = model.x0 - radius
    n_axis = int(math.ceil(2.0 * radius / config.h)) + 1
    shape = (n_axis, ) * model.d
    values = torch.empty((len(grid), ) + shape + (model.d, ), dtype=DTYPE)
    field = DecouplingField(grid, lower, config.h, shape, values)
    points = field.lattice_points()
    margin = config.margin_factor * radius
    low_edge, high_edge = field.lower - margin, field.upper + margin

    nodes, weights = gauss_hermite_rule(config.quad_order, model.m)
    shifts = math.sqrt(dt) * nodes @ model.sigma.T
    values[-1] = model.dg_dx(points, flow[-1]).reshape(shape + (model.d, ))

    hits = 0
    for j in reversed(range(grid.n_steps)):
        t = grid.time(j)
        mu = flow[j]
        b1 = model.b1(t)
        table = values[j + 1]
        y = table.reshape(-1, model.d).clone()
        for _ in range(config.inner_max_iters):
            alpha = minimize_hamiltonian(model, t, points, mu, y)
            mean_next = points + dt * model.drift(t, points, mu, alpha)
            targets = (mean_next.unsqueeze(1) + shifts.unsqueeze(0)).reshape(-1, model.d)
            expectation = (weights.reshape(1, -1, 1) * field.interpolate(table, targets).reshape(
                points.shape[0], -1, model.d)).sum(1)
            y_new = expectation + dt * (y @ b1 + model.df_dx(t, points, mu, alpha))
            delta = (y_new - y).abs().amax(dim=-1)
            y = y_new
            if float(delta.max()) <= config.inner_tol:
                break
        else:
            worst = int(delta.argmax())
            raise FbsdeSolverError(
                f'Backward step {j} did not converge: residual {float(delta[worst]):.3e} '
                f'at node {points[worst].tolist()}',
                step=j,
                node=points[worst].tolist(),
                residual=float(delta[worst]))
        hits += int(((targets < low_edge) | (targets > high_edge)).any(dim=-1).sum())
        values[j] = y.reshape(shape + (model.d, ))

    field.extrapolation_hits = hits
    if hits:
        logger.warning(f'{hits} quadrature points fell more than {margin:.3g} outside the lattice; '
                       'consider a larger radius.')
    return field


def euler_step(model, t, x, mu, alpha, dt, noise):
    """One Euler step ``x + b dt + sigma sqrt(dt) xi`` for a batch of states."""
    return x + model.drift(t, x, mu, alpha) * dt + math.sqrt(dt) * (noise @ model.sigma.T)


@dataclass
class PathEnsemble:
    """Particle paths of a forward simulation.

    ``X`` is (n_steps + 1, P, d), ``alpha`` is (n_steps, P, k) and ``Y`` is
    (n_steps + 1, P, d) when a field drove the simulation.
    """
    grid: TimeGrid
    X: torch.Tensor
    alpha: torch.Tensor
    Y: Optional[torch.Tensor]
    seed: int
    stream: str
    flow: Optional[MeasureFlow] = None

    @property
    def n_particles(self):
        return self.X.shape[1]

    def mean_path(self):
        return self.X.mean(dim=1).numpy()


def simulate_forward(model,
                     flow,
                     field,
                     n_particles,
                     seed,
                     support_size=512,
                     control=None,
                     noise=None,
                     x0=None,
                     drift_flow=None,
                     stream='forward'):
    """Euler simulation of the controlled state.

    Args:
        model (MfgModel): The game.
        flow (MeasureFlow): Population flow seen by the Hamiltonian minimizer.
        field (DecouplingField | None): Decoupling field; needed unless ``control`` is given.
        n_particles (int): Number of paths.
        seed (int): Master seed.
        support_size (int): Atoms per node of the returned empirical flow.
        control (callable, optional): Feedback ``(j, t, x) -> alpha`` replacing the optimal one.
        noise (Tensor, optional): Increments (n_steps, n_particles, m); drawn from the stream otherwise.
        x0 (Tensor, optional): Initial state, defaults to the game's x0.
        drift_flow (MeasureFlow, optional): Flow entering the drift, defaults to ``flow``.
        stream (str): Name of the noise stream.

    Returns:
        PathEnsemble: Paths, controls, field values and the empirical flow.
    """
    if field is None and control is None:
        raise ValueError('simulate_forward needs a decoupling field or an explicit control')
    grid = flow.grid
    if field is not None and field.grid != grid:
        raise ValueError(f'Decoupling field lives on {field.grid}, but the flow on {grid}')
    if drift_flow is not None and drift_flow.grid != grid:
        raise ValueError(f'Drift flow lives on {drift_flow.grid}, but the flow on {grid}')
    dt = grid.dt
    if noise is None:
        noise = gaussian_increments(seed, stream, grid.n_steps, n_particles, model.m)
    if tuple(noise.shape) != (grid.n_steps, n_particles, model.m):
        raise ValueError(f'Noise has shape {tuple(noise.shape)}, expected {(grid.n_steps, n_particles, model.m)}')
    start = model.x0 if x0 is None else to_tensor(x0).reshape(-1)
    drift_flow = flow if drift_flow is None else drift_flow

    X = torch.empty(len(grid), n_particles, model.d, dtype=DTYPE)
    A = torch.empty(grid.n_steps, n_particles, model.k, dtype=DTYPE)
    Y = torch.empty(len(grid), n_particles, model.d, dtype=DTYPE) if field is not None else None
    X[0] = start.expand(n_particles, model.d)
    for j in range(grid.n_steps):
        t = grid.time(j)
        if field is not None:
            Y[j] = field.evaluate(j, X[j])
        if control is None:
            A[j] = minimize_hamiltonian(model, t, X[j], flow[j], Y[j])
        else:
            A[j] = control(j, t, X[j])
        X[j + 1] = euler_step(model, t, X[j], drift_flow[j], A[j], dt, noise[j])
    if field is not None:
        Y[-1] = field.evaluate(grid.n_steps, X[-1])
    if not torch.isfinite(X).all():
        raise FloatingPointError('Numeric overflow in the forward simulation')
    empirical = MeasureFlow.from_paths(grid, X, support_size, seed)
    return PathEnsemble(grid=grid, X=X, alpha=A, Y=Y, seed=seed, stream=stream, flow=empirical)


@dataclass
class CostEstimate:
    mean: float
    stderr: float
    n_samples: int
    per_path: np.ndarray

    def to_dict(self):
        out = asdict(self)
        out.pop('per_path')
        return out


def path_costs(model, grid, X, alpha, flow):
    """Per-path ``g(X_T, mu_T) + sum_j f(t_j, X_j, mu_j, alpha_j) dt`` as a numpy array."""
    running = torch.zeros(X.shape[1], dtype=DTYPE)
    for j in range(grid.n_steps):
        running = running + model.f(grid.time(j), X[j], flow[j], alpha[j]) * grid.dt
    return (running + model.g(X[-1], flow[-1])).numpy()


def summarize(samples):
    samples = np.asarray(samples, dtype=np.float64)
    n = samples.shape[0]
    stderr = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(np.mean(samples)), stderr


def evaluate_cost(model, paths, flow):
    """Monte Carlo estimate of the cost of simulated paths against ``flow``."""
    per_path = path_costs(model, paths.grid, paths.X, paths.alpha, flow)
    mean, stderr = summarize(per_path)
    return CostEstimate(mean=mean, stderr=stderr, n_samples=per_path.shape[0], per_path=per_path)
