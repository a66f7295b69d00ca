r"""Closed-form reference solution of linear-quadratic games.

With the ansatz ``Y_t = eta_t X_t + chi_t`` and ``B = b2 (n^T n)^{-1} b2^T``:

    eta' = -b1^T eta - eta b1 + eta B eta - m^T m,              eta_T = q^T q
    xbar' = (b0 + b1) xbar - B (eta xbar + chi),                 xbar_0 = x0
    chi' = -b1^T chi + eta B chi - eta b0 xbar - m^T mbar xbar,  chi_T = q^T qbar xbar_T

``eta`` is integrated backward with RK4. ``(xbar, chi)`` solve a linear
two-point problem, handled through the fundamental matrix of the coupled
system. Midpoint values of ``eta`` come from cubic Hermite interpolation so
that the whole scheme stays fourth order.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
import torch
from scipy import stats

from pymfg.data.measure import DiscreteMeasure, MeasureFlow
from pymfg.models.base_model import AssumptionReport
from pymfg.models.lq_model import LqSpec, check_lq_assumptions
from pymfg.solvers.fbsde import DecouplingField, LatticeConfig
from pymfg.utils.tensor_util import DTYPE

# boundary systems whose smallest singular value falls below this fraction of their scale are singular
SINGULAR_TOL = 1e-8


class LqOracleError(RuntimeError):
    """The boundary system of the oracle is singular."""


@dataclass(eq=False)
class RiccatiSolution:
    """Oracle paths on the time grid.

    ``eta`` is (n_steps + 1, d, d), ``chi`` and ``xbar`` are (n_steps + 1, d),
    ``cov`` is the state covariance (n_steps + 1, d, d) and ``J`` the equilibrium cost.
    """
    grid: object
    spec: LqSpec
    eta: np.ndarray
    chi: np.ndarray
    xbar: np.ndarray
    cov: np.ndarray
    J: float
    boundary_residual: float
    report: Optional[AssumptionReport] = None

    def _interp(self, t):
        s = np.clip(t / self.grid.dt, 0, self.grid.n_steps)
        j = min(int(np.floor(s)), self.grid.n_steps - 1)
        w = s - j
        return j, w

    def alpha_feedback(self, t, x):
        """Equilibrium control ``-(n^T n)^{-1} b2^T (eta_t x + chi_t)`` at points (B, d) or (d,).

        Between grid nodes ``eta`` and ``chi`` are interpolated linearly.
        """
        j, w = self._interp(t)
        eta = (1 - w) * self.eta[j] + w * self.eta[j + 1]
        chi = (1 - w) * self.chi[j] + w * self.chi[j + 1]
        x = np.asarray(x, dtype=np.float64)
        y = x @ eta.T + chi
        n, b2 = self.spec.n(t), self.spec.b2(t)
        return -np.linalg.solve(n.T @ n, b2.T @ y.T).T if y.ndim == 2 else -np.linalg.solve(n.T @ n, b2.T @ y)

    def field_values(self, j, x):
        """``eta_j x + chi_j`` for a (B, d) tensor."""
        return x @ torch.from_numpy(self.eta[j]).T + torch.from_numpy(self.chi[j])

    def to_field(self, lattice_config=None, radius=None):
        """Oracle decoupling field on a lattice around x0."""
        config = lattice_config or LatticeConfig()
        radius = radius or config.radius or 6.0 * max(1.0, float(np.linalg.norm(self.spec.sigma, 2)))
        d = self.spec.d
        lower = torch.from_numpy(self.spec.x0 - radius)
        n_axis = int(np.ceil(2 * radius / config.h)) + 1
        shape = (n_axis, ) * d
        values = torch.empty((len(self.grid), ) + shape + (d, ), dtype=DTYPE)
        field = DecouplingField(self.grid, lower, config.h, shape, values)
        points = field.lattice_points()
        for j in range(len(self.grid)):
            values[j] = self.field_values(j, points).reshape(shape + (d, ))
        return field

    def mean_flow(self):
        """Flow of Diracs at the mean path (enough for LQ games, whose coefficients only see the mean)."""
        return MeasureFlow.dirac_path(self.grid, self.xbar)

    def gaussian_flow(self, support_size):
        """Quantile discretization of N(xbar_t, cov_t) with ``support_size`` atoms (d = 1)."""
        if self.spec.d != 1:
            raise ValueError('gaussian_flow is only available in d = 1')
        levels = (np.arange(support_size) + 0.5) / support_size
        base = stats.norm.ppf(levels)
        measures = []
        for j in range(len(self.grid)):
            std = np.sqrt(max(self.cov[j, 0, 0], 0.0))
            if std == 0.0:
                measures.append(DiscreteMeasure.dirac(self.xbar[j]))
            else:
                measures.append(DiscreteMeasure((self.xbar[j, 0] + std * base).reshape(-1, 1)))
        return MeasureFlow(self.grid, measures)

    def to_frame(self):
        d = self.spec.d
        frame = pd.DataFrame({'t': self.grid.nodes})
        if d == 1:
            frame['eta'] = self.eta[:, 0, 0]
            frame['chi'] = self.chi[:, 0]
            frame['xbar'] = self.xbar[:, 0]
            frame['var'] = self.cov[:, 0, 0]
            return frame
        for a in range(d):
            for b in range(d):
                frame[f'eta_{a}{b}'] = self.eta[:, a, b]
        for a in range(d):
            frame[f'chi_{a}'] = self.chi[:, a]
            frame[f'xbar_{a}'] = self.xbar[:, a]
        return frame


def _riccati_rhs(spec, t, eta):
    b1, m = spec.b1(t), spec.m(t)
    return -b1.T @ eta - eta @ b1 + eta @ spec.control_cost_matrix(t) @ eta - m.T @ m


def _coupled_matrix(spec, t, eta):
    d = spec.d
    b0, b1, m, mbar = spec.b0(t), spec.b1(t), spec.m(t), spec.mbar(t)
    B = spec.control_cost_matrix(t)
    A = np.zeros((2 * d, 2 * d))
    A[:d, :d] = b0 + b1 - B @ eta
    A[:d, d:] = -B
    A[d:, :d] = -eta @ b0 - m.T @ mbar
    A[d:, d:] = -b1.T + eta @ B
    return A


def _rk4(rhs, t, y, h):
    k1 = rhs(t, y)
    k2 = rhs(t + h / 2, y + h / 2 * k1)
    k3 = rhs(t + h / 2, y + h / 2 * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def solve_lq_riccati(spec, grid):
    """Solve the Riccati system of an LQ game on ``grid``.

    Returns:
        RiccatiSolution: Oracle paths and the equilibrium cost.

    Raises:
        AssumptionViolation: if ``n^T n`` is not positive definite.
        LqOracleError: if the boundary system is singular.
    """
    report = check_lq_assumptions(spec).require()
    if abs(grid.T - spec.T) > 1e-12:
        raise ValueError(f'Grid horizon {grid.T} differs from the game horizon {spec.T}')
    d, n, dt = spec.d, grid.n_steps, grid.dt
    times = grid.nodes

    eta = np.empty((n + 1, d, d))
    eta[n] = spec.q.T @ spec.q
    for j in reversed(range(n)):
        step = _rk4(lambda t, e: _riccati_rhs(spec, t, e), times[j + 1], eta[j + 1], -dt)
        eta[j] = 0.5 * (step + step.T)

    # midpoint values by cubic Hermite interpolation, evaluated inside each interval
    eta_mid = np.empty((n, d, d))
    for j in range(n):
        t_left = times[j] + 1e-12 * dt
        t_right = times[j + 1] - 1e-12 * dt
        slope_left = _riccati_rhs(spec, t_left, eta[j])
        slope_right = _riccati_rhs(spec, t_right, eta[j + 1])
        eta_mid[j] = 0.5 * (eta[j] + eta[j + 1]) + dt / 8 * (slope_left - slope_right)

    def eta_at(j, stage):
        return (eta[j], eta_mid[j], eta[j + 1])[stage]

    # fundamental matrix of z = (xbar, chi) on [0, T]
    phi = np.empty((n + 1, 2 * d, 2 * d))
    phi[0] = np.eye(2 * d)
    for j in range(n):
        t_mid = times[j] + dt / 2
        A0 = _coupled_matrix(spec, times[j], eta_at(j, 0))
        A1 = _coupled_matrix(spec, t_mid, eta_at(j, 1))
        A2 = _coupled_matrix(spec, times[j + 1] - 1e-12 * dt, eta_at(j, 2))
        k1 = A0 @ phi[j]
        k2 = A1 @ (phi[j] + dt / 2 * k1)
        k3 = A1 @ (phi[j] + dt / 2 * k2)
        k4 = A2 @ (phi[j] + dt * k3)
        phi[j + 1] = phi[j] + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    Q = spec.q.T @ spec.qbar
    PT = phi[n]
    lhs = PT[d:, d:] - Q @ PT[:d, d:]
    rhs = (Q @ PT[:d, :d] - PT[d:, :d]) @ spec.x0
    scale = max(np.linalg.norm(PT[d:, d:], 2), np.linalg.norm(Q @ PT[:d, d:], 2), 1.0)
    smallest = np.linalg.svd(lhs, compute_uv=False).min() if np.all(np.isfinite(lhs)) else 0.0
    if smallest <= SINGULAR_TOL * scale:
        raise LqOracleError(f'Singular boundary system for chi_0 '
                            f'(smallest singular value {smallest:.3e}, scale {scale:.3e})')
    chi0 = np.linalg.solve(lhs, rhs)
    z = phi @ np.concatenate([spec.x0, chi0])
    xbar, chi = z[:, :d], z[:, d:]
    boundary_residual = float(np.abs(chi[n] - Q @ xbar[n]).max())

    # state covariance: P' = A P + P A^T + sigma sigma^T, A = b1 - B eta
    cov = np.zeros((n + 1, d, d))
    noise = spec.sigma @ spec.sigma.T
    for j in range(n):

        def lyapunov(stage_t, P, stage):
            A = spec.b1(stage_t) - spec.control_cost_matrix(stage_t) @ eta_at(j, stage)
            return A @ P + P @ A.T + noise

        k1 = lyapunov(times[j], cov[j], 0)
        k2 = lyapunov(times[j] + dt / 2, cov[j] + dt / 2 * k1, 1)
        k3 = lyapunov(times[j] + dt / 2, cov[j] + dt / 2 * k2, 1)
        k4 = lyapunov(times[j + 1] - 1e-12 * dt, cov[j] + dt * k3, 2)
        step = cov[j] + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        cov[j + 1] = 0.5 * (step + step.T)

    sol = RiccatiSolution(
        grid=grid,
        spec=spec,
        eta=eta,
        chi=chi,
        xbar=xbar,
        cov=cov,
        J=float('nan'),
        boundary_residual=boundary_residual,
        report=report)
    sol.J = lq_cost(sol, spec, eta_mid=eta_mid)
    return sol


def _running_constant(spec, t, eta, xbar, chi):
    B = spec.control_cost_matrix(t)
    mbar_x = spec.mbar(t) @ xbar
    return ((spec.b0(t) @ xbar) @ chi - 0.5 * chi @ B @ chi + 0.5 * mbar_x @ mbar_x +
            0.5 * np.trace(spec.sigma.T @ eta @ spec.sigma))


def lq_cost(sol, spec, eta_mid=None):
    """Equilibrium cost ``1/2 x0^T eta_0 x0 + chi_0^T x0 + kappa_0``.

    ``kappa_0 = 1/2 |qbar xbar_T|^2 + int (b0 xbar)^T chi - 1/2 chi^T B chi + 1/2 |mbar xbar|^2
    + 1/2 tr(sigma^T eta sigma) dt`` is integrated with Simpson's rule, midpoints from cubic
    Hermite interpolation.
    """
    grid = sol.grid
    d, n, dt = spec.d, grid.n_steps, grid.dt
    times = grid.nodes
    if eta_mid is None:
        eta_mid = np.empty((n, d, d))
        for j in range(n):
            slope_left = _riccati_rhs(spec, times[j] + 1e-12 * dt, sol.eta[j])
            slope_right = _riccati_rhs(spec, times[j + 1] - 1e-12 * dt, sol.eta[j + 1])
            eta_mid[j] = 0.5 * (sol.eta[j] + sol.eta[j + 1]) + dt / 8 * (slope_left - slope_right)

    integral = 0.0
    for j in range(n):
        t_left, t_mid, t_right = times[j], times[j] + dt / 2, times[j + 1] - 1e-12 * dt
        z_left = np.concatenate([sol.xbar[j], sol.chi[j]])
        z_right = np.concatenate([sol.xbar[j + 1], sol.chi[j + 1]])
        slope_left = _coupled_matrix(spec, t_left, sol.eta[j]) @ z_left
        slope_right = _coupled_matrix(spec, t_right, sol.eta[j + 1]) @ z_right
        z_mid = 0.5 * (z_left + z_right) + dt / 8 * (slope_left - slope_right)
        f_left = _running_constant(spec, t_left, sol.eta[j], z_left[:d], z_left[d:])
        f_mid = _running_constant(spec, t_mid, eta_mid[j], z_mid[:d], z_mid[d:])
        f_right = _running_constant(spec, t_right, sol.eta[j + 1], z_right[:d], z_right[d:])
        integral += dt / 6 * (f_left + 4 * f_mid + f_right)

    terminal = spec.qbar @ sol.xbar[n]
    kappa0 = 0.5 * terminal @ terminal + integral
    x0 = spec.x0
    return float(0.5 * x0 @ sol.eta[0] @ x0 + sol.chi[0] @ x0 + kappa0)
