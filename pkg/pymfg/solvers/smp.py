r"""Sufficiency checks of the stochastic maximum principle.

For a frozen flow ``mu`` with optimal feedback ``alpha_hat`` and any admissible
control ``beta`` driven by a possibly different initial point ``x0'`` and flow
``mu'`` in the drift, the cost satisfies

    J(alpha_hat; mu) + <x0' - x0, Y_0> + lam E int |beta - alpha_hat|^2 dt
        <= J(beta, mu'; mu) + E int <b0(t, mu'_t) - b0(t, mu_t), Y_t> dt.

The checks run both sides on common noise.
"""
import math
from dataclasses import asdict, dataclass

import numpy as np
import torch

from pymfg.solvers.fbsde import path_costs, simulate_forward, summarize
from pymfg.solvers.hamiltonian import minimize_hamiltonian
from pymfg.utils.rng import gaussian_increments, make_generator
from pymfg.utils.tensor_util import DTYPE, to_tensor

SMP_SLACK = 2e-2


class FeedbackPerturbation():
    """Bounded smooth perturbation ``a * tanh(<w, x> + c) * cos(omega t + phi)``.

    Args:
        amplitude (array-like): (k,) amplitudes.
        weights (array-like): (d,) direction of the state dependence.
        offset (float): Shift inside the tanh.
        omega (float): Time frequency.
        phase (float): Time phase.
    """

    def __init__(self, amplitude, weights, offset=0.0, omega=0.0, phase=0.0):
        self.amplitude = to_tensor(amplitude).reshape(-1)
        self.weights = to_tensor(weights).reshape(-1)
        self.offset = float(offset)
        self.omega = float(omega)
        self.phase = float(phase)

    def __call__(self, t, x):
        shape = torch.tanh(x @ self.weights + self.offset) * math.cos(self.omega * t + self.phase)
        return shape.unsqueeze(-1) * self.amplitude

    def sup_norm(self):
        return float(self.amplitude.norm())


def random_feedback_perturbations(count, d, k, seed, max_amplitude=1.0):
    """Draw ``count`` bounded perturbations from the ``perturbation`` stream."""
    rng = make_generator(seed, 'perturbation', 0)
    out = []
    for _ in range(count):
        out.append(
            FeedbackPerturbation(
                amplitude=rng.uniform(-max_amplitude, max_amplitude, size=k),
                weights=rng.normal(size=d),
                offset=rng.normal(),
                omega=rng.uniform(0.0, 2.0 * np.pi),
                phase=rng.uniform(0.0, 2.0 * np.pi)))
    return out


@dataclass
class SmpGapReport:
    """Both sides of the sufficiency inequality; ``gap = rhs - lhs`` should be >= -slack."""
    optimal_cost: float
    perturbed_cost: float
    control_term: float
    initial_term: float
    drift_term: float
    lhs: float
    rhs: float
    gap: float
    stderr: float
    slack: float

    @property
    def holds(self):
        return self.gap >= -self.slack

    def to_dict(self):
        out = asdict(self)
        out['holds'] = self.holds
        return out


def smp_gap_check(model,
                  flow,
                  field,
                  perturbation,
                  n_particles,
                  seed,
                  x0_shift=None,
                  drift_flow=None,
                  slack=SMP_SLACK):
    """Evaluate the sufficiency inequality for ``beta = alpha_hat + perturbation``.

    Args:
        model (MfgModel): The game.
        flow (MeasureFlow): Frozen flow ``mu``; costs are always evaluated against it.
        field (DecouplingField): Decoupling field solved against ``flow``.
        perturbation (callable): ``(t, x) -> (B, k)`` added to the optimal feedback.
        n_particles (int): Number of paths on each side.
        seed (int): Master seed of the common noise.
        x0_shift (array-like, optional): ``x0' - x0``.
        drift_flow (MeasureFlow, optional): Flow ``mu'`` in the drift of the perturbed state.
        slack (float): Tolerance on the gap.

    Returns:
        SmpGapReport: Sample means of every term.
    """
    grid = flow.grid
    dt = grid.dt
    noise = gaussian_increments(seed, 'smp', grid.n_steps, n_particles, model.m)
    optimal = simulate_forward(model, flow, field, n_particles, seed, noise=noise, stream='smp')

    def perturbed_control(j, t, x):
        y = field.evaluate(j, x)
        return minimize_hamiltonian(model, t, x, flow[j], y) + perturbation(t, x)

    shift = torch.zeros(model.d, dtype=DTYPE) if x0_shift is None else to_tensor(x0_shift).reshape(-1)
    perturbed = simulate_forward(
        model,
        flow,
        None,
        n_particles,
        seed,
        control=perturbed_control,
        noise=noise,
        x0=model.x0 + shift,
        drift_flow=drift_flow,
        stream='smp')

    optimal_cost = path_costs(model, grid, optimal.X, optimal.alpha, flow)
    perturbed_cost = path_costs(model, grid, perturbed.X, perturbed.alpha, flow)
    control_term = model.lam * dt * ((perturbed.alpha - optimal.alpha)**2).sum(dim=(0, 2)).numpy()
    initial_term = float(shift @ optimal.Y[0, 0])
    drift_term = np.zeros(n_particles)
    if drift_flow is not None:
        acc = torch.zeros(n_particles, dtype=DTYPE)
        for j in range(grid.n_steps):
            t = grid.time(j)
            acc = acc + (optimal.Y[j] @ (model.b0(t, drift_flow[j]) - model.b0(t, flow[j]))) * dt
        drift_term = acc.numpy()

    lhs = optimal_cost + initial_term + control_term
    rhs = perturbed_cost + drift_term
    gap_mean, gap_stderr = summarize(rhs - lhs)
    return SmpGapReport(
        optimal_cost=float(optimal_cost.mean()),
        perturbed_cost=float(perturbed_cost.mean()),
        control_term=float(control_term.mean()),
        initial_term=initial_term,
        drift_term=float(drift_term.mean()),
        lhs=float(lhs.mean()),
        rhs=float(rhs.mean()),
        gap=gap_mean,
        stderr=gap_stderr,
        slack=slack)
