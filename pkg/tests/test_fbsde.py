import dataclasses
import math

import numpy as np
import pytest
import torch

from pymfg.api_helpers import create_game
from pymfg.data import MeasureFlow, TimeGrid
from pymfg.solvers import (DecouplingField, FbsdeSolverError, LatticeConfig, evaluate_cost,
                           random_feedback_perturbations, simulate_forward, smp_gap_check, solve_frozen_fbsde,
                           solve_lq_riccati)
from pymfg.solvers.fbsde import gauss_hermite_rule, path_costs
from pymfg.utils.tensor_util import DTYPE

from .conftest import DEGENERATE_COST


def _dirac_flow(model, grid):
    return MeasureFlow.dirac(grid, model.x0)


def test_gauss_hermite_rule_integrates_moments():
    nodes, weights = gauss_hermite_rule(8, 1)
    assert float(weights.sum()) == pytest.approx(1.0, abs=1e-14)
    assert float(weights @ nodes[:, 0]**2) == pytest.approx(1.0, abs=1e-12)
    assert float(weights @ nodes[:, 0]**4) == pytest.approx(3.0, abs=1e-12)
    nodes2, weights2 = gauss_hermite_rule(3, 2)
    assert nodes2.shape == (9, 2) and weights2.shape == (9, )


def test_lattice_options_reject_unknown_keys():
    with pytest.raises(ValueError):
        LatticeConfig.from_dict({'h': 0.1, 'radious': 2.0})
    with pytest.raises(AssertionError):
        LatticeConfig(h=-1.0)


def test_zero_cost_field_vanishes(zero_cost_game, small_lattice, grid20):
    field_ = solve_frozen_fbsde(zero_cost_game, _dirac_flow(zero_cost_game, grid20), small_lattice)
    assert torch.count_nonzero(field_.values) == 0
    assert field_.extrapolation_hits == 0


def test_single_step_matches_closed_form():
    # terminal gradient x and alpha = -y give y = x - y dt
    model = create_game('lq_degenerate', T=0.5)
    grid = TimeGrid(0.5, 1)
    field_ = solve_frozen_fbsde(model, _dirac_flow(model, grid), LatticeConfig(h=0.1, radius=4.0))
    x = torch.tensor([[-1.0], [0.3], [2.0]], dtype=DTYPE)
    torch.testing.assert_close(field_.evaluate(0, x), x / 1.5, rtol=0, atol=1e-8)
    torch.testing.assert_close(field_.evaluate(1, x), x, rtol=0, atol=1e-12)


def test_degenerate_field_is_linear_in_state(degenerate_game, small_lattice, grid20):
    # the lattice recursion reproduces 1 / eta_t = 2 - t at every node
    field_ = solve_frozen_fbsde(degenerate_game, _dirac_flow(degenerate_game, grid20), small_lattice)
    points = field_.lattice_points()
    for j in range(len(grid20)):
        expected = points / (2.0 - grid20.time(j))
        torch.testing.assert_close(field_.evaluate(j, points), expected, rtol=0, atol=1e-7)
    assert field_.lipschitz_constant() == pytest.approx(1.0, abs=1e-6)


def test_inner_budget_exhaustion_raises(degenerate_game, grid20):
    config = LatticeConfig(h=0.1, radius=3.0, inner_max_iters=1)
    with pytest.raises(FbsdeSolverError) as excinfo:
        solve_frozen_fbsde(degenerate_game, _dirac_flow(degenerate_game, grid20), config)
    assert excinfo.value.step == grid20.n_steps - 1
    assert excinfo.value.residual > 0


def test_lattice_solver_dimension_limits(grid20):
    model = create_game('quartic_control', d=3)
    with pytest.raises(ValueError):
        solve_frozen_fbsde(model, MeasureFlow.dirac(grid20, [0.0, 0.0, 0.0]), LatticeConfig(h=0.5, radius=1.0))
    with pytest.raises(ValueError):
        solve_frozen_fbsde(create_game('lq_degenerate'), MeasureFlow.dirac(grid20, [0.0, 0.0]))


def test_field_save_and_load(tmp_path, degenerate_game, grid20):
    config = LatticeConfig(h=0.25, radius=2.0)
    field_ = solve_frozen_fbsde(degenerate_game, _dirac_flow(degenerate_game, grid20), config)
    path = str(tmp_path / 'field.json')
    field_.save(path)
    loaded = DecouplingField.load(path)
    assert torch.equal(loaded.values, field_.values)
    assert loaded.shape == field_.shape and loaded.h == field_.h
    assert list(loaded.to_frame(0).columns) == ['x0', 'u0']


def test_driftless_state_is_brownian(zero_cost_game, small_lattice, grid20):
    flow = _dirac_flow(zero_cost_game, grid20)
    field_ = solve_frozen_fbsde(zero_cost_game, flow, small_lattice)
    n = 4000
    paths = simulate_forward(zero_cost_game, flow, field_, n, seed=5)
    terminal = paths.X[-1, :, 0]
    assert abs(float(terminal.mean()) - 1.0) <= 4.0 / math.sqrt(n)
    assert abs(float(terminal.var()) - 1.0) <= 4.0 * math.sqrt(2.0 / n)
    assert torch.count_nonzero(paths.alpha) == 0


def test_forward_simulation_is_deterministic(degenerate_game, small_lattice, grid20):
    flow = _dirac_flow(degenerate_game, grid20)
    field_ = solve_frozen_fbsde(degenerate_game, flow, small_lattice)
    first = simulate_forward(degenerate_game, flow, field_, 300, seed=11)
    second = simulate_forward(degenerate_game, flow, field_, 300, seed=11)
    other = simulate_forward(degenerate_game, flow, field_, 300, seed=12)
    assert torch.equal(first.X, second.X)
    assert not torch.equal(first.X, other.X)
    # the first paths do not depend on how many follow them
    fewer = simulate_forward(degenerate_game, flow, field_, 100, seed=11)
    assert torch.equal(fewer.X, first.X[:, :100])


def test_forward_needs_field_or_control(degenerate_game, grid20):
    with pytest.raises(ValueError):
        simulate_forward(degenerate_game, _dirac_flow(degenerate_game, grid20), None, 10, seed=0)
    with pytest.raises(ValueError):
        simulate_forward(
            degenerate_game,
            _dirac_flow(degenerate_game, grid20),
            None,
            10,
            seed=0,
            control=lambda j, t, x: torch.zeros_like(x),
            noise=torch.zeros(3, 10, 1, dtype=DTYPE))


@pytest.mark.parametrize('field_grid', [TimeGrid(1.0, 2), TimeGrid(2.0, 20)])
def test_field_and_flow_share_the_grid(degenerate_game, grid20, field_grid):
    n_nodes = field_grid.n_steps + 1
    field_ = DecouplingField(field_grid, [-5.0], 0.1, (101, ), torch.zeros(n_nodes, 101, 1, dtype=DTYPE))
    flow = _dirac_flow(degenerate_game, grid20)
    with pytest.raises(ValueError, match='Decoupling field'):
        simulate_forward(degenerate_game, flow, field_, 10, seed=0)
    with pytest.raises(ValueError, match='Drift flow'):
        simulate_forward(
            degenerate_game,
            flow,
            None,
            10,
            seed=0,
            control=lambda j, t, x: torch.zeros_like(x),
            drift_flow=_dirac_flow(degenerate_game, field_grid))


def test_cost_accumulation(zero_cost_game, grid20):
    flow = _dirac_flow(zero_cost_game, grid20)

    def zero_control(j, t, x):
        return torch.zeros_like(x)

    paths = simulate_forward(zero_cost_game, flow, None, 50, seed=0, control=zero_control)
    assert evaluate_cost(zero_cost_game, paths, flow).mean == 0.0

    def unit_cost(t, x, mu, alpha):
        return torch.ones(x.shape[0], dtype=DTYPE)

    model = dataclasses.replace(zero_cost_game, f=unit_cost)
    np.testing.assert_allclose(path_costs(model, grid20, paths.X, paths.alpha, flow), 1.0, atol=1e-12)


@pytest.mark.calibration
def test_degenerate_cost_by_monte_carlo(degenerate_game, small_lattice):
    grid = TimeGrid(1.0, 100)
    flow = _dirac_flow(degenerate_game, grid)
    field_ = solve_frozen_fbsde(degenerate_game, flow, small_lattice)
    paths = simulate_forward(degenerate_game, flow, field_, 20000, seed=0)
    cost = evaluate_cost(degenerate_game, paths, flow)
    # Monte Carlo error plus the first-order time discretization
    assert abs(cost.mean - DEGENERATE_COST) <= 3 * cost.stderr + 5e-3


@pytest.mark.calibration
def test_acceptance_field_matches_riccati(acceptance_game, acceptance_spec, small_lattice):
    grid = TimeGrid(1.0, 200)
    oracle = solve_lq_riccati(acceptance_spec, grid)
    field_ = solve_frozen_fbsde(acceptance_game, oracle.mean_flow(), small_lattice)
    x = torch.linspace(0.0, 2.0, 21, dtype=DTYPE).reshape(-1, 1)
    for j in (0, 100, 200):
        error = (field_.evaluate(j, x) - oracle.field_values(j, x)).abs().max()
        # the lattice recursion is first order in time
        assert float(error) <= 5e-3


@pytest.mark.calibration
def test_sufficiency_gap_is_nonnegative(degenerate_game, small_lattice):
    grid = TimeGrid(1.0, 50)
    flow = _dirac_flow(degenerate_game, grid)
    field_ = solve_frozen_fbsde(degenerate_game, flow, small_lattice)
    for i, perturbation in enumerate(random_feedback_perturbations(20, 1, 1, seed=0)):
        report = smp_gap_check(degenerate_game, flow, field_, perturbation, 2000, seed=i)
        assert report.holds, report.to_dict()
