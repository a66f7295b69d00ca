import numpy as np
import pytest
import torch

from pymfg.data import TimeGrid
from pymfg.solvers import LqOracleError, minimize_hamiltonian, solve_lq_riccati

from .conftest import DEGENERATE_COST, lq_spec


@pytest.fixture(scope='module')
def grid100():
    return TimeGrid(1.0, 100)


@pytest.fixture(scope='module')
def acceptance_oracle(acceptance_spec, grid100):
    return solve_lq_riccati(acceptance_spec, grid100)


def test_degenerate_closed_form(degenerate_spec, grid100):
    sol = solve_lq_riccati(degenerate_spec, grid100)
    np.testing.assert_allclose(sol.eta[:, 0, 0], 1.0 / (2.0 - grid100.nodes), atol=1e-8)
    assert sol.eta[0, 0, 0] == pytest.approx(0.5, abs=1e-8)
    assert sol.xbar[-1, 0] == pytest.approx(0.5, abs=1e-8)
    assert np.all(sol.chi == 0.0)
    assert sol.J == pytest.approx(DEGENERATE_COST, abs=1e-6)


def test_deterministic_degenerate_cost(grid100):
    sol = solve_lq_riccati(lq_spec('lq_degenerate', sigma=0.0), grid100)
    assert sol.J == pytest.approx(0.25, abs=1e-8)
    assert np.all(sol.cov == 0.0)


def test_costless_game_stays_put(grid100):
    sol = solve_lq_riccati(lq_spec('lq_degenerate', q=0.0), grid100)
    assert np.all(sol.eta == 0.0) and np.all(sol.chi == 0.0)
    np.testing.assert_allclose(sol.xbar[:, 0], 1.0)
    assert sol.J == 0.0
    # the state is x0 + sigma W
    np.testing.assert_allclose(sol.cov[:, 0, 0], grid100.nodes, atol=1e-12)


def test_acceptance_riccati_is_constant(acceptance_oracle):
    np.testing.assert_allclose(acceptance_oracle.eta[:, 0, 0], 1.0, atol=1e-12)
    assert acceptance_oracle.boundary_residual <= 1e-10


def test_grid_doubling_is_stable(acceptance_spec, acceptance_oracle):
    fine = solve_lq_riccati(acceptance_spec, TimeGrid(1.0, 200))
    np.testing.assert_allclose(fine.xbar[::2], acceptance_oracle.xbar, atol=1e-8)
    np.testing.assert_allclose(fine.chi[::2], acceptance_oracle.chi, atol=1e-8)
    assert fine.J == pytest.approx(acceptance_oracle.J, abs=1e-8)


def test_fourth_order_convergence(acceptance_spec):
    reference = solve_lq_riccati(acceptance_spec, TimeGrid(1.0, 400)).xbar[-1, 0]
    coarse = abs(solve_lq_riccati(acceptance_spec, TimeGrid(1.0, 25)).xbar[-1, 0] - reference)
    fine = abs(solve_lq_riccati(acceptance_spec, TimeGrid(1.0, 50)).xbar[-1, 0] - reference)
    assert 11.2 <= coarse / fine <= 20.8


def test_feedback_matches_hamiltonian_minimizer(acceptance_game, acceptance_oracle, grid100):
    x = torch.linspace(-2.0, 3.0, 11, dtype=torch.float64).reshape(-1, 1)
    flow = acceptance_oracle.mean_flow()
    for j in (0, 37, 100):
        t = grid100.time(j)
        alpha = minimize_hamiltonian(acceptance_game, t, x, flow[j], acceptance_oracle.field_values(j, x))
        np.testing.assert_allclose(acceptance_oracle.alpha_feedback(t, x.numpy()), alpha.numpy(), atol=1e-12)


def test_gaussian_flow_has_oracle_moments(acceptance_oracle):
    flow = acceptance_oracle.gaussian_flow(2000)
    assert flow.support_size == 2000
    np.testing.assert_allclose(flow.mean_path()[:, 0], acceptance_oracle.xbar[:, 0], atol=1e-12)
    # Dirac at t = 0
    assert flow[0].n_atoms == 1


def test_singular_boundary_system_raises():
    with pytest.raises(LqOracleError):
        solve_lq_riccati(lq_spec('lq_violating'), TimeGrid(1.0, 400))


def test_grid_must_match_horizon(acceptance_spec):
    with pytest.raises(ValueError):
        solve_lq_riccati(acceptance_spec, TimeGrid(2.0, 10))


def test_oracle_field_and_frame(acceptance_oracle):
    assert list(acceptance_oracle.to_frame().columns) == ['t', 'eta', 'chi', 'xbar', 'var']
    field_ = acceptance_oracle.to_field(radius=2.0)
    x = torch.tensor([[0.5], [1.25]], dtype=torch.float64)
    torch.testing.assert_close(field_.evaluate(10, x), acceptance_oracle.field_values(10, x))
