import math

import numpy as np
import pytest
import torch

from pymfg.api_helpers import create_game
from pymfg.data import TimeGrid
from pymfg.experiments import (ChaosTable, NashGapReport, build_strategy, chaos_experiment, deviation_sweep,
                               fit_loglog_slope, nash_gap_study, simulate_nplayer)
from pymfg.experiments.nplayer import simulate_system
from pymfg.experiments.strategies import EquilibriumStrategy
from pymfg.solvers import LatticeConfig, simulate_forward, solve_lq_riccati
from pymfg.utils.registry import Registry
from pymfg.utils.rng import player_increments
from pymfg.utils.tensor_util import DTYPE

from .conftest import lq_spec


@pytest.fixture(scope='module')
def measure_free():
    """Game, oracle field and oracle flow of the measure-free preset."""
    grid = TimeGrid(1.0, 20)
    oracle = solve_lq_riccati(lq_spec('lq_measure_free'), grid)
    return create_game('lq_measure_free'), oracle.to_field(radius=4.0), oracle.mean_flow(), oracle.J


def test_loglog_slope():
    assert fit_loglog_slope([1, 2, 4], [1.0, 0.5, 0.25]) == pytest.approx(-1.0)
    assert math.isnan(fit_loglog_slope([1, 2], [1.0, 0.0]))
    assert math.isnan(fit_loglog_slope([4], [1.0]))


def test_measure_free_players_decouple(measure_free):
    model, field_, flow, _ = measure_free
    control = EquilibriumStrategy().bind(model, field_, flow)
    noise = player_increments(0, 6, 0, flow.grid.n_steps, model.m)
    coupled, coupled_costs = simulate_system(model, flow, control, noise, coupled=True)
    decoupled, decoupled_costs = simulate_system(model, flow, control, noise, coupled=False)
    assert torch.equal(coupled, decoupled)
    assert torch.equal(coupled_costs, decoupled_costs)


def test_player_paths_follow_the_forward_simulation(measure_free):
    model, field_, flow, _ = measure_free
    result = simulate_nplayer(model, field_, flow, 5, seed=3, replications=2, keep_paths=True)
    noise = player_increments(3, 5, 1, flow.grid.n_steps, model.m)
    single = simulate_forward(model, flow, field_, 5, seed=3, noise=noise)
    torch.testing.assert_close(result.paths[1], single.X, rtol=0, atol=1e-12)
    assert result.costs.shape == (2, 5)


def test_nplayer_costs_are_reproducible(measure_free):
    model, field_, flow, _ = measure_free
    first = simulate_nplayer(model, field_, flow, 4, seed=1, replications=3)
    second = simulate_nplayer(model, field_, flow, 4, seed=1, replications=3, num_workers=2)
    np.testing.assert_array_equal(first.costs, second.costs)
    assert first.stderr.shape == (4, )


def test_nplayer_argument_checks(measure_free):
    model, field_, flow, J = measure_free
    with pytest.raises(ValueError):
        simulate_nplayer(model, field_, flow, 0, seed=0)
    with pytest.raises(ValueError):
        simulate_nplayer(model, field_, flow, 3, seed=0, replications=1)
    with pytest.raises(ValueError):
        simulate_nplayer(model, field_, flow, 3, seed=0, replications=2, deviations={3: EquilibriumStrategy()})
    with pytest.raises(ValueError):
        deviation_sweep(model, field_, flow, 3, [], 2, 0, J)
    with pytest.raises(ValueError):
        chaos_experiment(model, field_, flow, [1, 4], 2, 0)
    with pytest.raises(ValueError):
        chaos_experiment(model, field_, flow, [4], 1, 0)


def test_equilibrium_deviation_gains_nothing(measure_free):
    model, field_, flow, J = measure_free
    report = deviation_sweep(model, field_, flow, 3, [{'type': 'EquilibriumStrategy'}], 4, 0, J)
    row = report.deviations[0]
    assert abs(row['improvement']) <= 1e-12
    assert row['passes']
    assert report.epsilon[3] == pytest.approx(abs(report.player_costs[3][0] - J))


def test_strategies_from_options(measure_free):
    model, field_, flow, _ = measure_free
    x = torch.tensor([[0.5], [1.5]], dtype=DTYPE)
    equilibrium = EquilibriumStrategy().bind(model, field_, flow)
    scaled = build_strategy({'type': 'ScaledStrategy', 'factor': 0.9}, model, field_, flow)
    assert scaled.label == 'scaled_0.9'
    torch.testing.assert_close(scaled(3, 0.15, x), 0.9 * equilibrium(3, 0.15, x))
    constant = build_strategy({'type': 'ConstantStrategy', 'value': 10.0}, model, field_, flow)
    assert torch.equal(constant(0, 0.0, x), torch.full((2, 1), 10.0, dtype=DTYPE))
    zero = build_strategy({'type': 'ZeroStrategy'}, model, field_, flow)
    assert torch.count_nonzero(zero(0, 0.0, x)) == 0
    with pytest.raises(ValueError):
        build_strategy({'type': 'OpenLoopStrategy', 'path': [0.0, 1.0]}, model, field_, flow)
    with pytest.raises(KeyError):
        build_strategy({'type': 'NoSuchStrategy'}, model, field_, flow)


def test_frozen_flow_response_solves_again(measure_free):
    model, field_, flow, _ = measure_free
    opt = {'type': 'FrozenFlowStrategy', 'lattice': {'h': 0.05, 'radius': 4.0}}
    strategy = build_strategy(opt, model, field_, flow, {'reference_flow': flow})
    x = torch.tensor([[0.0], [1.0]], dtype=DTYPE)
    # one-step lattice recursion against the exact field; first order in time
    expected = EquilibriumStrategy().bind(model, field_, flow)(0, 0.0, x)
    torch.testing.assert_close(strategy(0, 0.0, x), expected, rtol=0, atol=0.05)


def test_measure_free_chaos_error_vanishes(measure_free):
    model, field_, flow, J = measure_free
    table = chaos_experiment(model, field_, flow, [2, 4], replications=3, seed=0, limit_cost=J, time_stride=5)
    assert np.all(table.coupling == 0.0)
    assert np.all(table.w2sq > 0)
    assert list(table.to_frame().columns)[:3] == ['N', 'coupling_error', 'coupling_stderr']
    assert table.exponent == pytest.approx(2.0 / 5.0)


def test_chaos_bound_is_calibrated_at_smallest_n():
    table = ChaosTable(
        Ns=[10, 40],
        dim=1,
        coupling=np.array([0.1, 0.02]),
        coupling_stderr=np.zeros(2),
        w2sq=np.array([0.2, 0.19]),
        w2sq_stderr=np.zeros(2),
        cost_gap=np.array([0.1, 0.05]),
        cost_gap_stderr=np.zeros(2),
        player1_gap=np.array([0.1, 0.05]))
    # 4 ** (-2/5) is about 0.574
    assert table.bound_holds == {'coupling': True, 'w2sq': False}
    assert table.slopes['cost_gap'] == pytest.approx(-0.5)


def test_report_merge_and_frames():
    first = NashGapReport(limit_cost=1.0, Ns=[2], player_costs={2: np.array([1.1, 0.9])},
                          player_stderr={2: np.array([0.01, 0.01])}, epsilon={2: 0.1},
                          deviations=[{'N': 2, 'passes': True}])
    second = NashGapReport(limit_cost=1.0, Ns=[4], player_costs={4: np.full(4, 1.05)},
                           player_stderr={4: np.full(4, 0.01)}, epsilon={4: 0.05},
                           deviations=[{'N': 4, 'passes': False}])
    merged = NashGapReport.merge([first, second])
    assert merged.Ns == [2, 4]
    assert not merged.passes
    assert merged.average_gap(2) == pytest.approx(0.0)
    assert len(merged.costs_frame()) == 6
    assert not merged.slope_reliable
    assert math.isnan(merged.gap_slope)


@pytest.mark.calibration
def test_acceptance_deviations_gain_at_most_epsilon(acceptance_spec):
    grid = TimeGrid(1.0, 50)
    oracle = solve_lq_riccati(acceptance_spec, grid)
    model = create_game('lq_acceptance')
    deviations = [{'type': 'ScaledStrategy', 'factor': 0.9}, {'type': 'ScaledStrategy', 'factor': 1.1},
                  {'type': 'ZeroStrategy'}]
    report = nash_gap_study(model, oracle.to_field(radius=5.0), oracle.mean_flow(), [5, 10], deviations, 200, 0,
                            oracle.J, lattice_config=LatticeConfig(h=0.05, radius=5.0))
    assert report.passes, report.deviations_frame()


def test_strategy_names_register_once():
    registry = Registry('strategy')
    registry.register(EquilibriumStrategy)
    assert 'EquilibriumStrategy' in registry and registry.get('EquilibriumStrategy') is EquilibriumStrategy
    with pytest.raises(KeyError, match='already registered'):
        registry.register(EquilibriumStrategy)
    with pytest.raises(KeyError, match="Unknown strategy 'ZeroStrategy'"):
        registry.get('ZeroStrategy')
