import dataclasses

import numpy as np
import pytest
import torch

from pymfg.api_helpers import create_game, get_game_opts, list_games
from pymfg.data import DiscreteMeasure
from pymfg.models import (AssumptionViolation, LqSpec, TimeCoefficient, build_lq_model, build_model,
                          check_lq_assumptions, check_model_assumptions)
from pymfg.utils.tensor_util import DTYPE

from .conftest import lq_spec


def test_lq_spec_scalars_become_matrices(acceptance_spec):
    assert acceptance_spec.d == 1 and acceptance_spec.k == 1 and acceptance_spec.noise_dim == 1
    assert acceptance_spec.q.shape == (1, 1)
    np.testing.assert_allclose(acceptance_spec.control_cost_matrix(0.3), [[1.0]])


def test_lq_spec_rejects_unknown_and_missing_fields():
    opts = get_game_opts('lq_acceptance')
    opts.pop('type')
    opts.pop('mbar')
    opts['typo'] = 1.0
    with pytest.raises(ValueError, match='typo'):
        LqSpec.from_dict(opts)


def test_lq_spec_dict_round_trip(tmp_path, acceptance_spec):
    path = tmp_path / 'spec.json'
    acceptance_spec.save(str(path))
    loaded = LqSpec.load(str(path))
    assert loaded.to_dict() == acceptance_spec.to_dict()


def test_time_coefficient_is_right_continuous():
    coef = TimeCoefficient([[[1.0]], [[2.0]]], breakpoints=[0.5])
    assert coef(0.49)[0, 0] == 1.0
    assert coef(0.5)[0, 0] == 2.0
    assert not coef.is_constant
    assert coef.sup_norm() == 2.0


def test_piecewise_coefficients_from_options():
    spec = lq_spec('lq_acceptance', b1={'breakpoints': [0.5], 'values': [0.0, -1.0]})
    assert spec.piece_starts() == [0.0, 0.5]
    model = build_lq_model(spec)
    assert float(model.b1(0.75)) == -1.0


def test_acceptance_game_constants(acceptance_game):
    assert acceptance_game.is_lq
    assert acceptance_game.measure_dependence == 'mean-only'
    assert acceptance_game.lam == pytest.approx(0.5)
    assert acceptance_game.c_L >= 1.0
    assert acceptance_game.gamma == pytest.approx(0.5)


def test_degenerate_game_ignores_the_population(degenerate_game):
    assert degenerate_game.measure_dependence == 'none'


def test_lq_costs_match_definition(acceptance_game):
    x = torch.tensor([[2.0], [-1.0]], dtype=DTYPE)
    alpha = torch.tensor([[0.5], [1.0]], dtype=DTYPE)
    mu = DiscreteMeasure([[0.0], [2.0]])  # mean 1
    # 1/2 (x + 0.5)^2 + 1/2 alpha^2
    expected_f = 0.5 * (x[:, 0] + 0.5)**2 + 0.5 * alpha[:, 0]**2
    torch.testing.assert_close(acceptance_game.f(0.1, x, mu, alpha), expected_f)
    torch.testing.assert_close(acceptance_game.g(x, mu), 0.5 * (x[:, 0] + 0.5)**2)
    torch.testing.assert_close(acceptance_game.dg_dx(x, mu), x + 0.5)
    torch.testing.assert_close(acceptance_game.drift(0.1, x, mu, alpha), alpha)


def test_monotonicity_violation_is_advisory():
    report = check_lq_assumptions(lq_spec('lq_violating'))
    assert 'terminal monotonicity' in report.failures
    assert not report.passed
    assert report.blocking_failures == []
    assert not report.checks['weak solvability']['passed']
    assert any('FAIL' in line for line in report.summary_lines())


def test_acceptance_spec_passes_with_weak_conditions(acceptance_spec):
    report = check_lq_assumptions(acceptance_spec)
    assert report.passed
    assert report.checks['weak solvability']['passed']
    assert report.bounded_gradients is False


def test_bounded_gradient_regime_flag():
    report = check_lq_assumptions(lq_spec('lq_degenerate', q=0.0))
    assert report.bounded_gradients is True


def test_singular_control_cost_is_rejected():
    with pytest.raises(AssumptionViolation) as excinfo:
        build_lq_model(lq_spec('lq_acceptance', n=0.0))
    assert 'convexity in alpha' in excinfo.value.report.blocking_failures


def test_sampled_checks_pass_for_quartic_game():
    report = check_model_assumptions(create_game('quartic_control'), n_samples=50, seed=3)
    assert report.passed, report.summary_lines()


def test_sampled_checks_pass_for_lq_game(acceptance_game):
    report = check_model_assumptions(acceptance_game, n_samples=50, seed=3)
    assert report.passed, report.summary_lines()


def test_sampled_checks_flag_overstated_convexity(acceptance_game):
    model = dataclasses.replace(acceptance_game, lam=1.0)
    report = check_model_assumptions(model, n_samples=20, seed=0)
    assert 'convexity in alpha' in report.blocking_failures
    with pytest.raises(AssumptionViolation):
        report.require()


def test_sampled_checks_flag_wrong_gradient(acceptance_game):
    model = dataclasses.replace(acceptance_game, df_dx=lambda t, x, mu, alpha: 2 * x)
    report = check_model_assumptions(model, n_samples=20, seed=0)
    assert 'gradients' in report.failures


def test_build_model_from_options():
    model = build_model({'type': 'quartic_game', 'kappa': 0.3, 'x0': 0.5})
    assert model.name == 'quartic' and model.feedback_gain is None
    with pytest.raises(ValueError):
        build_model({'type': 'quartic_game', 'unknown': 1})
    with pytest.raises(KeyError):
        build_model({'type': 'no_such_game'})


def test_list_games():
    assert list_games('lq*') == ['lq_acceptance', 'lq_degenerate', 'lq_measure_free', 'lq_violating']
    assert list_games(with_oracle=False) == ['quartic_control']
    assert 'lq_violating' not in list_games(exclude_filters='*violating')
